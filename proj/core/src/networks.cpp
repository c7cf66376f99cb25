#include "cncreg/networks.hpp"

#include <cmath>

#include "cncreg/rng.hpp"
#include "net_engine.hpp"

namespace cncreg {

using detail::Mat;

LayerMap LayerMap::dense(int out_dim, int in_dim) {
    if (out_dim < 1 || in_dim < 1)
        throw ValueError("dense map needs positive dimensions");
    LayerMap m;
    m.kind = Kind::Dense;
    m.out_dim = out_dim;
    m.in_dim = in_dim;
    m.w.assign(static_cast<std::size_t>(out_dim) * static_cast<std::size_t>(in_dim), 0.0);
    return m;
}

LayerMap LayerMap::conv(int in_ch, int out_ch, int ksize, int stride,
                        int in_h, int in_w) {
    if (in_ch < 1 || out_ch < 1 || in_h < 1 || in_w < 1)
        throw ValueError("conv map needs positive dimensions");
    if (ksize < 1 || ksize % 2 == 0)
        throw ValueError("conv kernel size must be odd and positive");
    if (stride < 1)
        throw ValueError("conv stride must be positive");
    LayerMap m;
    m.kind = Kind::Conv;
    m.in_ch = in_ch;
    m.out_ch = out_ch;
    m.ksize = ksize;
    m.stride = stride;
    m.in_h = in_h;
    m.in_w = in_w;
    if (m.out_h() < 1 || m.out_w() < 1)
        throw ValueError("conv output collapses to zero size");
    m.w.assign(static_cast<std::size_t>(out_ch) * in_ch * ksize * ksize, 0.0);
    return m;
}

int LayerMap::out_h() const {
    if (kind == Kind::Dense)
        return 1;
    return (in_h + 2 * (ksize / 2) - ksize) / stride + 1;
}

int LayerMap::out_w() const {
    if (kind == Kind::Dense)
        return 1;
    return (in_w + 2 * (ksize / 2) - ksize) / stride + 1;
}

std::size_t LayerMap::input_size() const {
    if (kind == Kind::Dense)
        return static_cast<std::size_t>(in_dim);
    return static_cast<std::size_t>(in_ch) * in_h * in_w;
}

std::size_t LayerMap::output_size() const {
    if (kind == Kind::Dense)
        return static_cast<std::size_t>(out_dim);
    return static_cast<std::size_t>(out_ch) * out_h() * out_w();
}

std::size_t FeedForwardNet::input_size() const {
    if (blocks.empty())
        return head.input_size();
    return blocks.front().main.input_size();
}

int FeedForwardNet::output_dim() const { return head.out_dim; }

std::size_t FeedForwardNet::head_input_size() const {
    return static_cast<std::size_t>(head.in_dim);
}

namespace detail {

void validate_icnn_structure(const IcnnParams& p) {
    const FeedForwardNet& net = p.net;
    if (net.head.kind != LayerMap::Kind::Dense || net.head.out_dim != 1)
        throw ValueError("convex net head must be dense with scalar output");
    if (net.act != Activation::LeakyRelu)
        throw ValueError("convex net requires the leaky-rectifier activation");
    if (!(net.leaky_slope > 0.0) || !(net.leaky_slope < 1.0))
        throw ValueError("leaky slope must lie in (0, 1)");
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        const Block& b = net.blocks[i];
        if (i == 0) {
            if (b.skip || b.main_nonneg)
                throw ValueError("first convex block takes the raw input only");
        } else {
            if (!b.skip)
                throw ValueError("convex blocks after the first need an input skip");
            if (!b.main_nonneg)
                throw ValueError("convex blocks after the first must constrain weights");
            if (b.skip->input_size() != net.input_size())
                throw ValueError("skip map input size mismatch");
            if (b.main.input_size() != net.blocks[i - 1].main.output_size())
                throw ValueError("block input size mismatch");
        }
        if (b.bias.size() !=
            static_cast<std::size_t>(b.main.kind == LayerMap::Kind::Conv
                                         ? b.main.out_ch
                                         : b.main.out_dim))
            throw ValueError("bias length mismatch");
    }
    if (!p.net.head_nonneg && p.constrained)
        throw ValueError("convex net head weights must be constrained");
}

void validate_smooth_structure(const SmoothNetParams& p) {
    const FeedForwardNet& net = p.net;
    if (net.head.kind != LayerMap::Kind::Dense)
        throw ValueError("smooth net head must be dense");
    if (net.head_nonneg)
        throw ValueError("smooth net head is unconstrained");
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        const Block& b = net.blocks[i];
        if (b.skip || b.main_nonneg)
            throw ValueError("smooth net blocks are plain stages");
        if (i > 0 && b.main.input_size() != net.blocks[i - 1].main.output_size())
            throw ValueError("block input size mismatch");
    }
}

} // namespace detail

namespace {

void fill_normal(std::vector<double>& w, Rng& rng, double scale, bool nonneg) {
    for (double& v : w) {
        const double g = rng.normal() * scale;
        v = nonneg ? std::abs(g) * 0.5 : g;
    }
}

double fan_in(const LayerMap& m) {
    if (m.kind == LayerMap::Kind::Dense)
        return static_cast<double>(m.in_dim);
    return static_cast<double>(m.in_ch) * m.ksize * m.ksize;
}

void init_map(LayerMap& m, Rng& rng, bool nonneg) {
    fill_normal(m.w, rng, std::sqrt(2.0 / fan_in(m)), nonneg);
}

Mat col_from_span(std::span<const double> x) {
    Mat m(static_cast<Eigen::Index>(x.size()), 1);
    for (std::size_t i = 0; i < x.size(); ++i)
        m(static_cast<Eigen::Index>(i), 0) = x[i];
    return m;
}

void require_input(const FeedForwardNet& net, std::span<const double> x,
                   const char* what) {
    if (x.size() != net.input_size())
        throw ValueError(std::string(what) + ": input length mismatch");
}

void check_constrained_weights(const IcnnParams& p) {
    if (!p.constrained)
        return;
    for (const Block& b : p.net.blocks) {
        if (!b.main_nonneg)
            continue;
        for (double v : b.main.w)
            if (v < 0.0)
                throw ValueError("convexity constraint violated: negative weight");
    }
    for (double v : p.net.head.w)
        if (v < 0.0)
            throw ValueError("convexity constraint violated: negative head weight");
}

} // namespace

IcnnParams IcnnParams::dense(int input_dim, std::span<const int> widths,
                             std::uint64_t seed, double leaky_slope) {
    if (input_dim < 1 || widths.empty())
        throw ValueError("convex net needs an input dim and at least one layer");
    Rng rng(Rng::fork(seed, 0x1c));
    IcnnParams p;
    p.net.act = Activation::LeakyRelu;
    p.net.leaky_slope = leaky_slope;
    int prev = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const int wdt = widths[i];
        if (wdt < 1)
            throw ValueError("layer width must be positive");
        Block b;
        if (i == 0) {
            b.main = LayerMap::dense(wdt, input_dim);
            init_map(b.main, rng, false);
        } else {
            b.main = LayerMap::dense(wdt, prev);
            b.main_nonneg = true;
            init_map(b.main, rng, true);
            b.skip = LayerMap::dense(wdt, input_dim);
            init_map(*b.skip, rng, false);
        }
        b.bias.assign(static_cast<std::size_t>(wdt), 0.0);
        p.net.blocks.push_back(std::move(b));
        prev = wdt;
    }
    p.net.head = LayerMap::dense(1, prev);
    p.net.head_nonneg = true;
    init_map(p.net.head, rng, true);
    p.net.head_bias.assign(1, 0.0);
    detail::validate_icnn_structure(p);
    return p;
}

IcnnParams IcnnParams::conv(int in_h, int in_w, int n_layers, int channels,
                            int ksize, std::span<const int> strides,
                            std::uint64_t seed, double leaky_slope) {
    if (n_layers < 1 || channels < 1)
        throw ValueError("convex net needs at least one layer and channel");
    if (!strides.empty() && strides.size() != static_cast<std::size_t>(n_layers))
        throw ValueError("stride list must match the layer count");
    Rng rng(Rng::fork(seed, 0x1c));
    IcnnParams p;
    p.net.act = Activation::LeakyRelu;
    p.net.leaky_slope = leaky_slope;
    int h = in_h, w = in_w;
    for (int i = 0; i < n_layers; ++i) {
        const int stride = strides.empty() ? 1 : strides[static_cast<std::size_t>(i)];
        Block b;
        if (i == 0) {
            b.main = LayerMap::conv(1, channels, ksize, stride, h, w);
            init_map(b.main, rng, false);
        } else {
            b.main = LayerMap::conv(channels, channels, ksize, stride, h, w);
            b.main_nonneg = true;
            init_map(b.main, rng, true);
            // the input skip reaches the block output resolution in one strided hop
            const int th = b.main.out_h();
            const int sk = th > 1 ? (in_h - 1) / (th - 1) : in_h;
            b.skip = LayerMap::conv(1, channels, ksize, sk, in_h, in_w);
            init_map(*b.skip, rng, false);
            if (b.skip->out_h() != b.main.out_h() || b.skip->out_w() != b.main.out_w())
                throw ValueError("skip map resolution mismatch");
        }
        b.bias.assign(static_cast<std::size_t>(channels), 0.0);
        h = b.main.out_h();
        w = b.main.out_w();
        p.net.blocks.push_back(std::move(b));
    }
    p.net.head_pool = true;
    p.net.head = LayerMap::dense(1, channels);
    p.net.head_nonneg = true;
    init_map(p.net.head, rng, true);
    p.net.head_bias.assign(1, 0.0);
    detail::validate_icnn_structure(p);
    return p;
}

SmoothNetParams SmoothNetParams::dense(int input_dim, std::span<const int> widths,
                                       int out_dim, std::uint64_t seed,
                                       Activation act) {
    if (input_dim < 1 || out_dim < 1)
        throw ValueError("smooth net needs positive dimensions");
    Rng rng(Rng::fork(seed, 0x57));
    SmoothNetParams p;
    p.net.act = act;
    int prev = input_dim;
    for (int wdt : widths) {
        if (wdt < 1)
            throw ValueError("layer width must be positive");
        Block b;
        b.main = LayerMap::dense(wdt, prev);
        init_map(b.main, rng, false);
        b.bias.assign(static_cast<std::size_t>(wdt), 0.0);
        p.net.blocks.push_back(std::move(b));
        prev = wdt;
    }
    p.net.head = LayerMap::dense(out_dim, prev);
    init_map(p.net.head, rng, false);
    p.net.head_bias.assign(static_cast<std::size_t>(out_dim), 0.0);
    detail::validate_smooth_structure(p);
    return p;
}

SmoothNetParams SmoothNetParams::conv(int in_h, int in_w, int n_layers,
                                      int channels, int ksize,
                                      std::span<const int> strides, int out_dim,
                                      std::uint64_t seed, Activation act) {
    if (n_layers < 1 || channels < 1 || out_dim < 1)
        throw ValueError("smooth net needs positive dimensions");
    if (!strides.empty() && strides.size() != static_cast<std::size_t>(n_layers))
        throw ValueError("stride list must match the layer count");
    Rng rng(Rng::fork(seed, 0x57));
    SmoothNetParams p;
    p.net.act = act;
    int h = in_h, w = in_w, prev_ch = 1;
    for (int i = 0; i < n_layers; ++i) {
        const int stride = strides.empty() ? 1 : strides[static_cast<std::size_t>(i)];
        Block b;
        b.main = LayerMap::conv(prev_ch, channels, ksize, stride, h, w);
        init_map(b.main, rng, false);
        b.bias.assign(static_cast<std::size_t>(channels), 0.0);
        h = b.main.out_h();
        w = b.main.out_w();
        prev_ch = channels;
        p.net.blocks.push_back(std::move(b));
    }
    p.net.head_pool = true;
    p.net.head = LayerMap::dense(out_dim, channels);
    init_map(p.net.head, rng, false);
    p.net.head_bias.assign(static_cast<std::size_t>(out_dim), 0.0);
    detail::validate_smooth_structure(p);
    return p;
}

double icnn_forward(const IcnnParams& p, std::span<const double> x) {
    require_input(p.net, x, "icnn_forward");
    check_constrained_weights(p);
    detail::ForwardCache cache;
    detail::forward(p.net, col_from_span(x), cache);
    return cache.out(0, 0);
}

std::vector<double> smoothnet_forward(const SmoothNetParams& p,
                                      std::span<const double> x) {
    require_input(p.net, x, "smoothnet_forward");
    detail::ForwardCache cache;
    detail::forward(p.net, col_from_span(x), cache);
    std::vector<double> out(static_cast<std::size_t>(cache.out.rows()));
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = cache.out(static_cast<Eigen::Index>(i), 0);
    return out;
}

double iwcnn_forward(const IwcnnParams& p, std::span<const double> y) {
    const std::vector<double> mid = smoothnet_forward(p.smooth, y);
    return icnn_forward(p.inner, mid);
}

std::vector<double> icnn_input_gradient(const IcnnParams& p,
                                        std::span<const double> x) {
    require_input(p.net, x, "icnn_input_gradient");
    detail::ForwardCache cache;
    detail::forward(p.net, col_from_span(x), cache);
    Mat seed = Mat::Ones(1, 1);
    Mat gx;
    detail::backward(p.net, cache, seed, nullptr, &gx);
    return std::vector<double>(gx.data(), gx.data() + gx.rows());
}

std::vector<double> iwcnn_input_gradient(const IwcnnParams& p,
                                         std::span<const double> y) {
    // chain rule through the smooth stage: g_y = Dc(y)^T grad_inner(c(y))
    require_input(p.smooth.net, y, "iwcnn_input_gradient");
    detail::ForwardCache smooth_cache;
    detail::forward(p.smooth.net, col_from_span(y), smooth_cache);

    detail::ForwardCache inner_cache;
    detail::forward(p.inner.net, smooth_cache.out, inner_cache);
    Mat seed = Mat::Ones(1, 1);
    Mat g_mid;
    detail::backward(p.inner.net, inner_cache, seed, nullptr, &g_mid);

    Mat gy;
    detail::backward(p.smooth.net, smooth_cache, g_mid, nullptr, &gy);
    return std::vector<double>(gy.data(), gy.data() + gy.rows());
}

double regularizer_value(const RegularizerCnc& r, std::span<const double> x,
                         std::span<const double> y) {
    double sq = 0.0;
    for (double v : x)
        sq += v * v;
    return icnn_forward(r.theta1, x) + r.mu * sq + iwcnn_forward(r.theta2, y);
}

RegularizerGrad regularizer_gradient(const RegularizerCnc& r,
                                     std::span<const double> x,
                                     std::span<const double> y) {
    RegularizerGrad g;
    g.gx = icnn_input_gradient(r.theta1, x);
    for (std::size_t i = 0; i < g.gx.size(); ++i)
        g.gx[i] += 2.0 * r.mu * x[i];
    g.gy = iwcnn_input_gradient(r.theta2, y);
    return g;
}

void project_icnn_weights_inplace(IcnnParams& p) {
    if (!p.constrained)
        return; // architecture flags stay, enforcement is off
    for (Block& b : p.net.blocks) {
        if (!b.main_nonneg)
            continue;
        for (double& v : b.main.w)
            if (v < 0.0)
                v = 0.0;
    }
    if (p.net.head_nonneg) {
        for (double& v : p.net.head.w)
            if (v < 0.0)
                v = 0.0;
    }
}

IcnnParams project_icnn_weights(IcnnParams p) {
    project_icnn_weights_inplace(p);
    return p;
}

namespace {

// spectral norm of the affine head including the average-pool stage
double head_spectral_norm(const FeedForwardNet& net) {
    if (!net.head_pool)
        return detail::map_spectral_norm(net.head);
    int channels = net.head.in_dim;
    const std::size_t zsize = net.blocks.empty()
                                  ? net.input_size()
                                  : net.blocks.back().main.output_size();
    const int spatial = static_cast<int>(zsize / static_cast<std::size_t>(channels));
    Rng rng(0xC0FFEEULL);
    Mat v(static_cast<Eigen::Index>(zsize), 1);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        v(i, 0) = rng.normal();
    v /= v.norm();
    double lambda = 0.0;
    Mat pooled, out, back, gz;
    for (int it = 0; it < 300; ++it) {
        detail::head_input(net, v, pooled);
        detail::map_apply(net.head, pooled, out);
        detail::map_adjoint(net.head, out, back);
        // unpool
        gz.resize(v.rows(), 1);
        const double inv = 1.0 / spatial;
        for (int c = 0; c < channels; ++c)
            for (int s = 0; s < spatial; ++s)
                gz(static_cast<Eigen::Index>(c) * spatial + s, 0) = back(c, 0) * inv;
        lambda = (v.transpose() * gz)(0, 0);
        const double n = gz.norm();
        if (n == 0.0)
            return 0.0;
        v = gz / n;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

} // namespace

LipschitzCurvature bound_lipschitz_curvature(const SmoothNetParams& p) {
    detail::validate_smooth_structure(p);
    const double sd1 = detail::act_sup_d1(p.net.act, p.net.leaky_slope);
    const double sd2 = detail::act_sup_d2(p.net.act);

    double lip = 1.0;
    double curv = 0.0;
    for (const Block& b : p.net.blocks) {
        const double wn = detail::map_spectral_norm(b.main);
        // stage = activation after an affine map
        const double stage_lip = sd1 * wn;
        const double stage_curv = sd2 * wn * wn;
        curv = stage_curv * lip * lip + stage_lip * curv;
        lip = stage_lip * lip;
    }
    const double head_norm = head_spectral_norm(p.net);
    curv = head_norm * curv; // affine head: no curvature of its own
    lip = head_norm * lip;
    return {lip, curv};
}

double bound_lipschitz(const IcnnParams& p) {
    detail::validate_icnn_structure(p);
    const double sd1 = detail::act_sup_d1(p.net.act, p.net.leaky_slope);
    double lz = 0.0; // Lipschitz of x -> z_k
    for (std::size_t i = 0; i < p.net.blocks.size(); ++i) {
        const Block& b = p.net.blocks[i];
        const double wn = detail::map_spectral_norm(b.main);
        if (i == 0) {
            lz = sd1 * wn;
        } else {
            const double sn = detail::map_spectral_norm(*b.skip);
            lz = sd1 * (wn * lz + sn);
        }
    }
    return head_spectral_norm(p.net) * lz;
}

std::vector<ParamRef> param_refs(FeedForwardNet& net, const std::string& prefix) {
    std::vector<ParamRef> refs;
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        Block& b = net.blocks[i];
        const std::string base = prefix + ".b" + std::to_string(i);
        refs.push_back({&b.main.w, b.main_nonneg, base + ".main"});
        if (b.skip)
            refs.push_back({&b.skip->w, false, base + ".skip"});
        refs.push_back({&b.bias, false, base + ".bias"});
    }
    refs.push_back({&net.head.w, net.head_nonneg, prefix + ".head"});
    refs.push_back({&net.head_bias, false, prefix + ".head_bias"});
    return refs;
}

std::vector<ParamRef> param_refs(RegularizerCnc& r) {
    std::vector<ParamRef> refs = param_refs(r.theta1.net, "theta1");
    auto smooth = param_refs(r.theta2.smooth.net, "theta2.smooth");
    auto inner = param_refs(r.theta2.inner.net, "theta2.inner");
    refs.insert(refs.end(), smooth.begin(), smooth.end());
    refs.insert(refs.end(), inner.begin(), inner.end());
    return refs;
}

std::size_t param_count(const RegularizerCnc& r) {
    std::size_t n = 1; // the fixed quadratic coefficient
    auto& mut = const_cast<RegularizerCnc&>(r);
    for (const ParamRef& p : param_refs(mut))
        n += p.values->size();
    return n;
}

} // namespace cncreg
