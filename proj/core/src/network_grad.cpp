#include "net_engine.hpp"

#include <cmath>

#include "cncreg/rng.hpp"

namespace cncreg::detail {

namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::Map;

inline double leaky(double t, double a) { return t >= 0.0 ? t : a * t; }
inline double leaky_d1(double t, double a) { return t >= 0.0 ? 1.0 : a; }

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }
inline double silu(double t) { return t * sigmoid(t); }
inline double silu_d1(double t) {
    const double s = sigmoid(t);
    return s * (1.0 + t * (1.0 - s));
}
inline double silu_d2(double t) {
    const double s = sigmoid(t);
    return s * (1.0 - s) * (2.0 + t * (1.0 - 2.0 * s));
}

void act_eval(Activation a, double slope, const Mat& u, Mat& z) {
    z.resizeLike(u);
    const double* pu = u.data();
    double* pz = z.data();
    const auto n = static_cast<std::size_t>(u.size());
    switch (a) {
    case Activation::None:
        z = u;
        break;
    case Activation::LeakyRelu:
        for (std::size_t i = 0; i < n; ++i)
            pz[i] = leaky(pu[i], slope);
        break;
    case Activation::Silu:
        for (std::size_t i = 0; i < n; ++i)
            pz[i] = silu(pu[i]);
        break;
    }
}

void act_d1(Activation a, double slope, const Mat& u, Mat& d) {
    d.resizeLike(u);
    const double* pu = u.data();
    double* pd = d.data();
    const auto n = static_cast<std::size_t>(u.size());
    switch (a) {
    case Activation::None:
        d.setOnes();
        break;
    case Activation::LeakyRelu:
        for (std::size_t i = 0; i < n; ++i)
            pd[i] = leaky_d1(pu[i], slope);
        break;
    case Activation::Silu:
        for (std::size_t i = 0; i < n; ++i)
            pd[i] = silu_d1(pu[i]);
        break;
    }
}

void act_d2(Activation a, const Mat& u, Mat& d) {
    d.resizeLike(u);
    const double* pu = u.data();
    double* pd = d.data();
    const auto n = static_cast<std::size_t>(u.size());
    switch (a) {
    case Activation::None:
    case Activation::LeakyRelu:
        d.setZero();
        break;
    case Activation::Silu:
        for (std::size_t i = 0; i < n; ++i)
            pd[i] = silu_d2(pu[i]);
        break;
    }
}

// col(r, s) layout r = (c*k + ki)*k + kj, s = oy*ow + ox
void im2col(const LayerMap& m, const double* x, RMat& col) {
    const int k = m.ksize, p = m.ksize / 2, st = m.stride;
    const int ih = m.in_h, iw = m.in_w;
    const int oh = m.out_h(), ow = m.out_w();
    col.resize(m.in_ch * k * k, oh * ow);
    for (int c = 0; c < m.in_ch; ++c) {
        const double* plane = x + static_cast<std::size_t>(c) * ih * iw;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                double* dst = col.data() +
                              static_cast<std::size_t>((c * k + ki) * k + kj) *
                                  static_cast<std::size_t>(oh * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int y = oy * st - p + ki;
                    if (y < 0 || y >= ih) {
                        for (int ox = 0; ox < ow; ++ox)
                            dst[oy * ow + ox] = 0.0;
                        continue;
                    }
                    const double* src = plane + static_cast<std::size_t>(y) * iw;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int xx = ox * st - p + kj;
                        dst[oy * ow + ox] = (xx >= 0 && xx < iw) ? src[xx] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const LayerMap& m, const RMat& colg, double* gx) {
    const int k = m.ksize, p = m.ksize / 2, st = m.stride;
    const int ih = m.in_h, iw = m.in_w;
    const int oh = m.out_h(), ow = m.out_w();
    for (int c = 0; c < m.in_ch; ++c) {
        double* plane = gx + static_cast<std::size_t>(c) * ih * iw;
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const double* src = colg.data() +
                                    static_cast<std::size_t>((c * k + ki) * k + kj) *
                                        static_cast<std::size_t>(oh * ow);
                for (int oy = 0; oy < oh; ++oy) {
                    const int y = oy * st - p + ki;
                    if (y < 0 || y >= ih)
                        continue;
                    double* drow = plane + static_cast<std::size_t>(y) * iw;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int xx = ox * st - p + kj;
                        if (xx >= 0 && xx < iw)
                            drow[xx] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

void add_bias(const LayerMap& m, const std::vector<double>& bias, Mat& u) {
    if (m.kind == LayerMap::Kind::Dense) {
        for (Eigen::Index b = 0; b < u.cols(); ++b)
            for (Eigen::Index r = 0; r < u.rows(); ++r)
                u(r, b) += bias[static_cast<std::size_t>(r)];
        return;
    }
    const int osp = m.out_h() * m.out_w();
    for (Eigen::Index b = 0; b < u.cols(); ++b) {
        double* pc = u.col(b).data();
        for (int c = 0; c < m.out_ch; ++c) {
            const double bc = bias[static_cast<std::size_t>(c)];
            for (int s = 0; s < osp; ++s)
                pc[c * osp + s] += bc;
        }
    }
}

void bias_grad(const LayerMap& m, const Mat& gu, std::vector<double>& gb) {
    if (m.kind == LayerMap::Kind::Dense) {
        for (Eigen::Index b = 0; b < gu.cols(); ++b)
            for (Eigen::Index r = 0; r < gu.rows(); ++r)
                gb[static_cast<std::size_t>(r)] += gu(r, b);
        return;
    }
    const int osp = m.out_h() * m.out_w();
    for (Eigen::Index b = 0; b < gu.cols(); ++b) {
        const double* pc = gu.col(b).data();
        for (int c = 0; c < m.out_ch; ++c) {
            double acc = 0.0;
            for (int s = 0; s < osp; ++s)
                acc += pc[c * osp + s];
            gb[static_cast<std::size_t>(c)] += acc;
        }
    }
}

void pool_forward(int channels, int spatial, const Mat& z, Mat& pooled) {
    pooled.resize(channels, z.cols());
    const double inv = 1.0 / spatial;
    for (Eigen::Index b = 0; b < z.cols(); ++b) {
        const double* pz = z.col(b).data();
        for (int c = 0; c < channels; ++c) {
            double acc = 0.0;
            for (int s = 0; s < spatial; ++s)
                acc += pz[c * spatial + s];
            pooled(c, b) = acc * inv;
        }
    }
}

void pool_backward(int channels, int spatial, const Mat& gp, Mat& gz) {
    gz.resize(static_cast<Eigen::Index>(channels) * spatial, gp.cols());
    const double inv = 1.0 / spatial;
    for (Eigen::Index b = 0; b < gp.cols(); ++b) {
        double* pg = gz.col(b).data();
        for (int c = 0; c < channels; ++c) {
            const double v = gp(c, b) * inv;
            for (int s = 0; s < spatial; ++s)
                pg[c * spatial + s] = v;
        }
    }
}

struct HeadGeom {
    int channels = 0;
    int spatial = 1;
};

HeadGeom head_geom(const FeedForwardNet& net) {
    HeadGeom g;
    if (net.blocks.empty()) {
        g.channels = static_cast<int>(net.input_size());
        g.spatial = 1;
        return g;
    }
    const LayerMap& last = net.blocks.back().main;
    if (last.kind == LayerMap::Kind::Conv) {
        g.channels = last.out_ch;
        g.spatial = last.out_h() * last.out_w();
    } else {
        g.channels = last.out_dim;
        g.spatial = 1;
    }
    return g;
}

} // namespace

void map_apply(const LayerMap& m, const Mat& x, Mat& y) {
    if (m.kind == LayerMap::Kind::Dense) {
        Map<const RMat> w(m.w.data(), m.out_dim, m.in_dim);
        y.noalias() = w * x;
        return;
    }
    const int osp = m.out_h() * m.out_w();
    y.resize(static_cast<Eigen::Index>(m.out_ch) * osp, x.cols());
    Map<const RMat> w(m.w.data(), m.out_ch, m.in_ch * m.ksize * m.ksize);
    thread_local RMat col;
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
        im2col(m, x.col(b).data(), col);
        Map<RMat> out(y.col(b).data(), m.out_ch, osp);
        out.noalias() = w * col;
    }
}

void map_adjoint(const LayerMap& m, const Mat& g, Mat& gx) {
    if (m.kind == LayerMap::Kind::Dense) {
        Map<const RMat> w(m.w.data(), m.out_dim, m.in_dim);
        gx.noalias() = w.transpose() * g;
        return;
    }
    const int osp = m.out_h() * m.out_w();
    gx.setZero(static_cast<Eigen::Index>(m.input_size()), g.cols());
    Map<const RMat> w(m.w.data(), m.out_ch, m.in_ch * m.ksize * m.ksize);
    thread_local RMat colg;
    for (Eigen::Index b = 0; b < g.cols(); ++b) {
        Map<const RMat> go(g.col(b).data(), m.out_ch, osp);
        colg.noalias() = w.transpose() * go;
        col2im_add(m, colg, gx.col(b).data());
    }
}

void map_grad_w(const LayerMap& m, const Mat& x, const Mat& gy,
                std::vector<double>& gw) {
    if (m.kind == LayerMap::Kind::Dense) {
        Map<RMat> g(gw.data(), m.out_dim, m.in_dim);
        g.noalias() += gy * x.transpose();
        return;
    }
    const int osp = m.out_h() * m.out_w();
    Map<RMat> g(gw.data(), m.out_ch, m.in_ch * m.ksize * m.ksize);
    thread_local RMat col;
    for (Eigen::Index b = 0; b < x.cols(); ++b) {
        im2col(m, x.col(b).data(), col);
        Map<const RMat> go(gy.col(b).data(), m.out_ch, osp);
        g.noalias() += go * col.transpose();
    }
}

double map_spectral_norm(const LayerMap& m, int iters, double tol) {
    Rng rng(0xC0FFEEULL);
    Mat v(m.input_size(), 1);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        v(i, 0) = rng.normal();
    double nv = v.norm();
    if (nv == 0.0)
        return 0.0;
    v /= nv;
    double lambda_prev = 0.0, lambda = 0.0;
    Mat y, w;
    for (int it = 0; it < iters; ++it) {
        map_apply(m, v, y);
        map_adjoint(m, y, w);
        lambda = (v.transpose() * w)(0, 0);
        const double nw = w.norm();
        if (nw == 0.0)
            return 0.0;
        v = w / nw;
        if (it > 0 && std::abs(lambda - lambda_prev) <= tol * std::abs(lambda))
            break;
        lambda_prev = lambda;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

void head_input(const FeedForwardNet& net, const Mat& z_last, Mat& h) {
    if (!net.head_pool) {
        h = z_last;
        return;
    }
    const HeadGeom g = head_geom(net);
    pool_forward(g.channels, g.spatial, z_last, h);
}

void forward(const FeedForwardNet& net, const Mat& x, ForwardCache& cache,
             const Mat* xdot) {
    const bool tangent = xdot != nullptr;
    cache.x = x;
    if (tangent)
        cache.xdot = *xdot;
    cache.blocks.resize(net.blocks.size());

    const Mat* cur = &cache.x;
    const Mat* curdot = tangent ? &cache.xdot : nullptr;
    Mat tmp;
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        const Block& blk = net.blocks[i];
        BlockCache& bc = cache.blocks[i];
        bc.in = *cur;
        map_apply(blk.main, bc.in, bc.u);
        if (blk.skip) {
            map_apply(*blk.skip, cache.x, tmp);
            bc.u += tmp;
        }
        add_bias(blk.main, blk.bias, bc.u);
        act_eval(net.act, net.leaky_slope, bc.u, bc.z);
        if (tangent) {
            bc.indot = *curdot;
            map_apply(blk.main, bc.indot, bc.udot);
            if (blk.skip) {
                map_apply(*blk.skip, cache.xdot, tmp);
                bc.udot += tmp;
            }
            Mat d1;
            act_d1(net.act, net.leaky_slope, bc.u, d1);
            bc.zdot = d1.cwiseProduct(bc.udot);
            curdot = &bc.zdot;
        }
        cur = &bc.z;
    }

    head_input(net, *cur, cache.head_in);
    map_apply(net.head, cache.head_in, cache.out);
    add_bias(net.head, net.head_bias, cache.out);
    if (tangent) {
        if (net.head_pool) {
            const HeadGeom g = head_geom(net);
            pool_forward(g.channels, g.spatial, *curdot, cache.head_in_dot);
        } else {
            cache.head_in_dot = *curdot;
        }
        map_apply(net.head, cache.head_in_dot, cache.outdot);
    }
}

void forward_tangent(const FeedForwardNet& net, ForwardCache& cache,
                     const Mat& xdot) {
    cache.xdot = xdot;
    const Mat* curdot = &cache.xdot;
    Mat tmp, d1;
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        const Block& blk = net.blocks[i];
        BlockCache& bc = cache.blocks[i];
        bc.indot = *curdot;
        map_apply(blk.main, bc.indot, bc.udot);
        if (blk.skip) {
            map_apply(*blk.skip, cache.xdot, tmp);
            bc.udot += tmp;
        }
        act_d1(net.act, net.leaky_slope, bc.u, d1);
        bc.zdot = d1.cwiseProduct(bc.udot);
        curdot = &bc.zdot;
    }
    if (net.head_pool) {
        const HeadGeom g = head_geom(net);
        pool_forward(g.channels, g.spatial, *curdot, cache.head_in_dot);
    } else {
        cache.head_in_dot = *curdot;
    }
    map_apply(net.head, cache.head_in_dot, cache.outdot);
}

void GradSink::init(const FeedForwardNet& net) {
    g.clear();
    for (const Block& blk : net.blocks) {
        g.emplace_back(blk.main.w.size(), 0.0);
        if (blk.skip)
            g.emplace_back(blk.skip->w.size(), 0.0);
        g.emplace_back(blk.bias.size(), 0.0);
    }
    g.emplace_back(net.head.w.size(), 0.0);
    g.emplace_back(net.head_bias.size(), 0.0);
}

void GradSink::scale(double s) {
    for (auto& t : g)
        for (double& v : t)
            v *= s;
}

namespace {

// shared core of backward and jvp_backward; the tangent cotangents are
// simply absent in the plain case
void backward_impl(const FeedForwardNet& net, const ForwardCache& cache,
                   const Mat& out_seed, const Mat* outdot_seed, GradSink* sink,
                   Mat* gx_out, Mat* gxdot_out) {
    const bool tangent = outdot_seed != nullptr;
    const HeadGeom hg = head_geom(net);

    // enumeration indices must mirror GradSink::init
    std::size_t slot = 0;
    auto block_slot = [&](std::size_t bi) {
        std::size_t s = 0;
        for (std::size_t i = 0; i < bi; ++i)
            s += net.blocks[i].skip ? 3 : 2;
        return s;
    };
    const std::size_t head_slot = block_slot(net.blocks.size());

    Mat gh = out_seed;
    Mat ghdot;
    if (tangent)
        ghdot = *outdot_seed;

    if (sink) {
        map_grad_w(net.head, cache.head_in, gh, sink->g[head_slot]);
        if (tangent)
            map_grad_w(net.head, cache.head_in_dot, ghdot, sink->g[head_slot]);
        bias_grad(net.head, gh, sink->g[head_slot + 1]);
    }

    Mat gz, gzdot, tmp;
    map_adjoint(net.head, gh, gz);
    if (net.head_pool) {
        tmp = gz;
        pool_backward(hg.channels, hg.spatial, tmp, gz);
    }
    if (tangent) {
        map_adjoint(net.head, ghdot, gzdot);
        if (net.head_pool) {
            tmp = gzdot;
            pool_backward(hg.channels, hg.spatial, tmp, gzdot);
        }
    }

    Mat gx_skip, gxdot_skip;
    const bool want_gx = gx_out != nullptr || sink != nullptr;
    if (want_gx) {
        gx_skip.setZero(static_cast<Eigen::Index>(net.input_size()), out_seed.cols());
        if (tangent)
            gxdot_skip.setZero(gx_skip.rows(), gx_skip.cols());
    }

    Mat d1, d2, gu, gudot;
    for (std::size_t ri = net.blocks.size(); ri-- > 0;) {
        const Block& blk = net.blocks[ri];
        const BlockCache& bc = cache.blocks[ri];
        act_d1(net.act, net.leaky_slope, bc.u, d1);
        gu = d1.cwiseProduct(gz);
        if (tangent) {
            act_d2(net.act, bc.u, d2);
            gu += d2.cwiseProduct(bc.udot).cwiseProduct(gzdot);
            gudot = d1.cwiseProduct(gzdot);
        }

        if (sink) {
            slot = block_slot(ri);
            map_grad_w(blk.main, bc.in, gu, sink->g[slot]);
            if (tangent)
                map_grad_w(blk.main, bc.indot, gudot, sink->g[slot]);
            if (blk.skip) {
                map_grad_w(*blk.skip, cache.x, gu, sink->g[slot + 1]);
                if (tangent)
                    map_grad_w(*blk.skip, cache.xdot, gudot, sink->g[slot + 1]);
            }
            bias_grad(blk.main, gu, sink->g[slot + (blk.skip ? 2 : 1)]);
        }

        if (blk.skip && want_gx) {
            map_adjoint(*blk.skip, gu, tmp);
            gx_skip += tmp;
            if (tangent) {
                map_adjoint(*blk.skip, gudot, tmp);
                gxdot_skip += tmp;
            }
        }

        map_adjoint(blk.main, gu, tmp);
        gz = tmp;
        if (tangent) {
            map_adjoint(blk.main, gudot, tmp);
            gzdot = tmp;
        }
    }

    if (gx_out) {
        *gx_out = gz;
        if (want_gx && gx_skip.size() > 0)
            *gx_out += gx_skip;
    }
    if (gxdot_out && tangent) {
        *gxdot_out = gzdot;
        if (gxdot_skip.size() > 0)
            *gxdot_out += gxdot_skip;
    }
}

} // namespace

void backward(const FeedForwardNet& net, const ForwardCache& cache,
              const Mat& out_seed, GradSink* sink, Mat* gx) {
    backward_impl(net, cache, out_seed, nullptr, sink, gx, nullptr);
}

void jvp_backward(const FeedForwardNet& net, const ForwardCache& cache,
                  const Mat& out_seed, const Mat& outdot_seed, GradSink* sink,
                  Mat* gx, Mat* gxdot) {
    backward_impl(net, cache, out_seed, &outdot_seed, sink, gx, gxdot);
}

double act_sup_d1(Activation a, double slope) {
    switch (a) {
    case Activation::None:
        return 1.0;
    case Activation::LeakyRelu:
        return std::max(1.0, std::abs(slope));
    case Activation::Silu:
        break;
    }
    // maximize silu' by ternary search; the maximizer sits near t = 2.4
    static const double cached = [] {
        double lo = 0.0, hi = 5.0;
        for (int i = 0; i < 200; ++i) {
            const double m1 = lo + (hi - lo) / 3.0;
            const double m2 = hi - (hi - lo) / 3.0;
            if (silu_d1(m1) < silu_d1(m2))
                lo = m1;
            else
                hi = m2;
        }
        return silu_d1(0.5 * (lo + hi));
    }();
    return cached;
}

double act_sup_d2(Activation a) {
    switch (a) {
    case Activation::None:
    case Activation::LeakyRelu:
        return 0.0;
    case Activation::Silu:
        break;
    }
    // |silu''| peaks at the origin (value 1/2); scan a grid to guard against
    // the negative lobe and polish the winner
    static const double cached = [] {
        double best = 0.0;
        for (int i = 0; i <= 10000; ++i) {
            const double t = -10.0 + i * 2e-3;
            best = std::max(best, std::abs(silu_d2(t)));
        }
        return best;
    }();
    return cached;
}

} // namespace cncreg::detail
