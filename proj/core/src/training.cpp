#include "cncreg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "net_engine.hpp"

namespace cncreg {

using detail::Mat;

SampleStream::SampleStream(std::string name, std::size_t count, Mode mode,
                           std::uint64_t seed)
    : name_(std::move(name)), mode_(mode), rng_(Rng::fork(seed, 0x5a)) {
    if (count == 0)
        throw ValueError(name_ + ": empty sample stream");
    order_.resize(count);
    for (std::size_t i = 0; i < count; ++i)
        order_[i] = i;
    reshuffle();
}

void SampleStream::reshuffle() {
    for (std::size_t i = order_.size() - 1; i > 0; --i) {
        auto j = static_cast<std::size_t>(rng_.uniform() * static_cast<double>(i + 1));
        if (j > i)
            j = i;
        std::swap(order_[i], order_[j]);
    }
    pos_ = 0;
}

std::size_t SampleStream::next() {
    if (pos_ == order_.size()) {
        if (mode_ == Mode::Finite)
            throw ValueError(name_ + ": sample stream exhausted");
        reshuffle();
    }
    return order_[pos_++];
}

void SampleStream::take(std::span<std::size_t> out) {
    for (std::size_t& v : out)
        v = next();
}

namespace {

Mat batch_to_mat(const std::vector<std::vector<double>>& rows,
                 std::size_t expect, const char* what) {
    if (rows.empty())
        throw ValueError(std::string(what) + ": empty batch");
    Mat m(static_cast<Eigen::Index>(expect), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t b = 0; b < rows.size(); ++b) {
        if (rows[b].size() != expect)
            throw ValueError(std::string(what) + ": sample length mismatch");
        for (std::size_t i = 0; i < expect; ++i)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = rows[b][i];
    }
    return m;
}

// loss seed: +1/n on real columns, -1/n on fake columns
Mat loss_seed(int n) {
    Mat s(1, 2 * n);
    const double inv = 1.0 / n;
    for (int b = 0; b < n; ++b) {
        s(0, b) = inv;
        s(0, n + b) = -inv;
    }
    return s;
}

// hinge coefficients d penalty / d ||g||, folded with the mean and the
// penalty weight; zero where the norm sits inside the unit ball
Mat hinge_seed(const std::vector<double>& norms, double gp_weight, int n) {
    Mat k = Mat::Zero(1, n);
    for (int b = 0; b < n; ++b) {
        const double nb = norms[static_cast<std::size_t>(b)];
        if (nb > 1.0)
            k(0, b) = gp_weight * 2.0 * (nb - 1.0) / (nb * n);
    }
    return k;
}

double hinge_penalty(const std::vector<double>& norms) {
    double p = 0.0;
    for (double nb : norms)
        p += nb > 1.0 ? (nb - 1.0) * (nb - 1.0) : 0.0;
    return p / static_cast<double>(norms.size());
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / static_cast<double>(v.size());
}

} // namespace

CriticEval eval_convex_critic(const IcnnParams& p, double mu,
                              const std::vector<std::vector<double>>& real,
                              const std::vector<std::vector<double>>& fake,
                              std::span<const double> mix, double gp_weight,
                              std::vector<std::vector<double>>* grads) {
    if (real.size() != fake.size() || real.size() != mix.size())
        throw ValueError("critic batch: real, fake and mix sizes must match");
    const std::size_t m = p.net.input_size();
    const int n = static_cast<int>(real.size());
    const Mat xr = batch_to_mat(real, m, "critic real");
    const Mat xf = batch_to_mat(fake, m, "critic fake");

    Mat both(m, 2 * n);
    both.leftCols(n) = xr;
    both.rightCols(n) = xf;

    detail::ForwardCache c1;
    detail::forward(p.net, both, c1);

    double mean_r = 0.0, mean_f = 0.0;
    for (int b = 0; b < n; ++b) {
        mean_r += c1.out(0, b) + mu * both.col(b).squaredNorm();
        mean_f += c1.out(0, n + b) + mu * both.col(n + b).squaredNorm();
    }
    mean_r /= n;
    mean_f /= n;

    detail::GradSink sink;
    if (grads) {
        sink.init(p.net);
        detail::backward(p.net, c1, loss_seed(n), &sink, nullptr);
    }

    // interpolates carry the unit gradient-norm target
    Mat xi(m, n);
    for (int b = 0; b < n; ++b) {
        const double u = mix[static_cast<std::size_t>(b)];
        xi.col(b) = u * xr.col(b) + (1.0 - u) * xf.col(b);
    }
    detail::ForwardCache c2;
    detail::forward(p.net, xi, c2);
    Mat g;
    detail::backward(p.net, c2, Mat::Ones(1, n), nullptr, &g);
    g += 2.0 * mu * xi;

    std::vector<double> norms(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b)
        norms[static_cast<std::size_t>(b)] = g.col(b).norm();

    CriticEval ev;
    ev.penalty = hinge_penalty(norms);
    ev.grad_norm_mean = mean_of(norms);
    ev.loss = mean_r - mean_f + gp_weight * ev.penalty;

    if (grads) {
        const Mat k = hinge_seed(norms, gp_weight, n);
        if (k.cwiseAbs().maxCoeff() > 0.0) {
            detail::forward_tangent(p.net, c2, g);
            detail::jvp_backward(p.net, c2, Mat::Zero(1, n), k, &sink, nullptr,
                                 nullptr);
        }
        *grads = std::move(sink.g);
    }
    return ev;
}

CriticEval eval_weakly_convex_critic(const IwcnnParams& p,
                                     const std::vector<std::vector<double>>& real,
                                     const std::vector<std::vector<double>>& fake,
                                     std::span<const double> mix,
                                     double gp_weight,
                                     std::vector<std::vector<double>>* grads) {
    if (real.size() != fake.size() || real.size() != mix.size())
        throw ValueError("critic batch: real, fake and mix sizes must match");
    if (p.inner.net.input_size() !=
        static_cast<std::size_t>(p.smooth.net.output_dim()))
        throw ValueError("inner net input does not match smooth net output");
    const std::size_t m = p.smooth.net.input_size();
    const int n = static_cast<int>(real.size());
    const Mat yr = batch_to_mat(real, m, "critic real");
    const Mat yf = batch_to_mat(fake, m, "critic fake");

    Mat both(m, 2 * n);
    both.leftCols(n) = yr;
    both.rightCols(n) = yf;

    detail::ForwardCache cs1, ci1;
    detail::forward(p.smooth.net, both, cs1);
    detail::forward(p.inner.net, cs1.out, ci1);

    double mean_r = 0.0, mean_f = 0.0;
    for (int b = 0; b < n; ++b) {
        mean_r += ci1.out(0, b);
        mean_f += ci1.out(0, n + b);
    }
    mean_r /= n;
    mean_f /= n;

    detail::GradSink sink_s, sink_i;
    if (grads) {
        sink_s.init(p.smooth.net);
        sink_i.init(p.inner.net);
        Mat gmid;
        detail::backward(p.inner.net, ci1, loss_seed(n), &sink_i, &gmid);
        detail::backward(p.smooth.net, cs1, gmid, &sink_s, nullptr);
    }

    Mat yi(m, n);
    for (int b = 0; b < n; ++b) {
        const double u = mix[static_cast<std::size_t>(b)];
        yi.col(b) = u * yr.col(b) + (1.0 - u) * yf.col(b);
    }
    detail::ForwardCache cs2, ci2;
    detail::forward(p.smooth.net, yi, cs2);
    detail::forward(p.inner.net, cs2.out, ci2);
    Mat gmid2, g;
    detail::backward(p.inner.net, ci2, Mat::Ones(1, n), nullptr, &gmid2);
    detail::backward(p.smooth.net, cs2, gmid2, nullptr, &g);

    std::vector<double> norms(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b)
        norms[static_cast<std::size_t>(b)] = g.col(b).norm();

    CriticEval ev;
    ev.penalty = hinge_penalty(norms);
    ev.grad_norm_mean = mean_of(norms);
    ev.loss = mean_r - mean_f + gp_weight * ev.penalty;

    if (grads) {
        const Mat k = hinge_seed(norms, gp_weight, n);
        if (k.cwiseAbs().maxCoeff() > 0.0) {
            detail::forward_tangent(p.smooth.net, cs2, g);
            detail::forward_tangent(p.inner.net, ci2, cs2.outdot);
            Mat gm, gmdot;
            detail::jvp_backward(p.inner.net, ci2, Mat::Zero(1, n), k, &sink_i,
                                 &gm, &gmdot);
            detail::jvp_backward(p.smooth.net, cs2, gm, gmdot, &sink_s, nullptr,
                                 nullptr);
        }
        grads->clear();
        grads->reserve(sink_s.g.size() + sink_i.g.size());
        for (auto& t : sink_s.g)
            grads->push_back(std::move(t));
        for (auto& t : sink_i.g)
            grads->push_back(std::move(t));
    }
    return ev;
}

namespace {

std::vector<double> draw_mix(std::size_t n, std::uint64_t seed) {
    Rng rng(Rng::fork(seed, 0x6d));
    std::vector<double> mix(n);
    for (double& u : mix)
        u = rng.uniform();
    return mix;
}

} // namespace

double gradient_penalty(const IcnnParams& p, double mu,
                        const std::vector<std::vector<double>>& real,
                        const std::vector<std::vector<double>>& fake,
                        std::uint64_t seed) {
    return eval_convex_critic(p, mu, real, fake, draw_mix(real.size(), seed),
                              0.0, nullptr)
        .penalty;
}

double gradient_penalty(const IwcnnParams& p,
                        const std::vector<std::vector<double>>& real,
                        const std::vector<std::vector<double>>& fake,
                        std::uint64_t seed) {
    return eval_weakly_convex_critic(p, real, fake,
                                     draw_mix(real.size(), seed), 0.0, nullptr)
        .penalty;
}

double critic_loss(const IcnnParams& p, double mu,
                   const std::vector<std::vector<double>>& real,
                   const std::vector<std::vector<double>>& fake,
                   double gp_weight, std::uint64_t seed) {
    return eval_convex_critic(p, mu, real, fake, draw_mix(real.size(), seed),
                              gp_weight, nullptr)
        .loss;
}

double critic_loss(const IwcnnParams& p,
                   const std::vector<std::vector<double>>& real,
                   const std::vector<std::vector<double>>& fake,
                   double gp_weight, std::uint64_t seed) {
    return eval_weakly_convex_critic(p, real, fake,
                                     draw_mix(real.size(), seed), gp_weight,
                                     nullptr)
        .loss;
}

void rmsprop_init(RmspropState& st, const std::vector<ParamRef>& refs) {
    st.v.clear();
    st.v.reserve(refs.size());
    for (const ParamRef& r : refs)
        st.v.emplace_back(r.values->size(), 0.0);
}

void rmsprop_step(const std::vector<ParamRef>& refs,
                  const std::vector<std::vector<double>>& grads,
                  RmspropState& st, double lr, double decay, double eps) {
    if (grads.size() != refs.size() || st.v.size() != refs.size())
        throw ValueError("optimizer tensors out of shape");
    for (std::size_t i = 0; i < refs.size(); ++i) {
        if (grads[i].size() != refs[i].values->size())
            throw ValueError("gradient length mismatch: " + refs[i].name);
        for (double gv : grads[i])
            if (!std::isfinite(gv))
                throw ValueError("non-finite gradient: " + refs[i].name);
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
        std::vector<double>& p = *refs[i].values;
        std::vector<double>& v = st.v[i];
        const std::vector<double>& g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = decay * v[j] + (1.0 - decay) * g[j] * g[j];
            p[j] -= lr * g[j] / std::sqrt(v[j] + eps);
        }
    }
}

namespace {

void json_number(std::ostream& os, double v) {
    if (!std::isfinite(v)) {
        os << "null";
        return;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    os << buf;
}

void write_jsonl_row(std::ostream& os, const TrainLogRow& r) {
    os << "{\"iteration\":" << r.iteration << ",\"loss_c\":";
    json_number(os, r.loss_c);
    os << ",\"loss_wc\":";
    json_number(os, r.loss_wc);
    os << ",\"penalty_c\":";
    json_number(os, r.penalty_c);
    os << ",\"penalty_wc\":";
    json_number(os, r.penalty_wc);
    os << ",\"lipschitz_estimate\":";
    json_number(os, r.lipschitz_estimate);
    os << ",\"wallclock\":";
    json_number(os, r.wallclock);
    os << "}\n";
}

std::vector<std::vector<double>> gather(
    const std::vector<std::vector<double>>& pool,
    std::span<const std::size_t> idx) {
    std::vector<std::vector<double>> out;
    out.reserve(idx.size());
    for (std::size_t i : idx)
        out.push_back(pool[i]);
    return out;
}

} // namespace

TrainResult train_acncr(RegularizerCnc init, const LinearOperator& op,
                        const TrainDataset& data, const TrainConfig& cfg,
                        const CheckpointHook& hook, std::ostream* jsonl) {
    if (cfg.n_iterations < 0 || cfg.batch_size < 1)
        throw ValueError("bad training configuration");
    if (!(cfg.lr > 0.0) || !(cfg.gp_weight >= 0.0))
        throw ValueError("bad training configuration");
    if (data.real_images.empty() || data.artifact_images.empty() ||
        data.clean_sinograms.empty() || data.noisy_sinograms.empty())
        throw ValueError("training corpora must be non-empty");

    const NormEstimate nrm = estimate_operator_norm(op, 1000, 1e-12, 17);
    if (nrm.zero_operator || nrm.value < 0.99 || nrm.value > 1.01)
        throw ValueError("training requires a normalized forward operator");

    TrainResult res;
    res.params = std::move(init);

    std::vector<ParamRef> refs1 = param_refs(res.params.theta1.net, "theta1");
    std::vector<ParamRef> refs2 =
        param_refs(res.params.theta2.smooth.net, "theta2.smooth");
    {
        auto inner = param_refs(res.params.theta2.inner.net, "theta2.inner");
        refs2.insert(refs2.end(), inner.begin(), inner.end());
    }

    RmspropState st1, st2;
    rmsprop_init(st1, refs1);
    rmsprop_init(st2, refs2);

    // no index correlation across corpora: one shuffler per stream, each with
    // its own seed

    SampleStream real_stream("real images", data.real_images.size(),
                             SampleStream::Mode::Cycle, Rng::fork(cfg.seed, 1));
    SampleStream artifact_stream("artifact images", data.artifact_images.size(),
                                 SampleStream::Mode::Cycle,
                                 Rng::fork(cfg.seed, 2));
    SampleStream clean_stream("clean sinograms", data.clean_sinograms.size(),
                              SampleStream::Mode::Cycle, Rng::fork(cfg.seed, 3));
    SampleStream noisy_stream("noisy sinograms", data.noisy_sinograms.size(),
                              SampleStream::Mode::Cycle, Rng::fork(cfg.seed, 4));
    Rng mix_rng(Rng::fork(cfg.seed, 5));

    RegularizerCnc last_good = res.params;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> ia(static_cast<std::size_t>(cfg.batch_size));
    std::vector<std::size_t> ib(static_cast<std::size_t>(cfg.batch_size));
    std::vector<double> mix(static_cast<std::size_t>(cfg.batch_size));
    std::vector<std::vector<double>> g1, g2;

    for (int iter = 1; iter <= cfg.n_iterations; ++iter) {
        bool bad = false;
        CriticEval ev_c, ev_wc;
        try {
            real_stream.take(ia);
            artifact_stream.take(ib);
            for (double& u : mix)
                u = mix_rng.uniform();
            ev_c = eval_convex_critic(res.params.theta1, res.params.mu,
                                      gather(data.real_images, ia),
                                      gather(data.artifact_images, ib), mix,
                                      cfg.gp_weight, &g1);
            rmsprop_step(refs1, g1, st1, cfg.lr, cfg.rmsprop_decay,
                         cfg.rmsprop_eps);
            project_icnn_weights_inplace(res.params.theta1);

            clean_stream.take(ia);
            noisy_stream.take(ib);
            for (double& u : mix)
                u = mix_rng.uniform();
            ev_wc = eval_weakly_convex_critic(res.params.theta2,
                                              gather(data.clean_sinograms, ia),
                                              gather(data.noisy_sinograms, ib),
                                              mix, cfg.gp_weight, &g2);
            rmsprop_step(refs2, g2, st2, cfg.lr, cfg.rmsprop_decay,
                         cfg.rmsprop_eps);
            project_icnn_weights_inplace(res.params.theta2.inner);
        } catch (const ValueError&) {
            bad = true;
        }
        if (!bad && (!std::isfinite(ev_c.loss) || !std::isfinite(ev_wc.loss)))
            bad = true;
        if (bad) {
            // roll back to the last iteration that finished cleanly
            res.params = last_good;
            res.aborted_nonfinite = true;
            break;
        }
        last_good = res.params;
        res.iterations_run = iter;

        TrainLogRow row;
        row.iteration = iter;
        row.loss_c = ev_c.loss;
        row.loss_wc = ev_wc.loss;
        row.penalty_c = ev_c.penalty;
        row.penalty_wc = ev_wc.penalty;
        row.lipschitz_estimate =
            std::max(ev_c.grad_norm_mean, ev_wc.grad_norm_mean);
        row.wallclock = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
        res.log.push_back(row);
        if (jsonl && cfg.log_every > 0 &&
            (iter % cfg.log_every == 0 || iter == cfg.n_iterations))
            write_jsonl_row(*jsonl, row);
        if (hook && cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0)
            hook(iter, res.params);
    }
    return res;
}

namespace {

// max |f(a) - f(b)| / ||a - b|| over sampled cross-corpus pairs; the value
// batches come back column-aligned with the index draws
double max_secant(const std::vector<std::vector<double>>& pool_a,
                  const std::vector<std::vector<double>>& pool_b,
                  SampleStream& sa, SampleStream& sb, int n_pairs,
                  const std::function<void(const Mat&, const Mat&, Mat&, Mat&)>&
                      eval_values) {
    const std::size_t m = pool_a.front().size();
    const int chunk = 64;
    Mat a, b, va, vb;
    double worst = 0.0;
    for (int done = 0; done < n_pairs; done += chunk) {
        const int n = std::min(chunk, n_pairs - done);
        a.resize(static_cast<Eigen::Index>(m), n);
        b.resize(static_cast<Eigen::Index>(m), n);
        for (int k = 0; k < n; ++k) {
            const auto& ra = pool_a[sa.next()];
            const auto& rb = pool_b[sb.next()];
            if (ra.size() != m || rb.size() != m)
                throw ValueError("estimate: sample length mismatch");
            for (std::size_t j = 0; j < m; ++j) {
                a(static_cast<Eigen::Index>(j), k) = ra[j];
                b(static_cast<Eigen::Index>(j), k) = rb[j];
            }
        }
        eval_values(a, b, va, vb);
        for (int k = 0; k < n; ++k) {
            const double dist = (a.col(k) - b.col(k)).norm();
            if (dist < 1e-12)
                continue;
            worst = std::max(worst, std::abs(va(0, k) - vb(0, k)) / dist);
        }
    }
    return worst;
}

} // namespace

LipschitzEstimate empirical_lipschitz(const RegularizerCnc& r,
                                      const TrainDataset& data, int n_samples,
                                      std::uint64_t seed) {
    if (n_samples < 1)
        throw ValueError("need at least one sample");
    if (data.real_images.empty() || data.artifact_images.empty() ||
        data.clean_sinograms.empty() || data.noisy_sinograms.empty())
        throw ValueError("estimate needs non-empty corpora");

    SampleStream ra("real images", data.real_images.size(),
                    SampleStream::Mode::Cycle, Rng::fork(seed, 0x11));
    SampleStream rb("artifact images", data.artifact_images.size(),
                    SampleStream::Mode::Cycle, Rng::fork(seed, 0x12));
    SampleStream sa("clean sinograms", data.clean_sinograms.size(),
                    SampleStream::Mode::Cycle, Rng::fork(seed, 0x13));
    SampleStream sb("noisy sinograms", data.noisy_sinograms.size(),
                    SampleStream::Mode::Cycle, Rng::fork(seed, 0x14));

    LipschitzEstimate est;
    detail::ForwardCache c, cs, ci;
    est.convex_side = max_secant(
        data.real_images, data.artifact_images, ra, rb, n_samples,
        [&](const Mat& a, const Mat& b, Mat& va, Mat& vb) {
            detail::forward(r.theta1.net, a, c);
            va = c.out;
            for (Eigen::Index k = 0; k < a.cols(); ++k)
                va(0, k) += r.mu * a.col(k).squaredNorm();
            detail::forward(r.theta1.net, b, c);
            vb = c.out;
            for (Eigen::Index k = 0; k < b.cols(); ++k)
                vb(0, k) += r.mu * b.col(k).squaredNorm();
        });
    est.weakly_convex_side = max_secant(
        data.clean_sinograms, data.noisy_sinograms, sa, sb, n_samples,
        [&](const Mat& a, const Mat& b, Mat& va, Mat& vb) {
            detail::forward(r.theta2.smooth.net, a, cs);
            detail::forward(r.theta2.inner.net, cs.out, ci);
            va = ci.out;
            detail::forward(r.theta2.smooth.net, b, cs);
            detail::forward(r.theta2.inner.net, cs.out, ci);
            vb = ci.out;
        });
    return est;
}

} // namespace cncreg
