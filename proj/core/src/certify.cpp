#include <algorithm>
#include <cmath>
#include <limits>

#include "cncreg/networks.hpp"
#include "cncreg/rng.hpp"
#include "net_engine.hpp"

namespace cncreg {

namespace {

using detail::Mat;

Eigen::RowVectorXd iwcnn_batch(const IwcnnParams& p, const Mat& x) {
    if (p.inner.net.input_size() !=
        static_cast<std::size_t>(p.smooth.net.output_dim()))
        throw ValueError("inner net input does not match smooth net output");
    detail::ForwardCache cs, ci;
    detail::forward(p.smooth.net, x, cs);
    detail::forward(p.inner.net, cs.out, ci);
    return ci.out.row(0);
}

} // namespace

double max_midpoint_violation(const IcnnParams& p, int n_triples,
                              double input_scale, std::uint64_t seed) {
    if (n_triples < 1)
        throw ValueError("need at least one triple");
    const std::size_t m = p.net.input_size();
    Rng rng(Rng::fork(seed, 0x3a));
    double worst = -std::numeric_limits<double>::infinity();
    const int chunk = 256;
    Mat pts;
    detail::ForwardCache cache;
    for (int done = 0; done < n_triples; done += chunk) {
        const int n = std::min(chunk, n_triples - done);
        pts.resize(static_cast<Eigen::Index>(m), 3 * n);
        for (int i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                pts(static_cast<Eigen::Index>(j), 3 * i) = rng.normal() * input_scale;
                pts(static_cast<Eigen::Index>(j), 3 * i + 1) = rng.normal() * input_scale;
            }
            pts.col(3 * i + 2) = 0.5 * (pts.col(3 * i) + pts.col(3 * i + 1));
        }
        detail::forward(p.net, pts, cache);
        for (int i = 0; i < n; ++i) {
            const double fa = cache.out(0, 3 * i);
            const double fb = cache.out(0, 3 * i + 1);
            const double fm = cache.out(0, 3 * i + 2);
            worst = std::max(worst, fm - 0.5 * (fa + fb));
        }
    }
    return worst;
}

namespace {

ModulusCertificate certify_impl(const IwcnnParams& p, int n_samples,
                                std::uint64_t seed) {
    if (n_samples < 100)
        throw ValueError("certification needs at least 100 samples");
    ModulusCertificate cert;
    cert.lipschitz = bound_lipschitz(p.inner);
    cert.beta = bound_lipschitz_curvature(p.smooth).curvature;
    cert.rho_bound = cert.lipschitz * cert.beta;
    cert.samples = n_samples;
    cert.seed = seed;

    // sampled lower bound: violation of the convexity inequality normalized
    // by lambda (1 - lambda) ||a - b||^2, the exact quadratic gap
    const std::size_t m = p.smooth.net.input_size();
    Rng rng(Rng::fork(seed, 0x3b));
    double rho = 0.0;
    const int chunk = 256;
    Mat pts;
    for (int done = 0; done < n_samples; done += chunk) {
        const int n = std::min(chunk, n_samples - done);
        pts.resize(static_cast<Eigen::Index>(m), 3 * n);
        std::vector<double> lambda(static_cast<std::size_t>(n));
        std::vector<double> dist2(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            lambda[static_cast<std::size_t>(i)] =
                ((done + i) % 2 == 0) ? 0.5 : rng.uniform(0.05, 0.95);
            for (std::size_t j = 0; j < m; ++j) {
                pts(static_cast<Eigen::Index>(j), 3 * i) = rng.normal();
                pts(static_cast<Eigen::Index>(j), 3 * i + 1) = rng.normal();
            }
            const double lam = lambda[static_cast<std::size_t>(i)];
            pts.col(3 * i + 2) =
                lam * pts.col(3 * i) + (1.0 - lam) * pts.col(3 * i + 1);
            dist2[static_cast<std::size_t>(i)] =
                (pts.col(3 * i) - pts.col(3 * i + 1)).squaredNorm();
        }
        const Eigen::RowVectorXd vals = iwcnn_batch(p, pts);
        for (int i = 0; i < n; ++i) {
            const double lam = lambda[static_cast<std::size_t>(i)];
            const double denom = lam * (1.0 - lam) * dist2[static_cast<std::size_t>(i)];
            if (denom < 1e-12)
                continue;
            const double viol = vals(3 * i + 2) - lam * vals(3 * i) -
                                (1.0 - lam) * vals(3 * i + 1);
            rho = std::max(rho, viol / denom);
        }
    }
    cert.empirical_rho = rho;
    return cert;
}

} // namespace

ModulusCertificate certify_weak_convexity(const IwcnnParams& p, int n_samples,
                                          std::uint64_t seed) {
    return certify_impl(p, n_samples, seed);
}

ModulusCertificate certify_weak_convexity(const RegularizerCnc& r, int n_samples,
                                          std::uint64_t seed) {
    // the convex part only adds convexity; the modulus is carried by the
    // measurement-domain term
    return certify_impl(r.theta2, n_samples, seed);
}

} // namespace cncreg
