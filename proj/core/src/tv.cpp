#include <cmath>

#include "cncreg/solvers.hpp"

namespace cncreg {

namespace {

// gradient of sum sqrt(dx^2 + dy^2 + eps^2) with forward differences and
// replicated edges (differences past the border are zero)
void add_tv_gradient(const std::vector<double>& x, std::size_t h, std::size_t w,
                     double weight, double eps, std::vector<double>& grad) {
    const double e2 = eps * eps;
    for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t p = i * w + j;
            const double dx = j + 1 < w ? x[p + 1] - x[p] : 0.0;
            const double dy = i + 1 < h ? x[p + w] - x[p] : 0.0;
            const double inv = weight / std::sqrt(dx * dx + dy * dy + e2);
            grad[p] -= (dx + dy) * inv;
            if (j + 1 < w)
                grad[p + 1] += dx * inv;
            if (i + 1 < h)
                grad[p + w] += dy * inv;
        }
    }
}

std::vector<double> tv_initial_point(const LinearOperator& op,
                                     std::span<const double> y) {
    if (op.kind() == LinearOperator::Kind::Radon) {
        if (op.scale() == 0.0)
            throw ValueError("operator scale is zero");
        const RadonGeometry& g = op.geometry();
        Sinogram s(static_cast<std::size_t>(g.n_angles),
                   static_cast<std::size_t>(g.n_detectors));
        auto sd = s.tensor.data();
        for (std::size_t i = 0; i < sd.size(); ++i)
            sd[i] = static_cast<float>(y[i] / op.scale());
        return fbp(s, g).tensor.to_doubles();
    }
    return op.adjoint(y);
}

} // namespace

std::vector<double> tv_reconstruct(const LinearOperator& op,
                                   std::span<const double> y,
                                   const TvConfig& cfg) {
    if (y.size() != op.range_size())
        throw ValueError("measurement size does not match the operator");
    if (!(cfg.weight > 0.0) || !(cfg.epsilon > 0.0) || !(cfg.step_size > 0.0) ||
        cfg.n_steps < 0)
        throw ValueError("bad tv configuration");

    const auto dom = op.domain_shape();
    const std::size_t h = dom.size() == 2 ? dom[0] : 1;
    const std::size_t w = dom.size() == 2 ? dom[1] : dom[0];

    std::vector<double> x = tv_initial_point(op, y);
    std::vector<double> x_prev = x;
    std::vector<double> z(x.size());
    std::vector<double> grad;
    for (int k = 0; k < cfg.n_steps; ++k) {
        const double beta = k < 1 ? 0.0 : (k - 1.0) / (k + 2.0);
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] = x[i] + beta * (x[i] - x_prev[i]);
        const std::vector<double> az = op.apply(z);
        std::vector<double> resid(az.size());
        for (std::size_t i = 0; i < az.size(); ++i)
            resid[i] = 2.0 * (az[i] - y[i]);
        grad = op.adjoint(resid);
        add_tv_gradient(z, h, w, cfg.weight, cfg.epsilon, grad);
        x_prev = x;
        for (std::size_t i = 0; i < x.size(); ++i)
            x[i] = z[i] - cfg.step_size * grad[i];
    }
    return x;
}

} // namespace cncreg
