#include "cncreg/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "net_engine.hpp"

namespace cncreg {

using detail::Mat;

RegimeInfo classify_regime(double alpha, double mu, double rho,
                           double op_norm) {
    if (!(alpha > 0.0) || mu < 0.0 || rho < 0.0 || op_norm < 0.0)
        throw ValueError("regime classification needs alpha > 0 and "
                         "nonnegative mu, rho, operator norm");
    RegimeInfo info;
    if (alpha * rho <= 1.0) {
        info.regime = Regime::StronglyConvex;
        info.modulus = alpha * mu;
    } else {
        info.regime = Regime::WeaklyConvex;
        info.modulus = (alpha * rho - 1.0) * op_norm * op_norm - alpha * mu;
    }
    return info;
}

namespace {

Mat col_from(std::span<const double> x) {
    Mat m(static_cast<Eigen::Index>(x.size()), 1);
    for (std::size_t i = 0; i < x.size(); ++i)
        m(static_cast<Eigen::Index>(i), 0) = x[i];
    return m;
}

double icnn_value_grad(const IcnnParams& p, const Mat& x, Mat& gx) {
    detail::ForwardCache c;
    detail::forward(p.net, x, c);
    detail::backward(p.net, c, Mat::Ones(1, 1), nullptr, &gx);
    return c.out(0, 0);
}

double iwcnn_value_grad(const IwcnnParams& p, const Mat& y, Mat& gy) {
    detail::ForwardCache cs, ci;
    detail::forward(p.smooth.net, y, cs);
    detail::forward(p.inner.net, cs.out, ci);
    Mat gmid;
    detail::backward(p.inner.net, ci, Mat::Ones(1, 1), nullptr, &gmid);
    detail::backward(p.smooth.net, cs, gmid, nullptr, &gy);
    return ci.out(0, 0);
}

// objective and subgradient at one point, with a single operator apply and a
// single merged adjoint
double eval_objective(const LinearOperator& op, const RegularizerCnc& r,
                      double alpha, std::span<const double> x,
                      std::span<const double> y,
                      std::vector<double>* grad_out) {
    if (x.size() != op.domain_size() || y.size() != op.range_size())
        throw ValueError("objective: vector sizes do not match the operator");
    const std::vector<double> ax = op.apply(x);

    double data = 0.0;
    std::vector<double> resid(ax.size());
    for (std::size_t i = 0; i < ax.size(); ++i) {
        resid[i] = ax[i] - y[i];
        data += resid[i] * resid[i];
    }

    const Mat xm = col_from(x);
    Mat gx, gy;
    const double vc = icnn_value_grad(r.theta1, xm, gx);
    const double vwc = iwcnn_value_grad(r.theta2, col_from(ax), gy);
    const double obj = data + alpha * (vc + r.mu * xm.squaredNorm() + vwc);

    if (grad_out) {
        // A^T (2 resid + alpha g_wc) + alpha (g_c + 2 mu x)
        std::vector<double> w(resid.size());
        for (std::size_t i = 0; i < w.size(); ++i)
            w[i] = 2.0 * resid[i] + alpha * gy(static_cast<Eigen::Index>(i), 0);
        std::vector<double> g = op.adjoint(w);
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += alpha * (gx(static_cast<Eigen::Index>(i), 0) + 2.0 * r.mu * x[i]);
        *grad_out = std::move(g);
    }
    return obj;
}

double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

double trace_psnr(const std::vector<double>& x,
                  const std::vector<double>& ref) {
    if (ref.empty() || ref.size() != x.size())
        return std::numeric_limits<double>::quiet_NaN();
    double mse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]))
            return std::numeric_limits<double>::quiet_NaN();
        const double c = std::clamp(x[i], 0.0, 1.0);
        mse += (c - ref[i]) * (c - ref[i]);
    }
    mse /= static_cast<double>(x.size());
    if (mse == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

std::vector<double> initial_point(const LinearOperator& op,
                                  std::span<const double> y,
                                  const SolveConfig& cfg) {
    switch (cfg.init) {
    case InitMode::Provided:
        if (cfg.x0.size() != op.domain_size())
            throw ValueError("provided start has the wrong size");
        return cfg.x0;
    case InitMode::Zero:
        return std::vector<double>(op.domain_size(), 0.0);
    case InitMode::Fbp: {
        if (op.kind() != LinearOperator::Kind::Radon)
            throw ValueError("analytic initialization needs a tomographic operator");
        if (op.scale() == 0.0)
            throw ValueError("operator scale is zero");
        const RadonGeometry& g = op.geometry();
        // measurements taken through the scaled map go back to raw units
        Sinogram s(static_cast<std::size_t>(g.n_angles),
                   static_cast<std::size_t>(g.n_detectors));
        auto d = s.tensor.data();
        for (std::size_t i = 0; i < d.size(); ++i)
            d[i] = static_cast<float>(y[i] / op.scale());
        return fbp(s, g).tensor.to_doubles();
    }
    }
    throw ValueError("unknown initialization mode");
}

double step_for(const SolveConfig& cfg, const RegularizerCnc& r, int k) {
    switch (cfg.step_rule) {
    case StepRule::Constant:
        return cfg.step_size;
    case StepRule::Diminishing:
        return cfg.step_size / static_cast<double>(k + 1);
    case StepRule::StronglyConvex:
        if (!(cfg.alpha * r.mu > 0.0))
            throw ValueError("the strongly convex step rule needs alpha * mu > 0");
        return 2.0 / (cfg.alpha * r.mu * static_cast<double>(k + 2));
    }
    throw ValueError("unknown step rule");
}

void validate_solve_config(const SolveConfig& cfg) {
    if (!(cfg.alpha > 0.0))
        throw ValueError("alpha must be positive");
    if (cfg.n_steps < 0)
        throw ValueError("step count must be nonnegative");
    if (cfg.step_rule != StepRule::StronglyConvex && !(cfg.step_size > 0.0))
        throw ValueError("step size must be positive");
    if (!(cfg.momentum_scale >= 0.0) || cfg.momentum_scale > 1.0)
        throw ValueError("momentum scale must lie in [0, 1]");
}

bool finite_vec(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x))
            return false;
    return true;
}

void record_row(SolveTrace& trace, int k, double obj, double gn, double step,
                double psnr_val) {
    TraceRow row;
    row.iteration = k;
    row.objective = obj;
    row.grad_norm = gn;
    row.step = step;
    row.psnr = psnr_val;
    trace.rows.push_back(row);
}

void update_best(SolveResult& res, const TraceRow& row, bool has_ref,
                 double& best_key) {
    // maximize psnr against a reference, otherwise minimize the objective
    const double key = has_ref ? row.psnr : -row.objective;
    if (res.trace.rows.size() == 1 || key > best_key) {
        best_key = key;
        res.best_iteration = row.iteration;
        res.best_psnr = row.psnr;
        res.best_x = res.x;
    }
}

// true if the run must stop; res.x falls back to the best iterate seen
bool abort_if_nonfinite(SolveResult& res, double obj, double grad_norm) {
    if (std::isfinite(obj) && std::isfinite(grad_norm) && finite_vec(res.x))
        return false;
    res.aborted_nonfinite = true;
    if (!res.best_x.empty())
        res.x = res.best_x;
    return true;
}

} // namespace

double objective(const LinearOperator& op, const RegularizerCnc& r,
                 double alpha, std::span<const double> x,
                 std::span<const double> y) {
    return eval_objective(op, r, alpha, x, y, nullptr);
}

std::vector<double> objective_subgradient(const LinearOperator& op,
                                          const RegularizerCnc& r, double alpha,
                                          std::span<const double> x,
                                          std::span<const double> y) {
    std::vector<double> g;
    eval_objective(op, r, alpha, x, y, &g);
    return g;
}

SolveResult subgradient_descent(const LinearOperator& op,
                                const RegularizerCnc& r,
                                std::span<const double> y,
                                const SolveConfig& cfg) {
    validate_solve_config(cfg);
    SolveResult res;
    res.x = initial_point(op, y, cfg);
    const bool has_ref = !cfg.reference.empty();
    double best_key = 0.0;
    std::vector<double> grad;
    for (int k = 0; k <= cfg.n_steps; ++k) {
        const double obj = eval_objective(op, r, cfg.alpha, res.x, y, &grad);
        const double gn = norm2(grad);
        if (abort_if_nonfinite(res, obj, gn))
            break;
        const double step = k < cfg.n_steps ? step_for(cfg, r, k) : 0.0;
        record_row(res.trace, k, obj, gn, step, trace_psnr(res.x, cfg.reference));
        update_best(res, res.trace.rows.back(), has_ref, best_key);
        if (k < cfg.n_steps)
            for (std::size_t i = 0; i < res.x.size(); ++i)
                res.x[i] -= step * grad[i];
    }
    return res;
}

SolveResult accelerated_gd(const LinearOperator& op, const RegularizerCnc& r,
                           std::span<const double> y, const SolveConfig& cfg) {
    validate_solve_config(cfg);
    SolveResult res;
    res.x = initial_point(op, y, cfg);
    std::vector<double> x_prev = res.x;
    std::vector<double> z(res.x.size());
    const bool has_ref = !cfg.reference.empty();
    double best_key = 0.0;
    std::vector<double> grad, grad_z;
    for (int k = 0; k <= cfg.n_steps; ++k) {
        const double obj = eval_objective(op, r, cfg.alpha, res.x, y, &grad);
        const double gn = norm2(grad);
        if (abort_if_nonfinite(res, obj, gn))
            break;
        const double step = k < cfg.n_steps ? step_for(cfg, r, k) : 0.0;
        record_row(res.trace, k, obj, gn, step, trace_psnr(res.x, cfg.reference));
        update_best(res, res.trace.rows.back(), has_ref, best_key);
        if (k == cfg.n_steps)
            break;
        const double beta =
            k < 1 ? 0.0 : cfg.momentum_scale * (k - 1.0) / (k + 2.0);
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] = res.x[i] + beta * (res.x[i] - x_prev[i]);
        eval_objective(op, r, cfg.alpha, z, y, &grad_z);
        x_prev = res.x;
        for (std::size_t i = 0; i < z.size(); ++i)
            res.x[i] = z[i] - step * grad_z[i];
    }
    return res;
}

SolveResult solve_variational(const LinearOperator& op, const RegularizerCnc& r,
                              std::span<const double> y,
                              const SolveConfig& cfg) {
    return cfg.method == SolveMethod::Accelerated
               ? accelerated_gd(op, r, y, cfg)
               : subgradient_descent(op, r, y, cfg);
}

void write_trace_csv(const SolveTrace& trace, std::ostream& os) {
    os << "iteration,objective,grad_norm,step,psnr\n";
    char buf[160];
    for (const TraceRow& r : trace.rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.12g,%.12g,%.12g,%.12g\n",
                      r.iteration, r.objective, r.grad_norm, r.step, r.psnr);
        os << buf;
    }
}

} // namespace cncreg
