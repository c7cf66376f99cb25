#include "cncreg/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cncreg/rng.hpp"

namespace cncreg {

PiecewiseLinear1D::PiecewiseLinear1D(std::vector<double> breakpoints,
                                     std::vector<PwlPiece> pieces)
    : breaks_(std::move(breakpoints)), pieces_(std::move(pieces)) {
    if (pieces_.size() != breaks_.size() + 1)
        throw ValueError("need exactly one more piece than breakpoints");
    for (std::size_t i = 0; i + 1 < breaks_.size(); ++i)
        if (!(breaks_[i] < breaks_[i + 1]))
            throw ValueError("breakpoints must be strictly increasing");
    for (double b : breaks_)
        if (!std::isfinite(b))
            throw ValueError("breakpoints must be finite");
    for (std::size_t i = 0; i < breaks_.size(); ++i) {
        const double left = pieces_[i].slope * breaks_[i] + pieces_[i].intercept;
        const double right =
            pieces_[i + 1].slope * breaks_[i] + pieces_[i + 1].intercept;
        const double scale = std::max({1.0, std::abs(left), std::abs(right)});
        if (std::abs(left - right) > 1e-9 * scale)
            throw ValueError("pieces disagree at a breakpoint");
    }
}

PiecewiseLinear1D PiecewiseLinear1D::from_slopes(double x0, double f0,
                                                 std::vector<double> breakpoints,
                                                 std::vector<double> slopes) {
    if (slopes.size() != breakpoints.size() + 1)
        throw ValueError("need exactly one more slope than breakpoints");
    std::vector<PwlPiece> pieces(slopes.size());
    for (std::size_t i = 0; i < slopes.size(); ++i)
        pieces[i].slope = slopes[i];

    // piece index that owns x0 under the right-closed convention
    const std::size_t j = static_cast<std::size_t>(
        std::lower_bound(breakpoints.begin(), breakpoints.end(), x0) -
        breakpoints.begin());
    pieces[j].intercept = f0 - pieces[j].slope * x0;
    for (std::size_t i = j; i + 1 < pieces.size(); ++i)
        pieces[i + 1].intercept =
            pieces[i].intercept + (pieces[i].slope - pieces[i + 1].slope) * breakpoints[i];
    for (std::size_t i = j; i > 0; --i)
        pieces[i - 1].intercept =
            pieces[i].intercept +
            (pieces[i].slope - pieces[i - 1].slope) * breakpoints[i - 1];
    return PiecewiseLinear1D(std::move(breakpoints), std::move(pieces));
}

double PiecewiseLinear1D::eval(double x) const {
    const std::size_t i = static_cast<std::size_t>(
        std::lower_bound(breaks_.begin(), breaks_.end(), x) - breaks_.begin());
    return pieces_[i].slope * x + pieces_[i].intercept;
}

bool PiecewiseLinear1D::is_convex(double tol) const {
    for (std::size_t i = 0; i + 1 < pieces_.size(); ++i)
        if (pieces_[i + 1].slope < pieces_[i].slope - tol)
            return false;
    return true;
}

std::optional<ViolationWitness>
pwl_weak_convexity_witness(const PiecewiseLinear1D& f, double rho) {
    if (rho < 0.0)
        throw ValueError("claimed modulus must be nonnegative");
    const auto& pieces = f.pieces();
    const auto& breaks = f.breakpoints();

    // deepest concave kink
    std::size_t ki = 0;
    double drop = 0.0;
    for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
        const double d = pieces[i].slope - pieces[i + 1].slope;
        if (d > drop) {
            drop = d;
            ki = i;
        }
    }
    if (drop <= 0.0)
        return std::nullopt; // convex: every rho >= 0 holds

    const double b = breaks[ki];
    const double inf = std::numeric_limits<double>::infinity();
    const double gap_l = ki > 0 ? b - breaks[ki - 1] : inf;
    const double gap_r = ki + 1 < breaks.size() ? breaks[ki + 1] - b : inf;
    const double reach = rho > 0.0 ? drop / (2.0 * rho) : inf;
    double eps = std::min({reach, gap_l, gap_r}) / 2.0;
    if (!std::isfinite(eps))
        eps = 0.5; // single-kink function with no modulus claim

    ViolationWitness w;
    w.x1 = b - eps;
    w.x2 = b + eps;
    w.lambda = 0.5;
    w.lhs = f.eval(b);
    const double mean = 0.5 * (f.eval(w.x1) + f.eval(w.x2));
    const double quad = w.lambda * (1.0 - w.lambda) * (w.x1 - w.x2) * (w.x1 - w.x2);
    w.rhs = mean + rho * quad;
    w.implied_rho = (w.lhs - mean) / quad;
    return w;
}

double estimate_weak_convexity_modulus(
    const std::function<double(std::span<const double>)>& f, int dim,
    double lo, double hi, int n_triples, std::uint64_t seed) {
    if (dim < 1 || !(lo < hi))
        throw ValueError("bad sampling setup");
    if (n_triples < 100)
        throw ValueError("modulus estimation needs at least 100 triples");
    Rng rng(Rng::fork(seed, 0x7e));
    std::vector<double> a(static_cast<std::size_t>(dim));
    std::vector<double> b(static_cast<std::size_t>(dim));
    std::vector<double> mid(static_cast<std::size_t>(dim));
    // near-coincident pairs are skipped on a box-relative scale: below it the
    // quadratic slack falls under evaluation rounding and the ratio is noise
    const double denom_floor = 1e-8 * (hi - lo) * (hi - lo);
    double rho = 0.0;
    for (int t = 0; t < n_triples; ++t) {
        double d2 = 0.0;
        const double lam = t % 2 == 0 ? 0.5 : rng.uniform(0.05, 0.95);
        for (int i = 0; i < dim; ++i) {
            a[static_cast<std::size_t>(i)] = rng.uniform(lo, hi);
            b[static_cast<std::size_t>(i)] = rng.uniform(lo, hi);
            const double diff =
                a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
            d2 += diff * diff;
            mid[static_cast<std::size_t>(i)] =
                lam * a[static_cast<std::size_t>(i)] +
                (1.0 - lam) * b[static_cast<std::size_t>(i)];
        }
        const double denom = lam * (1.0 - lam) * d2;
        if (denom < denom_floor)
            continue;
        const double viol = f(mid) - lam * f(a) - (1.0 - lam) * f(b);
        rho = std::max(rho, viol / denom);
    }
    return rho;
}

namespace {

void validate_schedule(const ConvergenceSchedule& s) {
    if (s.deltas.size() != s.alphas.size() || s.deltas.empty())
        throw ValueError("schedule needs matching non-empty delta and alpha lists");
    for (std::size_t k = 0; k < s.deltas.size(); ++k)
        if (!(s.deltas[k] > 0.0) || !(s.alphas[k] > 0.0))
            throw ValueError("schedule entries must be positive");
    for (std::size_t k = 0; k + 1 < s.deltas.size(); ++k) {
        if (!(s.deltas[k + 1] < s.deltas[k]))
            throw ValueError("noise levels must decrease strictly");
        if (!(s.alphas[k + 1] < s.alphas[k]))
            throw ValueError("schedule violates alpha -> 0");
        const double r0 = s.deltas[k] / s.alphas[k];
        const double r1 = s.deltas[k + 1] / s.alphas[k + 1];
        if (!(r1 < r0))
            throw ValueError("schedule violates delta / alpha -> 0");
    }
}

bool all_finite(std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x))
            return false;
    return true;
}

} // namespace

ConvergenceReport convergence_experiment(const LinearOperator& op,
                                         const RegularizerCnc& r,
                                         std::span<const double> x_true,
                                         const ConvergenceSchedule& schedule,
                                         const SolveConfig& base, double tol,
                                         std::uint64_t seed) {
    validate_schedule(schedule);
    if (x_true.size() != op.domain_size())
        throw ValueError("ground truth size does not match the operator");
    if (!(tol > 0.0))
        throw ValueError("convergence tolerance must be positive");

    const std::vector<double> clean = op.apply(x_true);
    ConvergenceReport report;
    for (std::size_t k = 0; k < schedule.deltas.size(); ++k) {
        Rng rng(Rng::fork(seed, 100 + k));
        std::vector<double> noise(clean.size());
        double nn = 0.0;
        for (double& v : noise) {
            v = rng.normal();
            nn += v * v;
        }
        nn = std::sqrt(nn);
        if (nn == 0.0)
            throw ValueError("degenerate noise draw");
        std::vector<double> y(clean.size());
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] = clean[i] + schedule.deltas[k] * noise[i] / nn;

        SolveConfig cfg = base;
        cfg.alpha = schedule.alphas[k];
        const SolveResult sol = solve_variational(op, r, y, cfg);
        if (sol.aborted_nonfinite || !all_finite(sol.x))
            report.solver_failed = true;

        ConvergenceRow row;
        row.delta = schedule.deltas[k];
        row.alpha = schedule.alphas[k];
        double e2 = 0.0;
        for (std::size_t i = 0; i < x_true.size(); ++i)
            e2 += (sol.x[i] - x_true[i]) * (sol.x[i] - x_true[i]);
        row.error = std::sqrt(e2);
        row.objective = sol.trace.rows.back().objective;
        report.rows.push_back(row);
    }

    const std::size_t n = report.rows.size();
    const std::size_t w = std::min<std::size_t>(3, n);
    double early = 0.0;
    double late = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        early = std::max(early, report.rows[i].error);
        late = std::max(late, report.rows[n - 1 - i].error);
    }
    report.pass = !report.solver_failed && report.rows.back().error < tol &&
                  (n < 2 * w || late < early);
    return report;
}

StabilityReport stability_experiment(const LinearOperator& op,
                                     const RegularizerCnc& r, double alpha,
                                     double rho, std::span<const double> y,
                                     int n_perturbations, double magnitude,
                                     const SolveConfig& base, double tol,
                                     std::uint64_t seed) {
    if (y.size() != op.range_size())
        throw ValueError("measurement size does not match the operator");
    if (!(alpha > 0.0) || rho < 0.0 || tol < 0.0)
        throw ValueError("bad stability setup");
    if (n_perturbations < 1 || !(magnitude > 0.0))
        throw ValueError("bad perturbation setup");
    if (alpha * rho > 1.0)
        throw ValueError("stability bound requires alpha * rho <= 1");
    if (!(r.mu > 0.0))
        throw ValueError("stability bound requires mu > 0");

    SolveConfig cfg = base;
    cfg.alpha = alpha;
    const SolveResult s1 = solve_variational(op, r, y, cfg);

    const double op_norm = estimate_operator_norm(op, 1000, 1e-12, 23).value;
    StabilityReport rep;
    rep.n_perturbations = n_perturbations;
    rep.bound = 2.0 * op_norm * magnitude / (alpha * r.mu) + tol;
    rep.all_within = true;

    Rng rng(Rng::fork(seed, 0x5b));
    std::vector<double> y2(y.size());
    std::vector<double> dy(y.size());
    for (int p = 0; p < n_perturbations; ++p) {
        double nn = 0.0;
        for (double& v : dy) {
            v = rng.normal();
            nn += v * v;
        }
        nn = std::sqrt(nn);
        if (nn == 0.0)
            throw ValueError("degenerate noise draw");
        for (std::size_t i = 0; i < y.size(); ++i)
            y2[i] = y[i] + magnitude * dy[i] / nn;

        const SolveResult s2 = solve_variational(op, r, y2, cfg);
        double d2 = 0.0;
        for (std::size_t i = 0; i < s1.x.size(); ++i)
            d2 += (s1.x[i] - s2.x[i]) * (s1.x[i] - s2.x[i]);
        const double dist = std::sqrt(d2);
        rep.max_distance = std::max(rep.max_distance, dist);
        rep.max_ratio = std::max(rep.max_ratio, dist / rep.bound);
        if (!(dist <= rep.bound))
            rep.all_within = false;
    }
    return rep;
}

} // namespace cncreg
