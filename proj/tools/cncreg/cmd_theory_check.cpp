#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "cncreg/networks.hpp"
#include "cncreg/rng.hpp"
#include "cncreg/theory.hpp"
#include "context.hpp"

namespace cncreg::cli {

namespace {

using nlohmann::json;

struct CheckRow {
    std::string name;
    bool pass = false;
    std::string detail;
};

// quadratic-only regularizer: every net zeroed out, so r_c = mu ||x||^2 and
// r_wc is constant. Closed-form minimizers make it the reference instance
// for the convergence and stability studies.
RegularizerCnc quadratic_only(int image_dim, int meas_dim, double mu) {
    const int hidden[] = {4};
    RegularizerCnc r;
    r.theta1 = IcnnParams::dense(image_dim, hidden, 1);
    r.theta2.smooth = SmoothNetParams::dense(meas_dim, hidden, 4, 2);
    r.theta2.inner = IcnnParams::dense(4, hidden, 3);
    r.mu = mu;
    for (ParamRef& p : param_refs(r))
        std::fill(p.values->begin(), p.values->end(), 0.0);
    return r;
}

PiecewiseLinear1D random_pwl(Rng& rng, bool force_convex) {
    const int n_breaks = 1 + static_cast<int>(rng.uniform() * 4.0);
    std::vector<double> breaks(n_breaks);
    for (double& b : breaks)
        b = -2.0 + 4.0 * rng.uniform();
    std::sort(breaks.begin(), breaks.end());
    for (std::size_t i = 1; i < breaks.size(); ++i)
        breaks[i] = std::max(breaks[i], breaks[i - 1] + 1e-3);
    std::vector<double> slopes(breaks.size() + 1);
    for (double& s : slopes)
        s = -3.0 + 6.0 * rng.uniform();
    if (force_convex)
        std::sort(slopes.begin(), slopes.end());
    return PiecewiseLinear1D::from_slopes(-3.0, rng.normal(), std::move(breaks),
                                          std::move(slopes));
}

bool witness_checks_out(const PiecewiseLinear1D& f, double rho,
                        const ViolationWitness& w) {
    const double mid = w.lambda * w.x1 + (1.0 - w.lambda) * w.x2;
    const double lhs = f(mid);
    const double gap = w.x1 - w.x2;
    const double rhs = w.lambda * f(w.x1) + (1.0 - w.lambda) * f(w.x2) +
                       rho * w.lambda * (1.0 - w.lambda) * gap * gap;
    const double scale = 1.0 + std::abs(lhs) + std::abs(rhs);
    return std::abs(lhs - w.lhs) <= 1e-9 * scale &&
           std::abs(rhs - w.rhs) <= 1e-9 * scale && w.lhs > w.rhs &&
           w.implied_rho > rho;
}

std::function<double(std::span<const double>)>
neg_sq_norm(double quadratic_shift) {
    return [quadratic_shift](std::span<const double> x) {
        double s = 0.0;
        for (double v : x)
            s += v * v;
        return (quadratic_shift - 1.0) * s;
    };
}

CheckRow check_pwl_detector(std::uint64_t seed, bool negative_control,
                            int n_estimate_triples) {
    CheckRow row{"pwl_convexity_detector", false, ""};
    Rng rng(Rng::fork(seed, 1));
    const double rhos[] = {1.0, 10.0, 100.0};
    int n_convex = 0, n_nonconvex = 0;
    for (int i = 0; i < 1000; ++i) {
        const bool tagged_convex = (i % 2) == 0;
        PiecewiseLinear1D f = random_pwl(rng, tagged_convex);
        if (negative_control && i == 500) {
            // injected stub: a tent has a concave kink yet arrives tagged
            // as convex, so a sound detector must trip on it
            f = PiecewiseLinear1D::from_slopes(-1.0, -1.0, {0.0}, {1.0, -1.0});
        }
        if (tagged_convex) {
            ++n_convex;
            if (!f.is_convex(1e-12)) {
                row.detail = "function tagged convex failed is_convex";
                return row;
            }
            for (double rho : rhos) {
                if (pwl_weak_convexity_witness(f, rho)) {
                    row.detail = "witness found against a convex function";
                    return row;
                }
            }
            if (i % 50 == 0) {
                const double est = estimate_weak_convexity_modulus(
                    [&f](std::span<const double> x) { return f(x[0]); }, 1,
                    -3.0, 3.0, n_estimate_triples, Rng::fork(seed, 900 + i));
                if (est > 1e-6) {
                    row.detail = "nonzero modulus estimated for a convex "
                                 "function";
                    return row;
                }
            }
        } else if (!f.is_convex(0.0)) {
            ++n_nonconvex;
            for (double rho : rhos) {
                const auto w = pwl_weak_convexity_witness(f, rho);
                if (!w || !witness_checks_out(f, rho, *w)) {
                    row.detail = "missing or inconsistent witness at rho " +
                                 std::to_string(rho);
                    return row;
                }
            }
        }
    }
    if (n_convex < 100 || n_nonconvex < 100) {
        row.detail = "sweep did not cover both classes";
        return row;
    }
    row.pass = true;
    row.detail = std::to_string(n_convex) + " convex / " +
                 std::to_string(n_nonconvex) + " non-convex functions checked";
    return row;
}

CheckRow check_max_of_affines(std::uint64_t seed) {
    CheckRow row{"pwl_max_of_affines", false, ""};
    Rng rng(Rng::fork(seed, 2));
    for (int i = 0; i < 200; ++i) {
        const PiecewiseLinear1D f = random_pwl(rng, true);
        for (int j = 0; j < 50; ++j) {
            const double x = -4.0 + 8.0 * rng.uniform();
            double best = -std::numeric_limits<double>::infinity();
            for (const PwlPiece& p : f.pieces())
                best = std::max(best, p.slope * x + p.intercept);
            if (std::abs(f(x) - best) > 1e-9 * (1.0 + std::abs(best))) {
                row.detail = "convex evaluation differs from max of pieces";
                return row;
            }
        }
    }
    row.pass = true;
    row.detail = "200 convex functions, 50 points each";
    return row;
}

CheckRow check_modulus_estimator(std::uint64_t seed, int n_triples) {
    CheckRow row{"modulus_estimator", false, ""};
    const double convex = estimate_weak_convexity_modulus(
        neg_sq_norm(2.0), 4, -1.0, 1.0, n_triples, Rng::fork(seed, 3));
    if (convex > 1e-9) {
        row.detail = "positive modulus on ||x||^2";
        return row;
    }
    // every sampled ratio of -||x||^2 cancels to exactly 1
    const double concave = estimate_weak_convexity_modulus(
        neg_sq_norm(0.0), 4, -1.0, 1.0, n_triples, Rng::fork(seed, 4));
    if (std::abs(concave - 1.0) > 0.02) {
        row.detail = "modulus of -||x||^2 is " + std::to_string(concave);
        return row;
    }
    // adding rho ||x||^2 shifts the modulus down by exactly rho
    const double shifted = estimate_weak_convexity_modulus(
        neg_sq_norm(0.4), 4, -1.0, 1.0, n_triples, Rng::fork(seed, 5));
    if (std::abs(shifted - 0.6) > 0.02) {
        row.detail = "quadratic shift identity violated: " +
                     std::to_string(shifted);
        return row;
    }
    row.pass = true;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "0 / %.4f / %.4f at %d triples", concave,
                  shifted, n_triples);
    row.detail = buf;
    return row;
}

CheckRow check_certificates(std::uint64_t seed) {
    CheckRow row{"modulus_certificates", false, ""};
    double worst_margin = 0.0;
    for (int i = 0; i < 5; ++i) {
        IwcnnParams p;
        const int sm[] = {8, 8};
        const int ic[] = {8};
        p.smooth = SmoothNetParams::dense(6, sm, 5, Rng::fork(seed, 10 + i));
        p.inner = IcnnParams::dense(5, ic, Rng::fork(seed, 20 + i));
        const ModulusCertificate cert =
            certify_weak_convexity(p, 400, Rng::fork(seed, 30 + i));
        if (std::abs(cert.rho_bound - cert.lipschitz * cert.beta) >
            1e-12 * (1.0 + cert.rho_bound)) {
            row.detail = "certificate bound is not lipschitz * beta";
            return row;
        }
        if (cert.empirical_rho > cert.rho_bound * (1.0 + 1e-9)) {
            row.detail = "sampled modulus exceeds the certified bound";
            return row;
        }
        worst_margin = std::max(
            worst_margin, cert.rho_bound > 0.0
                              ? cert.empirical_rho / cert.rho_bound
                              : 0.0);
    }
    row.pass = true;
    char buf[80];
    std::snprintf(buf, sizeof(buf),
                  "5 critics, worst sampled/bound ratio %.3f", worst_margin);
    row.detail = buf;
    return row;
}

CheckRow check_icnn_midpoint(std::uint64_t seed) {
    CheckRow row{"icnn_midpoint", false, ""};
    const int widths[] = {8, 8};
    const int strides[] = {2, 1};
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        const IcnnParams dense =
            IcnnParams::dense(6, widths, Rng::fork(seed, 40 + i));
        worst = std::max(worst, max_midpoint_violation(
                                    dense, 200, 1.0, Rng::fork(seed, 50 + i)));
        const IcnnParams conv = IcnnParams::conv(8, 8, 2, 4, 3, strides,
                                                 Rng::fork(seed, 60 + i));
        worst = std::max(worst, max_midpoint_violation(
                                    conv, 200, 1.0, Rng::fork(seed, 70 + i)));
    }
    row.pass = worst <= 1e-9;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "worst midpoint violation %.3g", worst);
    row.detail = buf;
    if (!row.pass)
        row.detail += " (expected rounding level)";
    return row;
}

CheckRow check_regime_boundary() {
    CheckRow row{"regime_boundary", false, ""};
    const RegimeInfo at = classify_regime(0.5, 0.8, 2.0, 1.0);
    const RegimeInfo past = classify_regime(0.5, 0.8, 2.0 + 1e-6, 1.0);
    if (at.regime != Regime::StronglyConvex ||
        std::abs(at.modulus - 0.4) > 1e-15) {
        row.detail = "alpha rho = 1 must stay strongly convex with modulus "
                     "alpha mu";
        return row;
    }
    if (past.regime != Regime::WeaklyConvex) {
        row.detail = "alpha rho > 1 must leave the strongly convex regime";
        return row;
    }
    const double expected = (0.5 * (2.0 + 1e-6) - 1.0) * 1.0 - 0.5 * 0.8;
    if (std::abs(past.modulus - expected) > 1e-12) {
        row.detail = "degraded modulus formula mismatch";
        return row;
    }
    row.pass = true;
    row.detail = "guarantee flips exactly at alpha rho = 1";
    return row;
}

CheckRow check_convergence(std::uint64_t seed) {
    CheckRow row{"convergence_schedule", false, ""};
    // A = [1 0] on R^2 with r = ||x||^2: the minimal-norm solution of
    // A x = 1 is (1, 0) and every level has the closed form
    // x = (y / (1 + alpha), 0)
    const LinearOperator op = LinearOperator::from_matrix(1, 2, {1.0, 0.0});
    const RegularizerCnc r = quadratic_only(2, 1, 1.0);
    const std::vector<double> x_true = {1.0, 0.0};
    ConvergenceSchedule schedule;
    for (int k = 1; k <= 16; ++k) {
        schedule.deltas.push_back(std::pow(2.0, -k));
        schedule.alphas.push_back(std::pow(2.0, -0.5 * k));
    }
    SolveConfig base;
    base.method = SolveMethod::Subgradient;
    base.step_rule = StepRule::Constant;
    base.step_size = 0.25;
    base.init = InitMode::Zero;
    base.n_steps = 300;
    const ConvergenceReport rep =
        convergence_experiment(op, r, x_true, schedule, base, 1e-2, seed);
    if (rep.solver_failed) {
        row.detail = "solver failed at some level";
        return row;
    }
    if (!rep.pass) {
        row.detail = "errors did not decay under the tolerance";
        return row;
    }

    // a schedule with alpha = delta^2 drives delta/alpha to infinity and
    // must be rejected before any solve
    ConvergenceSchedule bad;
    for (int k = 1; k <= 6; ++k) {
        bad.deltas.push_back(std::pow(2.0, -k));
        bad.alphas.push_back(std::pow(4.0, -k));
    }
    bool rejected = false;
    try {
        convergence_experiment(op, r, x_true, bad, base, 1e-2, seed);
    } catch (const ValueError& e) {
        rejected = std::string(e.what()).find("delta / alpha") !=
                   std::string::npos;
    }
    if (!rejected) {
        row.detail = "alpha = delta^2 schedule was not rejected";
        return row;
    }
    row.pass = true;
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "16 levels, final error %.4g; invalid schedule rejected",
                  rep.rows.back().error);
    row.detail = buf;
    return row;
}

CheckRow check_stability_identity(std::uint64_t seed) {
    CheckRow row{"stability_identity", false, ""};
    const LinearOperator op =
        LinearOperator::from_matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    const RegularizerCnc r = quadratic_only(2, 2, 1.0);
    const std::vector<double> y = {1.0, 2.0};
    SolveConfig base;
    base.method = SolveMethod::Accelerated;
    base.step_rule = StepRule::Constant;
    base.step_size = 0.25;
    base.init = InitMode::Zero;
    base.n_steps = 300;
    const StabilityReport rep =
        stability_experiment(op, r, 0.5, 0.0, y, 20, 0.1, base, 1e-6, seed);
    row.pass = rep.all_within;
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "max distance %.4g against bound %.4g over %d perturbations",
                  rep.max_distance, rep.bound, rep.n_perturbations);
    row.detail = buf;
    return row;
}

CheckRow check_stability_random(std::uint64_t seed) {
    CheckRow row{"stability_random_matrix", false, ""};
    Rng rng(Rng::fork(seed, 80));
    std::vector<double> entries(100);
    for (double& v : entries)
        v = rng.normal();
    LinearOperator op = LinearOperator::from_matrix(10, 10, entries);
    const NormEstimate nrm = estimate_operator_norm(op, 1000, 1e-12, 7);
    op = op.scaled(1.0 / nrm.value);
    const RegularizerCnc r = quadratic_only(10, 10, 1.0);
    std::vector<double> y(10);
    for (double& v : y)
        v = rng.normal();
    SolveConfig base;
    base.method = SolveMethod::Accelerated;
    base.step_rule = StepRule::Constant;
    base.step_size = 0.2;
    base.init = InitMode::Zero;
    base.n_steps = 600;
    const StabilityReport rep =
        stability_experiment(op, r, 0.2, 0.0, y, 50, 0.05, base, 1e-4, seed);
    row.pass = rep.all_within;
    char buf[96];
    std::snprintf(buf, sizeof(buf),
                  "max distance %.4g against bound %.4g over %d perturbations",
                  rep.max_distance, rep.bound, rep.n_perturbations);
    row.detail = buf;
    return row;
}

CheckRow check_strongly_convex_rate() {
    CheckRow row{"strongly_convex_rate", false, ""};
    const LinearOperator op = LinearOperator::from_matrix(1, 1, {1.0});
    const RegularizerCnc r = quadratic_only(1, 1, 1.0);
    const std::vector<double> y = {0.8};
    SolveConfig cfg;
    cfg.alpha = 1.0;
    cfg.method = SolveMethod::Subgradient;
    cfg.step_rule = StepRule::StronglyConvex;
    cfg.init = InitMode::Zero;
    cfg.n_steps = 500;
    const SolveResult sol = solve_variational(op, r, y, cfg);
    const double err = std::abs(sol.x[0] - 0.4); // minimizer y / (1 + alpha)
    row.pass = !sol.aborted_nonfinite && err <= 1e-6;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "distance to minimizer %.3g", err);
    row.detail = buf;
    return row;
}

} // namespace

int cmd_theory_check(const Context& ctx) {
    const bool negative_control =
        ctx.cfg.get_bool("theory.negative_control", false);
    const int samples = ctx.cfg.get_int("theory.samples", 100000);
    if (samples < 100)
        throw ValueError("theory.samples must be at least 100");

    const std::filesystem::path report_path =
        ctx.root / "theory" / "theory_report.json";
    guard_overwrite(ctx, report_path);

    std::vector<CheckRow> checks;
    checks.push_back(
        check_pwl_detector(ctx.seed, negative_control,
                           std::max(100, samples / 100)));
    checks.push_back(check_max_of_affines(ctx.seed));
    checks.push_back(check_modulus_estimator(ctx.seed, samples));
    checks.push_back(check_certificates(ctx.seed));
    checks.push_back(check_icnn_midpoint(ctx.seed));
    checks.push_back(check_regime_boundary());
    checks.push_back(check_convergence(ctx.seed));
    checks.push_back(check_stability_identity(ctx.seed));
    checks.push_back(check_stability_random(ctx.seed));
    checks.push_back(check_strongly_convex_rate());

    bool all_pass = true;
    json jchecks = json::array();
    for (const CheckRow& c : checks) {
        all_pass = all_pass && c.pass;
        std::printf("check %-26s %s  (%s)\n", c.name.c_str(),
                    c.pass ? "ok" : "FAIL", c.detail.c_str());
        jchecks.push_back(
            {{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    }

    json report;
    report["config_hash"] = ctx.hash;
    report["negative_control"] = negative_control;
    report["checks"] = std::move(jchecks);
    report["all_pass"] = all_pass;

    std::error_code ec;
    std::filesystem::create_directories(report_path.parent_path(), ec);
    if (ec)
        throw IoError(IoError::Code::WriteFailed,
                      "cannot create directory: " +
                          report_path.parent_path().string());
    std::ofstream f(report_path, std::ios::binary | std::ios::trunc);
    if (!f || !(f << report.dump(2) << "\n"))
        throw IoError(IoError::Code::WriteFailed,
                      "cannot write: " + report_path.string());
    f.close();

    if (!all_pass) {
        for (const CheckRow& c : checks)
            if (!c.pass)
                std::fprintf(stderr, "theory-check failed: %s (%s)\n",
                             c.name.c_str(), c.detail.c_str());
        return 1;
    }
    std::printf("theory-check: all %zu checks passed, report at %s\n",
                checks.size(), report_path.string().c_str());
    return 0;
}

} // namespace cncreg::cli
