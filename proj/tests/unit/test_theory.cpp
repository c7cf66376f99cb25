#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "cncreg/networks.hpp"
#include "cncreg/rng.hpp"
#include "cncreg/theory.hpp"

using namespace cncreg;

namespace {

RegularizerCnc quadratic_net(int image_dim, int meas_dim, double mu) {
    RegularizerCnc r;
    const std::array<int, 1> w{4};
    r.theta1 = IcnnParams::dense(image_dim, w, 1);
    r.theta2.smooth = SmoothNetParams::dense(meas_dim, w, 3, 2);
    r.theta2.inner = IcnnParams::dense(3, w, 3);
    r.mu = mu;
    for (ParamRef& ref : param_refs(r))
        for (double& v : *ref.values)
            v = 0.0;
    return r;
}

PiecewiseLinear1D random_pwl(Rng& rng, bool convex) {
    const int n_breaks = 1 + static_cast<int>(rng.uniform(0.0, 4.0));
    std::vector<double> breaks;
    while (static_cast<int>(breaks.size()) < n_breaks) {
        const double b = rng.uniform(-2.0, 2.0);
        bool ok = true;
        for (double prev : breaks)
            if (std::abs(prev - b) < 1e-3)
                ok = false;
        if (ok)
            breaks.push_back(b);
    }
    std::sort(breaks.begin(), breaks.end());
    std::vector<double> slopes(breaks.size() + 1);
    for (double& s : slopes)
        s = rng.uniform(-3.0, 3.0);
    if (convex) {
        std::sort(slopes.begin(), slopes.end());
    } else {
        // guarantee a strict slope drop somewhere
        std::sort(slopes.begin(), slopes.end());
        std::reverse(slopes.begin(), slopes.end());
        if (slopes.front() - slopes.back() < 0.1)
            slopes.back() = slopes.front() - 0.5;
    }
    return PiecewiseLinear1D::from_slopes(-3.0, rng.normal(), std::move(breaks),
                                          std::move(slopes));
}

bool witness_checks_out(const PiecewiseLinear1D& f, double rho,
                        const ViolationWitness& w) {
    const double mid = w.lambda * w.x1 + (1.0 - w.lambda) * w.x2;
    const double lhs = f(mid);
    const double gap = w.lambda * (1.0 - w.lambda) * (w.x1 - w.x2) *
                       (w.x1 - w.x2);
    const double rhs =
        w.lambda * f(w.x1) + (1.0 - w.lambda) * f(w.x2) + rho * gap;
    const double scale = 1.0 + std::abs(lhs) + std::abs(rhs);
    if (std::abs(lhs - w.lhs) > 1e-9 * scale)
        return false;
    if (std::abs(rhs - w.rhs) > 1e-9 * scale)
        return false;
    return w.lhs > w.rhs && w.implied_rho > rho;
}

} // namespace

TEST_CASE("pwl construction, evaluation, and continuity") {
    // slopes 1 then 2 through (0, 0): f(1) = 1, f(2) = 3
    const PiecewiseLinear1D f =
        PiecewiseLinear1D::from_slopes(0.0, 0.0, {1.0}, {1.0, 2.0});
    CHECK(f(0.0) == doctest::Approx(0.0));
    CHECK(f(1.0) == doctest::Approx(1.0));
    CHECK(f(2.0) == doctest::Approx(3.0));
    CHECK(f(-1.0) == doctest::Approx(-1.0));
    CHECK(f.is_convex());

    CHECK_THROWS_AS(PiecewiseLinear1D({1.0}, {PwlPiece{1.0, 0.0}}),
                    ValueError);
    CHECK_THROWS_AS(PiecewiseLinear1D({2.0, 1.0},
                                      {PwlPiece{1.0, 0.0}, PwlPiece{1.0, 0.0},
                                       PwlPiece{1.0, 0.0}}),
                    ValueError);
    // pieces that disagree at the shared breakpoint
    CHECK_THROWS_AS(PiecewiseLinear1D({1.0},
                                      {PwlPiece{1.0, 0.0}, PwlPiece{2.0, 0.0}}),
                    ValueError);
}

TEST_CASE("convexity detection tolerates bounded backsliding") {
    const PiecewiseLinear1D f =
        PiecewiseLinear1D::from_slopes(0.0, 0.0, {1.0}, {0.0, -1e-12});
    CHECK_FALSE(f.is_convex());
    CHECK(f.is_convex(1e-9));
}

TEST_CASE("convex pwls equal the max of their affine pieces") {
    Rng rng(71);
    for (int t = 0; t < 200; ++t) {
        const PiecewiseLinear1D f = random_pwl(rng, true);
        for (int i = 0; i < 50; ++i) {
            const double x = rng.uniform(-5.0, 5.0);
            double best = -1e300;
            for (const PwlPiece& p : f.pieces())
                best = std::max(best, p.slope * x + p.intercept);
            const double v = f(x);
            CHECK(std::abs(v - best) <= 1e-9 * (1.0 + std::abs(v)));
        }
    }
}

TEST_CASE("witness search separates convex from nonconvex pwls") {
    Rng rng(73);
    int convex_seen = 0, nonconvex_seen = 0;
    for (int t = 0; t < 600; ++t) {
        const bool convex = t % 2 == 0;
        const PiecewiseLinear1D f = random_pwl(rng, convex);
        if (convex) {
            ++convex_seen;
            CHECK(f.is_convex(1e-12));
            for (double rho : {1.0, 10.0, 100.0})
                CHECK_FALSE(pwl_weak_convexity_witness(f, rho).has_value());
        } else {
            ++nonconvex_seen;
            CHECK_FALSE(f.is_convex(1e-12));
            for (double rho : {1.0, 10.0, 100.0}) {
                const auto w = pwl_weak_convexity_witness(f, rho);
                REQUIRE(w.has_value());
                CHECK(witness_checks_out(f, rho, *w));
            }
        }
    }
    CHECK(convex_seen == 300);
    CHECK(nonconvex_seen == 300);
    CHECK_THROWS_AS(
        pwl_weak_convexity_witness(random_pwl(rng, true), -1.0), ValueError);
}

TEST_CASE("a kink defeats arbitrarily large claimed moduli") {
    // tent with slope drop 2 at the origin
    const PiecewiseLinear1D tent =
        PiecewiseLinear1D::from_slopes(-1.0, -1.0, {0.0}, {1.0, -1.0});
    for (double rho : {1.0, 100.0, 10000.0}) {
        const auto w = pwl_weak_convexity_witness(tent, rho);
        REQUIRE(w.has_value());
        CHECK(witness_checks_out(tent, rho, *w));
        CHECK(w->implied_rho > rho);
    }
}

TEST_CASE("modulus estimator reproduces quadratic identities") {
    const auto sqn = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x)
            s += v * v;
        return s;
    };
    const auto est = [&](double coeff, std::uint64_t seed) {
        return estimate_weak_convexity_modulus(
            [&](std::span<const double> x) { return coeff * sqn(x); }, 4,
            -1.0, 1.0, 2000, seed);
    };
    CHECK(est(1.0, 3) <= 1e-9);          // convex: floored at zero
    CHECK(est(-1.0, 4) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(est(0.4 - 1.0, 5) == doctest::Approx(0.6).epsilon(1e-6));

    // determinism and the minimum sample rule
    CHECK(est(-1.0, 9) == est(-1.0, 9));
    CHECK_THROWS_AS(estimate_weak_convexity_modulus(sqn, 4, -1.0, 1.0, 99, 1),
                    ValueError);
    CHECK_THROWS_AS(estimate_weak_convexity_modulus(sqn, 0, -1.0, 1.0, 200, 1),
                    ValueError);
    CHECK_THROWS_AS(estimate_weak_convexity_modulus(sqn, 4, 1.0, -1.0, 200, 1),
                    ValueError);
}

TEST_CASE("estimator lower-bounds a pwl kink modulus") {
    // tent restricted to [-1, 1]: true modulus is unbounded, the sampled
    // estimate must at least clear a unit claim
    const PiecewiseLinear1D tent =
        PiecewiseLinear1D::from_slopes(-1.0, -1.0, {0.0}, {1.0, -1.0});
    const double est = estimate_weak_convexity_modulus(
        [&](std::span<const double> x) { return tent(x[0]); }, 1, -1.0, 1.0,
        20000, 7);
    CHECK(est > 1.0);
}

TEST_CASE("noise-to-zero study passes on a valid schedule") {
    const LinearOperator op = LinearOperator::from_matrix(1, 2, {1.0, 0.0});
    const RegularizerCnc r = quadratic_net(2, 1, 1.0);
    const std::vector<double> x_true{1.0, 0.0};

    SolveConfig base;
    base.method = SolveMethod::Subgradient;
    base.step_rule = StepRule::Constant;
    base.step_size = 0.25;
    base.init = InitMode::Zero;
    base.n_steps = 300;

    ConvergenceSchedule sched;
    for (int k = 1; k <= 16; ++k) {
        sched.deltas.push_back(std::pow(2.0, -k));
        sched.alphas.push_back(std::pow(2.0, -k / 2.0));
    }
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const ConvergenceReport rep =
            convergence_experiment(op, r, x_true, sched, base, 1e-2, seed);
        CHECK(rep.pass);
        CHECK_FALSE(rep.solver_failed);
        REQUIRE(rep.rows.size() == 16);
        CHECK(rep.rows.back().error < 1e-2);
        CHECK(rep.rows.back().error < rep.rows.front().error);
        // the solved scalar has the closed form |noise - alpha| / (1 + alpha)
        for (const ConvergenceRow& row : rep.rows) {
            const double hi = (row.delta + row.alpha) / (1.0 + row.alpha);
            CHECK(row.error <= hi + 1e-9);
        }
    }
}

TEST_CASE("ten-level canonical schedule stalls above one percent") {
    // the error floor |delta -+ alpha| / (1 + alpha) at level ten sits at
    // 0.0294 or 0.0313 depending on the noise sign, so a 1e-2 tolerance is
    // unreachable on this schedule; the study reports the honest failure
    const LinearOperator op = LinearOperator::from_matrix(1, 2, {1.0, 0.0});
    const RegularizerCnc r = quadratic_net(2, 1, 1.0);
    const std::vector<double> x_true{1.0, 0.0};

    SolveConfig base;
    base.method = SolveMethod::Subgradient;
    base.step_rule = StepRule::Constant;
    base.step_size = 0.25;
    base.init = InitMode::Zero;
    base.n_steps = 300;

    ConvergenceSchedule sched;
    for (int k = 1; k <= 10; ++k) {
        sched.deltas.push_back(std::pow(2.0, -k));
        sched.alphas.push_back(std::pow(2.0, -k / 2.0));
    }
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const ConvergenceReport rep =
            convergence_experiment(op, r, x_true, sched, base, 1e-2, seed);
        CHECK_FALSE(rep.pass);
        CHECK(rep.rows.back().error > 1e-2);
        CHECK(rep.rows.back().error >= 0.028);
        CHECK(rep.rows.back().error <= 0.033);
    }
}

TEST_CASE("schedules that blow up the noise-to-alpha ratio are refused") {
    const LinearOperator op = LinearOperator::from_matrix(1, 2, {1.0, 0.0});
    const RegularizerCnc r = quadratic_net(2, 1, 1.0);
    const std::vector<double> x_true{1.0, 0.0};
    SolveConfig base;
    base.init = InitMode::Zero;
    base.step_size = 0.25;

    ConvergenceSchedule bad;
    for (int k = 1; k <= 6; ++k) {
        const double d = std::pow(2.0, -k);
        bad.deltas.push_back(d);
        bad.alphas.push_back(d * d);
    }
    CHECK_THROWS_WITH_AS(
        convergence_experiment(op, r, x_true, bad, base, 1e-2, 1),
        doctest::Contains("delta / alpha"), ValueError);

    ConvergenceSchedule empty;
    CHECK_THROWS_AS(convergence_experiment(op, r, x_true, empty, base, 1e-2, 1),
                    ValueError);
}

TEST_CASE("stability on the identity matches the closed form") {
    const LinearOperator op =
        LinearOperator::from_matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    const RegularizerCnc r = quadratic_net(2, 2, 1.0);
    const std::vector<double> y{1.0, 2.0};

    SolveConfig base;
    base.method = SolveMethod::Accelerated;
    base.step_size = 0.25;
    base.init = InitMode::Zero;
    base.n_steps = 300;

    const double alpha = 0.5, magnitude = 0.1, tol = 1e-6;
    const StabilityReport rep = stability_experiment(
        op, r, alpha, 0.0, y, 20, magnitude, base, tol, 11);
    CHECK(rep.n_perturbations == 20);
    CHECK(rep.all_within);
    // minimizers move by exactly ||dy|| / (1 + alpha mu) on the identity
    CHECK(rep.max_distance ==
          doctest::Approx(magnitude / (1.0 + alpha * r.mu)).epsilon(1e-4));
    CHECK(rep.bound == doctest::Approx(2.0 * magnitude / (alpha * r.mu) + tol)
                           .epsilon(1e-6));
    CHECK(rep.max_ratio == doctest::Approx(rep.max_distance / rep.bound)
                               .epsilon(1e-9));
}

TEST_CASE("stability experiment guards its premises") {
    const LinearOperator op =
        LinearOperator::from_matrix(2, 2, {1.0, 0.0, 0.0, 1.0});
    const RegularizerCnc r = quadratic_net(2, 2, 1.0);
    const std::vector<double> y{1.0, 2.0};
    SolveConfig base;
    base.init = InitMode::Zero;
    base.step_size = 0.25;

    // outside the strongly convex regime the bound has no premise
    CHECK_THROWS_WITH_AS(
        stability_experiment(op, r, 0.5, 3.0, y, 5, 0.1, base, 1e-6, 1),
        doctest::Contains("alpha * rho <= 1"), ValueError);
    RegularizerCnc flat = r;
    flat.mu = 0.0;
    CHECK_THROWS_AS(
        stability_experiment(op, flat, 0.5, 0.0, y, 5, 0.1, base, 1e-6, 1),
        ValueError);
    CHECK_THROWS_AS(
        stability_experiment(op, r, 0.5, 0.0, y, 0, 0.1, base, 1e-6, 1),
        ValueError);
    CHECK_THROWS_AS(
        stability_experiment(op, r, 0.5, 0.0, std::vector<double>(3, 0.0), 5,
                             0.1, base, 1e-6, 1),
        ValueError);
}
