#include <doctest.h>

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <sstream>

#include "cncreg/networks.hpp"
#include "cncreg/operators.hpp"
#include "cncreg/phantom.hpp"
#include "cncreg/rng.hpp"
#include "cncreg/solvers.hpp"

using namespace cncreg;

namespace {

// regularizer whose networks are identically zero, so the objective is the
// closed-form quadratic ||Ax - y||^2 + alpha * mu * ||x||^2
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

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

} // namespace

TEST_CASE("regime boundary is inclusive and moduli are explicit") {
    const RegimeInfo sc = classify_regime(0.5, 0.8, 2.0, 1.0);
    CHECK(sc.regime == Regime::StronglyConvex);
    CHECK(sc.modulus == doctest::Approx(0.4).epsilon(1e-15));

    const RegimeInfo wc = classify_regime(0.5, 0.8, 2.0 + 1e-6, 1.0);
    CHECK(wc.regime == Regime::WeaklyConvex);
    CHECK(wc.modulus ==
          doctest::Approx((0.5 * (2.0 + 1e-6) - 1.0) * 1.0 - 0.4)
              .epsilon(1e-12));

    CHECK_THROWS_AS(classify_regime(0.0, 0.8, 2.0, 1.0), ValueError);
    CHECK_THROWS_AS(classify_regime(0.5, -0.1, 2.0, 1.0), ValueError);
}

TEST_CASE("subgradient descent solves the scalar quadratic") {
    const LinearOperator op = LinearOperator::from_matrix(1, 1, {1.0});
    const RegularizerCnc r = quadratic_net(1, 1, 1.0);
    const std::vector<double> y{0.9};

    SolveConfig cfg;
    cfg.alpha = 0.5;
    cfg.method = SolveMethod::Subgradient;
    cfg.step_size = 0.25;
    cfg.init = InitMode::Zero;
    cfg.n_steps = 200;
    const SolveResult res = solve_variational(op, r, y, cfg);
    // minimizer of (x - y)^2 + alpha mu x^2
    const double target = y[0] / (1.0 + cfg.alpha * r.mu);
    CHECK(std::abs(res.x[0] - target) <= 1e-10);
    CHECK_FALSE(res.aborted_nonfinite);
    CHECK(res.trace.rows.size() == 201);
}

TEST_CASE("matrix quadratic reaches the ridge solution from Eigen") {
    Rng rng(3);
    const int n = 5;
    std::vector<double> entries(n * n);
    for (double& v : entries)
        v = rng.normal() * 0.3;
    const LinearOperator op = LinearOperator::from_matrix(n, n, entries);
    const RegularizerCnc r = quadratic_net(n, n, 1.0);
    std::vector<double> y(n);
    for (double& v : y)
        v = rng.normal();

    SolveConfig cfg;
    cfg.alpha = 0.2;
    cfg.method = SolveMethod::Accelerated;
    cfg.step_size = 0.2;
    cfg.init = InitMode::Zero;
    cfg.n_steps = 2000;
    const SolveResult res = solve_variational(op, r, y, cfg);

    Eigen::MatrixXd a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            a(i, j) = entries[static_cast<std::size_t>(i * n + j)];
    const Eigen::VectorXd ey = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    const Eigen::VectorXd xs =
        (a.transpose() * a +
         cfg.alpha * r.mu * Eigen::MatrixXd::Identity(n, n))
            .ldlt()
            .solve(a.transpose() * ey);
    for (int i = 0; i < n; ++i)
        CHECK(std::abs(res.x[static_cast<std::size_t>(i)] - xs(i)) <= 1e-8);

    const auto grad = objective_subgradient(op, r, cfg.alpha, res.x, y);
    CHECK(norm2(grad) <= 1e-6 * (1.0 + norm2(res.x)));
}

TEST_CASE("subgradient objective is monotone on a smooth quadratic") {
    Rng rng(5);
    std::vector<double> entries(9);
    for (double& v : entries)
        v = rng.normal() * 0.4;
    const LinearOperator op = LinearOperator::from_matrix(3, 3, entries);
    const RegularizerCnc r = quadratic_net(3, 3, 0.5);
    const std::vector<double> y{1.0, -0.5, 0.25};

    SolveConfig cfg;
    cfg.alpha = 0.3;
    cfg.step_size = 0.1;
    cfg.init = InitMode::Zero;
    cfg.n_steps = 100;
    const SolveResult res = subgradient_descent(op, r, y, cfg);
    for (std::size_t k = 1; k < res.trace.rows.size(); ++k)
        CHECK(res.trace.rows[k].objective <=
              res.trace.rows[k - 1].objective + 1e-12);
}

TEST_CASE("zero momentum reproduces plain descent bitwise") {
    Rng rng(7);
    std::vector<double> entries(16);
    for (double& v : entries)
        v = rng.normal() * 0.3;
    const LinearOperator op = LinearOperator::from_matrix(4, 4, entries);
    const RegularizerCnc r = quadratic_net(4, 4, 1.0);
    const std::vector<double> y{0.3, -0.8, 0.1, 0.9};

    SolveConfig cfg;
    cfg.alpha = 0.4;
    cfg.step_size = 0.05;
    cfg.init = InitMode::Zero;
    cfg.n_steps = 60;
    cfg.momentum_scale = 0.0;
    const SolveResult acc = accelerated_gd(op, r, y, cfg);
    const SolveResult sub = subgradient_descent(op, r, y, cfg);
    REQUIRE(acc.x.size() == sub.x.size());
    for (std::size_t i = 0; i < acc.x.size(); ++i)
        CHECK(acc.x[i] == sub.x[i]);
}

TEST_CASE("step rules fill the trace as specified") {
    const LinearOperator op = LinearOperator::from_matrix(1, 1, {1.0});
    const RegularizerCnc r = quadratic_net(1, 1, 1.0);
    const std::vector<double> y{0.5};

    SolveConfig cfg;
    cfg.alpha = 2.0;
    cfg.step_size = 0.125;
    cfg.init = InitMode::Zero;
    cfg.n_steps = 8;

    cfg.step_rule = StepRule::Constant;
    auto res = subgradient_descent(op, r, y, cfg);
    for (int k = 0; k < 8; ++k)
        CHECK(res.trace.rows[static_cast<std::size_t>(k)].step == 0.125);
    CHECK(res.trace.rows.back().step == 0.0); // no step leaves the last row

    cfg.step_rule = StepRule::Diminishing;
    res = subgradient_descent(op, r, y, cfg);
    for (int k = 0; k < 8; ++k)
        CHECK(res.trace.rows[static_cast<std::size_t>(k)].step ==
              doctest::Approx(0.125 / (k + 1)).epsilon(1e-15));

    cfg.step_rule = StepRule::StronglyConvex;
    res = subgradient_descent(op, r, y, cfg);
    for (int k = 0; k < 8; ++k)
        CHECK(res.trace.rows[static_cast<std::size_t>(k)].step ==
              doctest::Approx(2.0 / (cfg.alpha * r.mu * (k + 2)))
                  .epsilon(1e-15));

    const RegularizerCnc flat = quadratic_net(1, 1, 0.0);
    CHECK_THROWS_AS(subgradient_descent(op, flat, y, cfg), ValueError);
}

TEST_CASE("strongly convex rule lands exactly on the scalar minimizer") {
    const LinearOperator op = LinearOperator::from_matrix(1, 1, {1.0});
    const RegularizerCnc r = quadratic_net(1, 1, 1.0);
    const std::vector<double> y{0.8};

    SolveConfig cfg;
    cfg.alpha = 1.0;
    cfg.step_rule = StepRule::StronglyConvex;
    cfg.init = InitMode::Zero;
    cfg.n_steps = 100;
    const SolveResult res = subgradient_descent(op, r, y, cfg);
    CHECK(std::abs(res.x[0] - 0.4) <= 1e-12);
}

TEST_CASE("divergence aborts and keeps the best iterate") {
    const LinearOperator op = LinearOperator::from_matrix(1, 1, {1.0});
    const RegularizerCnc r = quadratic_net(1, 1, 1.0);
    const std::vector<double> y{1.0};

    SolveConfig cfg;
    cfg.alpha = 1.0;
    cfg.step_size = 10.0; // far past the stability limit
    cfg.init = InitMode::Zero;
    cfg.n_steps = 400;
    const SolveResult res = subgradient_descent(op, r, y, cfg);
    CHECK(res.aborted_nonfinite);
    CHECK(res.trace.rows.size() < 401);
    REQUIRE_FALSE(res.best_x.empty());
    CHECK(res.x == res.best_x);
    CHECK(std::isfinite(res.x[0]));
}

TEST_CASE("best iterate tracks the reference when one is given") {
    const LinearOperator op = LinearOperator::from_matrix(1, 1, {1.0});
    const RegularizerCnc r = quadratic_net(1, 1, 1.0);
    const std::vector<double> y{0.9};

    SolveConfig cfg;
    cfg.alpha = 4.0; // strong shrinkage pulls the iterate past the truth
    cfg.step_size = 0.05;
    cfg.init = InitMode::Provided;
    cfg.x0 = {0.9};
    cfg.reference = {0.45};
    cfg.n_steps = 120;
    const SolveResult res = subgradient_descent(op, r, y, cfg);

    double best = -1.0;
    int arg = 0;
    for (const TraceRow& row : res.trace.rows)
        if (row.psnr > best) {
            best = row.psnr;
            arg = row.iteration;
        }
    CHECK(res.best_psnr == best);
    CHECK(res.best_iteration == arg);
    CHECK(res.trace.rows[static_cast<std::size_t>(arg)].psnr == best);
}

TEST_CASE("trace csv carries the documented header and one row per iterate") {
    const LinearOperator op = LinearOperator::from_matrix(1, 1, {1.0});
    const RegularizerCnc r = quadratic_net(1, 1, 1.0);
    SolveConfig cfg;
    cfg.alpha = 1.0;
    cfg.step_size = 0.1;
    cfg.init = InitMode::Zero;
    cfg.n_steps = 5;
    const SolveResult res = subgradient_descent(op, r, std::vector<double>{0.5}, cfg);
    for (const TraceRow& row : res.trace.rows)
        CHECK(std::isnan(row.psnr)); // no reference supplied

    std::ostringstream os;
    write_trace_csv(res.trace, os);
    std::istringstream is(os.str());
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "iteration,objective,grad_norm,step,psnr");
    int rows = 0;
    while (std::getline(is, line))
        ++rows;
    CHECK(rows == 6);
}

TEST_CASE("initialization modes and their failure cases") {
    const auto geom = RadonGeometry::uniform(32, 12, 47, M_PI);
    const LinearOperator radon = LinearOperator::radon(geom);
    PhantomSpec spec;
    spec.size = 32;
    spec.seed = 9;
    const Image truth = generate_phantom(spec);
    const auto y = radon.apply(truth.tensor.to_doubles());

    const RegularizerCnc r = quadratic_net(32 * 32, 12 * 47, 1.0);
    SolveConfig cfg;
    cfg.alpha = 0.1;
    cfg.step_size = 0.01;
    cfg.n_steps = 0;

    cfg.init = InitMode::Fbp;
    const SolveResult res = subgradient_descent(radon, r, y, cfg);
    Sinogram s(static_cast<std::size_t>(geom.n_angles),
               static_cast<std::size_t>(geom.n_detectors));
    for (std::size_t i = 0; i < y.size(); ++i)
        s.tensor.data()[i] = static_cast<float>(y[i]);
    const auto direct = fbp(s, geom).tensor.to_doubles();
    CHECK(res.x == direct);

    // a scaled operator with rescaled data starts from the same image
    const LinearOperator half = radon.scaled(0.5);
    std::vector<double> y_half(y.size());
    for (std::size_t i = 0; i < y.size(); ++i)
        y_half[i] = 0.5 * y[i];
    const SolveResult res_half = subgradient_descent(half, r, y_half, cfg);
    CHECK(res_half.x == direct);

    cfg.init = InitMode::Provided;
    cfg.x0 = truth.tensor.to_doubles();
    const SolveResult provided = subgradient_descent(radon, r, y, cfg);
    CHECK(provided.x == cfg.x0);
    cfg.x0.resize(7);
    CHECK_THROWS_AS(subgradient_descent(radon, r, y, cfg), ValueError);

    const LinearOperator mat = LinearOperator::from_matrix(1, 1, {1.0});
    const RegularizerCnc r1 = quadratic_net(1, 1, 1.0);
    SolveConfig bad;
    bad.init = InitMode::Fbp;
    CHECK_THROWS_AS(subgradient_descent(mat, r1, std::vector<double>{0.5}, bad), ValueError);
}

TEST_CASE("solve config validation") {
    const LinearOperator op = LinearOperator::from_matrix(1, 1, {1.0});
    const RegularizerCnc r = quadratic_net(1, 1, 1.0);
    const std::vector<double> y{0.5};
    SolveConfig cfg;
    cfg.init = InitMode::Zero;
    cfg.step_size = 0.1;

    SolveConfig c = cfg;
    c.alpha = 0.0;
    CHECK_THROWS_AS(solve_variational(op, r, y, c), ValueError);
    c = cfg;
    c.n_steps = -1;
    CHECK_THROWS_AS(solve_variational(op, r, y, c), ValueError);
    c = cfg;
    c.step_size = 0.0;
    CHECK_THROWS_AS(solve_variational(op, r, y, c), ValueError);
    c = cfg;
    c.momentum_scale = 1.5;
    CHECK_THROWS_AS(solve_variational(op, r, y, c), ValueError);
    c = cfg;
    CHECK_THROWS_AS(
        solve_variational(op, r, std::vector<double>(3, 0.0), c), ValueError);
}

TEST_CASE("solve_variational dispatches on the method field") {
    const LinearOperator op = LinearOperator::from_matrix(1, 1, {1.0});
    const RegularizerCnc r = quadratic_net(1, 1, 1.0);
    const std::vector<double> y{0.7};
    SolveConfig cfg;
    cfg.alpha = 0.5;
    cfg.step_size = 0.1;
    cfg.init = InitMode::Zero;
    cfg.n_steps = 40;

    cfg.method = SolveMethod::Subgradient;
    CHECK(solve_variational(op, r, y, cfg).x ==
          subgradient_descent(op, r, y, cfg).x);
    cfg.method = SolveMethod::Accelerated;
    CHECK(solve_variational(op, r, y, cfg).x ==
          accelerated_gd(op, r, y, cfg).x);
}

TEST_CASE("tv reconstruction denoises a step signal") {
    // identity operator on a length-32 signal, treated as a one-row image
    const int n = 32;
    std::vector<double> eye(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        eye[static_cast<std::size_t>(i * n + i)] = 1.0;
    const LinearOperator op =
        LinearOperator::from_matrix(static_cast<std::size_t>(n),
                                    static_cast<std::size_t>(n), eye);

    Rng rng(13);
    std::vector<double> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        y[static_cast<std::size_t>(i)] =
            (i < n / 2 ? 0.2 : 0.8) + 0.05 * rng.normal();

    const auto tv_of = [&](std::span<const double> x) {
        double t = 0.0;
        for (int i = 0; i + 1 < n; ++i)
            t += std::abs(x[static_cast<std::size_t>(i + 1)] -
                          x[static_cast<std::size_t>(i)]);
        return t;
    };

    TvConfig cfg;
    cfg.weight = 0.02;
    cfg.epsilon = 1e-6;
    cfg.step_size = 0.1;
    cfg.n_steps = 500;
    const auto x = tv_reconstruct(op, y, cfg);
    REQUIRE(x.size() == y.size());
    CHECK(tv_of(x) < tv_of(y));
    double dist = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
        dist = std::max(dist, std::abs(x[i] - y[i]));
    CHECK(dist < 0.2); // stays near the data while flattening the noise

    // a vanishing weight returns the data itself
    TvConfig tiny = cfg;
    tiny.weight = 1e-10;
    const auto x0 = tv_reconstruct(op, y, tiny);
    for (std::size_t i = 0; i < y.size(); ++i)
        CHECK(std::abs(x0[i] - y[i]) <= 1e-4);

    // a heavier weight flattens more
    TvConfig heavy = cfg;
    heavy.weight = 0.1;
    CHECK(tv_of(tv_reconstruct(op, y, heavy)) < tv_of(x));
}
