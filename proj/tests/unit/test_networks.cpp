#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <array>
#include <cmath>
#include <vector>

#include "cncreg/networks.hpp"
#include "cncreg/rng.hpp"

using namespace cncreg;

namespace {

const std::array<int, 2> kWidths{8, 8};
const std::array<int, 2> kStrides{2, 1};

IcnnParams dense_icnn(std::uint64_t seed) {
    return IcnnParams::dense(6, kWidths, seed);
}

IwcnnParams small_iwcnn(std::uint64_t seed) {
    IwcnnParams p;
    p.smooth = SmoothNetParams::dense(6, kWidths, 5, seed);
    p.inner = IcnnParams::dense(5, std::array<int, 1>{8}, seed + 1);
    return p;
}

std::vector<double> random_point(std::size_t n, Rng& rng, double scale = 1.0) {
    std::vector<double> x(n);
    for (double& v : x)
        v = scale * rng.normal();
    return x;
}

// central difference of a scalar function along every coordinate
template <typename F>
void check_gradient(F&& f, std::span<const double> x,
                    std::span<const double> grad, double h, double rel) {
    std::vector<double> xp(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        const double fd = (fp - fm) / (2.0 * h);
        CHECK(std::abs(fd - grad[i]) <= rel * (1.0 + std::abs(fd)));
    }
}

} // namespace

TEST_CASE("factory icnns satisfy the midpoint inequality") {
    const IcnnParams d = dense_icnn(3);
    CHECK(max_midpoint_violation(d, 200, 1.0, 5) <= 1e-9);
    const IcnnParams c = IcnnParams::conv(8, 8, 2, 4, 3, kStrides, 4);
    CHECK(max_midpoint_violation(c, 200, 1.0, 5) <= 1e-9);
}

TEST_CASE("midpoint inequality survives random re-projection") {
    IcnnParams p = dense_icnn(7);
    Rng rng(19);
    for (ParamRef& ref : param_refs(p.net, "theta1"))
        for (double& v : *ref.values)
            v = rng.normal();
    p = project_icnn_weights(std::move(p));
    CHECK(max_midpoint_violation(p, 200, 1.0, 6) <= 1e-9);
}

TEST_CASE("projection clamps exactly the constrained tensors") {
    IcnnParams p = dense_icnn(11);
    Rng rng(23);
    for (ParamRef& ref : param_refs(p.net, "t"))
        for (double& v : *ref.values)
            v = rng.normal();
    IcnnParams rawcopy = p;
    project_icnn_weights_inplace(p);

    auto refs = param_refs(p.net, "t");
    auto raws = param_refs(rawcopy.net, "t");
    REQUIRE(refs.size() == raws.size());
    bool saw_constrained = false, saw_free = false;
    for (std::size_t i = 0; i < refs.size(); ++i) {
        CHECK(refs[i].name == raws[i].name);
        if (refs[i].nonneg) {
            saw_constrained = true;
            for (std::size_t k = 0; k < refs[i].values->size(); ++k) {
                const double raw = (*raws[i].values)[k];
                CHECK((*refs[i].values)[k] == (raw < 0.0 ? 0.0 : raw));
            }
        } else {
            saw_free = true;
            CHECK(*refs[i].values == *raws[i].values);
        }
    }
    CHECK(saw_constrained);
    CHECK(saw_free);

    // idempotent
    const IcnnParams again = project_icnn_weights(p);
    for (std::size_t b = 0; b < p.net.blocks.size(); ++b)
        CHECK(again.net.blocks[b].main.w == p.net.blocks[b].main.w);
    CHECK(again.net.head.w == p.net.head.w);
}

TEST_CASE("forward rejects negative constrained weights") {
    IcnnParams p = dense_icnn(2);
    p.net.blocks[1].main.w[0] = -0.5;
    const std::vector<double> x(6, 0.1);
    CHECK_THROWS_WITH_AS(icnn_forward(p, x),
                         doctest::Contains("convexity constraint"), ValueError);
    // the unconstrained variant carries no claim and must evaluate
    p.constrained = false;
    CHECK(std::isfinite(icnn_forward(p, x)));
}

TEST_CASE("flipping the head of a convex net breaks midpoint convexity") {
    IcnnParams p = dense_icnn(13);
    p.constrained = false;
    for (double& v : p.net.head.w)
        v = -v;
    CHECK(max_midpoint_violation(p, 500, 1.0, 9) > 1e-6);
}

TEST_CASE("iwcnn is the composition of its two stages") {
    const IwcnnParams p = small_iwcnn(4);
    Rng rng(31);
    for (int i = 0; i < 10; ++i) {
        const auto y = random_point(6, rng);
        const auto z = smoothnet_forward(p.smooth, y);
        CHECK(iwcnn_forward(p, y) ==
              doctest::Approx(icnn_forward(p.inner, z)).epsilon(1e-12));
    }
}

TEST_CASE("regularizer value is the sum of its three terms") {
    RegularizerCnc r;
    r.theta1 = dense_icnn(5);
    r.theta2 = small_iwcnn(6);
    r.mu = 0.05;
    Rng rng(37);
    for (int i = 0; i < 10; ++i) {
        const auto x = random_point(6, rng);
        const auto y = random_point(6, rng);
        double sq = 0.0;
        for (double v : x)
            sq += v * v;
        const double expect =
            icnn_forward(r.theta1, x) + r.mu * sq + iwcnn_forward(r.theta2, y);
        CHECK(regularizer_value(r, x, y) ==
              doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("input gradients match central differences") {
    const IcnnParams icnn = dense_icnn(8);
    const IwcnnParams iw = small_iwcnn(9);
    Rng rng(41);
    for (int i = 0; i < 20; ++i) {
        const auto x = random_point(6, rng);
        check_gradient(
            [&](std::span<const double> p) { return icnn_forward(icnn, p); },
            x, icnn_input_gradient(icnn, x), 1e-6, 1e-4);
        check_gradient(
            [&](std::span<const double> p) { return iwcnn_forward(iw, p); },
            x, iwcnn_input_gradient(iw, x), 1e-6, 1e-4);
    }
}

TEST_CASE("regularizer gradient matches central differences in both slots") {
    RegularizerCnc r;
    r.theta1 = dense_icnn(14);
    r.theta2 = small_iwcnn(15);
    r.mu = 0.02;
    Rng rng(43);
    for (int i = 0; i < 10; ++i) {
        const auto x = random_point(6, rng);
        const auto y = random_point(6, rng);
        const RegularizerGrad g = regularizer_gradient(r, x, y);
        check_gradient(
            [&](std::span<const double> p) {
                return regularizer_value(r, p, y);
            },
            x, g.gx, 1e-6, 1e-4);
        check_gradient(
            [&](std::span<const double> p) {
                return regularizer_value(r, x, p);
            },
            y, g.gy, 1e-6, 1e-4);
    }
}

TEST_CASE("convex net gradients are monotone") {
    const IcnnParams p = dense_icnn(17);
    Rng rng(47);
    for (int i = 0; i < 200; ++i) {
        const auto a = random_point(6, rng);
        const auto b = random_point(6, rng);
        const auto ga = icnn_input_gradient(p, a);
        const auto gb = icnn_input_gradient(p, b);
        double inner = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k)
            inner += (ga[k] - gb[k]) * (a[k] - b[k]);
        CHECK(inner >= -1e-9);
    }
}

TEST_CASE("linear smooth net bounds reduce to the spectral norm") {
    const SmoothNetParams p =
        SmoothNetParams::dense(5, {}, 3, 21, Activation::None);
    const LipschitzCurvature lc = bound_lipschitz_curvature(p);
    CHECK(lc.curvature == 0.0);

    Eigen::MatrixXd w(3, 5);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 5; ++c)
            w(r, c) = p.net.head.w[static_cast<std::size_t>(r * 5 + c)];
    const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues()(0);
    CHECK(lc.lipschitz == doctest::Approx(sigma).epsilon(1e-6));
}

TEST_CASE("bounds scale linearly with the head weights") {
    IcnnParams icnn = dense_icnn(25);
    const double l1 = bound_lipschitz(icnn);
    CHECK(l1 > 0.0);
    for (double& v : icnn.net.head.w)
        v *= 2.0;
    CHECK(bound_lipschitz(icnn) == doctest::Approx(2.0 * l1).epsilon(1e-9));

    SmoothNetParams sm = SmoothNetParams::dense(6, kWidths, 5, 26);
    const LipschitzCurvature b1 = bound_lipschitz_curvature(sm);
    CHECK(b1.lipschitz > 0.0);
    CHECK(b1.curvature > 0.0);
    for (double& v : sm.net.head.w)
        v *= 2.0;
    const LipschitzCurvature b2 = bound_lipschitz_curvature(sm);
    CHECK(b2.lipschitz == doctest::Approx(2.0 * b1.lipschitz).epsilon(1e-9));
    CHECK(b2.curvature == doctest::Approx(2.0 * b1.curvature).epsilon(1e-9));
}

TEST_CASE("certificates bound the sampled modulus") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const IwcnnParams p = small_iwcnn(100 + seed);
        const ModulusCertificate cert = certify_weak_convexity(p, 400, seed);
        CHECK(cert.rho_bound ==
              doctest::Approx(cert.lipschitz * cert.beta).epsilon(1e-12));
        CHECK(cert.empirical_rho >= 0.0);
        CHECK(cert.empirical_rho <= cert.rho_bound * (1.0 + 1e-9));
        CHECK(cert.samples == 400);
        CHECK(cert.seed == seed);
    }
}

TEST_CASE("certification is deterministic and routed through theta2") {
    RegularizerCnc r;
    r.theta1 = dense_icnn(61);
    r.theta2 = small_iwcnn(62);
    const ModulusCertificate a = certify_weak_convexity(r, 300, 5);
    const ModulusCertificate b = certify_weak_convexity(r.theta2, 300, 5);
    CHECK(a.lipschitz == b.lipschitz);
    CHECK(a.beta == b.beta);
    CHECK(a.empirical_rho == b.empirical_rho);
    CHECK_THROWS_AS(certify_weak_convexity(r.theta2, 99, 5), ValueError);
}

TEST_CASE("param_count matches the reference enumeration plus mu") {
    RegularizerCnc r;
    r.theta1 = dense_icnn(71);
    r.theta2 = small_iwcnn(72);
    std::size_t total = 1;
    bool theta1_named = false, smooth_named = false, inner_named = false;
    for (const ParamRef& ref : param_refs(r)) {
        total += ref.values->size();
        theta1_named |= ref.name.starts_with("theta1.");
        smooth_named |= ref.name.starts_with("theta2.smooth.");
        inner_named |= ref.name.starts_with("theta2.inner.");
    }
    CHECK(param_count(r) == total);
    CHECK(theta1_named);
    CHECK(smooth_named);
    CHECK(inner_named);

    // smooth nets are unconstrained throughout
    for (const ParamRef& ref : param_refs(r.theta2.smooth.net, "s"))
        CHECK_FALSE(ref.nonneg);
}

TEST_CASE("structure validation rejects malformed nets") {
    CHECK_THROWS_AS(IcnnParams::dense(0, kWidths, 1), ValueError);
    CHECK_THROWS_AS(IcnnParams::dense(4, std::array<int, 1>{-3}, 1),
                    ValueError);
    CHECK_THROWS_AS(IcnnParams::conv(8, 8, 2, 4, 4, kStrides, 1),
                    ValueError); // even kernel
    CHECK_THROWS_AS(IcnnParams::conv(8, 8, 3, 4, 3, kStrides, 1),
                    ValueError); // stride list length
    CHECK_THROWS_AS(SmoothNetParams::dense(0, kWidths, 2, 1), ValueError);
    CHECK_THROWS_AS(LayerMap::conv(1, 4, 2, 1, 8, 8), ValueError);
    const IcnnParams p = dense_icnn(1);
    CHECK_THROWS_AS(max_midpoint_violation(p, 0, 1.0, 1), ValueError);
    CHECK_THROWS_AS(icnn_forward(p, std::vector<double>(5, 0.0)), ValueError);
}
