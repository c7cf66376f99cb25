#include <doctest.h>

#include <cmath>

#include "cncreg/phantom.hpp"

using namespace cncreg;

TEST_CASE("single ellipse lands on the expected pixels") {
    Ellipse e;
    e.cx = 0.5;
    e.cy = 0.5;
    e.a = 0.3;  // along x (columns)
    e.b = 0.1;  // along y (rows)
    e.phi = 0.0;
    e.value = 0.7;
    const Image img = render_ellipses(64, {&e, 1});

    const auto px = [&](double fx, double fy) {
        // pixel whose center is closest to the fractional coordinate
        const auto col = static_cast<std::size_t>(fx * 64);
        const auto row = static_cast<std::size_t>(fy * 64);
        return img.at(row, col);
    };
    CHECK(px(0.5, 0.5) == 0.7f);
    CHECK(px(0.74, 0.5) == 0.7f);  // inside along the long axis
    CHECK(px(0.5, 0.74) == 0.0f);  // outside along the short axis
    CHECK(px(0.05, 0.05) == 0.0f);

    // a quarter turn swaps the roles of the axes
    e.phi = std::asin(1.0); // pi/2
    const Image rot = render_ellipses(64, {&e, 1});
    CHECK(rot.at(47, 32) == 0.7f);
    CHECK(rot.at(32, 47) == 0.0f);
}

TEST_CASE("axis-aligned centered ellipse is mirror symmetric") {
    Ellipse e;
    e.a = 0.22;
    e.b = 0.13;
    e.value = 0.5;
    const Image img = render_ellipses(32, {&e, 1});
    for (std::size_t r = 0; r < 32; ++r)
        for (std::size_t c = 0; c < 32; ++c) {
            CHECK(img.at(r, c) == img.at(31 - r, c));
            CHECK(img.at(r, c) == img.at(r, 31 - c));
        }
}

TEST_CASE("overlaps accumulate and clip to one") {
    Ellipse e;
    e.a = 0.25;
    e.b = 0.25;
    e.value = 0.8;
    const Ellipse two[] = {e, e};
    const Image img = render_ellipses(16, two);
    CHECK(img.at(8, 8) == 1.0f); // 1.6 clipped
    float lo = 1.0f, hi = 0.0f;
    for (float v : img.tensor.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo >= 0.0f);
    CHECK(hi <= 1.0f);
}

TEST_CASE("generate_phantom is a pure function of the spec") {
    PhantomSpec spec;
    spec.size = 48;
    spec.n_ellipses = 6;
    spec.seed = 99;
    const Image a = generate_phantom(spec);
    const Image b = generate_phantom(spec);
    REQUIRE(a.tensor.same_shape(b.tensor));
    for (std::size_t i = 0; i < a.tensor.size(); ++i)
        CHECK(a.tensor.data()[i] == b.tensor.data()[i]);

    spec.seed = 100;
    const Image c = generate_phantom(spec);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.tensor.size(); ++i)
        any_diff = any_diff || a.tensor.data()[i] != c.tensor.data()[i];
    CHECK(any_diff);
}

TEST_CASE("phantom support stays inside the inscribed circle") {
    PhantomSpec spec;
    spec.size = 64;
    spec.n_ellipses = 8;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        spec.seed = seed;
        const Image img = generate_phantom(spec);
        for (std::size_t r = 0; r < 64; ++r)
            for (std::size_t c = 0; c < 64; ++c) {
                const double y = (r + 0.5) / 64.0 - 0.5;
                const double x = (c + 0.5) / 64.0 - 0.5;
                if (x * x + y * y > 0.25 + 1e-12)
                    CHECK(img.at(r, c) == 0.0f);
            }
    }
}

TEST_CASE("bad specs are rejected") {
    PhantomSpec spec;
    spec.size = 4;
    CHECK_THROWS_AS(generate_phantom(spec), ValueError);
    spec.size = 64;
    spec.n_ellipses = 0;
    CHECK_THROWS_AS(generate_phantom(spec), ValueError);
    Ellipse e;
    e.a = -0.1;
    CHECK_THROWS_AS(render_ellipses(16, {&e, 1}), ValueError);
}
