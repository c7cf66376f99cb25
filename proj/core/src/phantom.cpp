#include "cncreg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cncreg/rng.hpp"

namespace cncreg {

Image render_ellipses(int size, std::span<const Ellipse> ellipses) {
    if (size < 8)
        throw ValueError("phantom size must be at least 8");
    for (const Ellipse& e : ellipses) {
        if (e.a <= 0.0 || e.b <= 0.0)
            throw ValueError("ellipse semi-axes must be positive");
        if (e.value < 0.0)
            throw ValueError("ellipse intensity must be nonnegative");
    }

    const auto n = static_cast<std::size_t>(size);
    std::vector<double> acc(n * n, 0.0);
    const double inv = 1.0 / size;

    for (const Ellipse& e : ellipses) {
        const double c = std::cos(e.phi);
        const double s = std::sin(e.phi);
        for (std::size_t r = 0; r < n; ++r) {
            const double y = (static_cast<double>(r) + 0.5) * inv - e.cy;
            for (std::size_t col = 0; col < n; ++col) {
                const double x = (static_cast<double>(col) + 0.5) * inv - e.cx;
                const double u = (x * c + y * s) / e.a;
                const double v = (-x * s + y * c) / e.b;
                if (u * u + v * v <= 1.0)
                    acc[r * n + col] += e.value;
            }
        }
    }

    std::vector<float> pixels(n * n);
    for (std::size_t i = 0; i < pixels.size(); ++i)
        pixels[i] = static_cast<float>(std::clamp(acc[i], 0.0, 1.0));
    return Image(Tensor({static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n)},
                        std::move(pixels)));
}

Image generate_phantom(const PhantomSpec& spec) {
    if (spec.size < 8)
        throw ValueError("phantom size must be at least 8");
    if (spec.n_ellipses < 1)
        throw ValueError("phantom needs at least one ellipse");
    if (!(spec.intensity_lo > 0.0) || spec.intensity_hi > 1.0 ||
        spec.intensity_lo > spec.intensity_hi)
        throw ValueError("intensity range must satisfy 0 < lo <= hi <= 1");

    Rng rng(spec.seed);
    std::vector<Ellipse> ellipses(static_cast<std::size_t>(spec.n_ellipses));
    for (Ellipse& e : ellipses) {
        // support stays inside the circle inscribed in the unit square, so
        // every structure is covered by rays at all view angles
        e.cx = rng.uniform(0.30, 0.70);
        e.cy = rng.uniform(0.30, 0.70);
        e.a = rng.uniform(0.06, 0.28);
        e.b = rng.uniform(0.06, 0.28);
        e.phi = rng.uniform(0.0, 3.14159265358979323846);
        e.value = rng.uniform(spec.intensity_lo, spec.intensity_hi);
    }
    return render_ellipses(spec.size, ellipses);
}

} // namespace cncreg
