#ifndef CNCREG_PHANTOM_HPP
#define CNCREG_PHANTOM_HPP

#include <cstdint>
#include <span>

#include "cncreg/tensor.hpp"

namespace cncreg {

// Axis-rotated ellipse in normalized [0,1]^2 coordinates; x runs along
// columns, y along rows, and phi rotates counter-clockwise.
struct Ellipse {
    double cx = 0.5;
    double cy = 0.5;
    double a = 0.25;   // semi-axis along the rotated x direction
    double b = 0.25;
    double phi = 0.0;
    double value = 1.0;
};

struct PhantomSpec {
    int size = 64;
    int n_ellipses = 5;
    std::uint64_t seed = 0;
    double intensity_lo = 0.2; // intensities drawn from (0,1]
    double intensity_hi = 0.9;
};

// Sums ellipse intensities over pixel centers, then clips to [0,1].
Image render_ellipses(int size, std::span<const Ellipse> ellipses);

// Deterministic function of the spec: same spec, same image.
Image generate_phantom(const PhantomSpec& spec);

} // namespace cncreg

#endif
