#include <complex>
#include <cmath>
#include <vector>

#include "cncreg/operators.hpp"

namespace cncreg {

namespace {

constexpr double kPi = 3.14159265358979323846;

// iterative radix-2 Cooley-Tukey; n must be a power of two
void fft(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        for (auto& x : a)
            x /= static_cast<double>(n);
    }
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n)
        p <<= 1;
    return p;
}

// Frequency response of the band-limited ramp, built from its spatial-domain
// kernel (value 1/4 at zero, -1/(pi n)^2 at odd offsets). Taking the FFT of
// that kernel instead of |f| directly keeps the DC term positive and avoids
// the bias a naive sampled ramp introduces.
std::vector<double> ramp_filter(std::size_t n) {
    std::vector<std::complex<double>> kernel(n, 0.0);
    kernel[0] = 0.25;
    for (std::size_t m = 1; m < n / 2; m += 2) {
        const double v = -1.0 / (kPi * kPi * static_cast<double>(m) * static_cast<double>(m));
        kernel[m] = v;
        kernel[n - m] = v;
    }
    fft(kernel, false);
    std::vector<double> filt(n);
    for (std::size_t i = 0; i < n; ++i)
        filt[i] = 2.0 * kernel[i].real();
    return filt;
}

} // namespace

Image fbp(const Sinogram& y, const RadonGeometry& geom) {
    geom.validate();
    if (y.n_angles() != static_cast<std::size_t>(geom.n_angles) ||
        y.n_detectors() != static_cast<std::size_t>(geom.n_detectors))
        throw ValueError("fbp: sinogram shape does not match geometry");

    const auto nd = static_cast<std::size_t>(geom.n_detectors);
    const std::size_t padded = next_pow2(std::max<std::size_t>(64, 2 * nd));
    const std::vector<double> filt = ramp_filter(padded);

    std::vector<double> filtered(y.tensor.size());
    std::vector<std::complex<double>> row(padded);
    for (std::size_t a = 0; a < y.n_angles(); ++a) {
        std::fill(row.begin(), row.end(), std::complex<double>(0.0, 0.0));
        for (std::size_t d = 0; d < nd; ++d)
            row[d] = static_cast<double>(y.at(a, d));
        fft(row, false);
        for (std::size_t i = 0; i < padded; ++i)
            row[i] *= filt[i];
        fft(row, true);
        for (std::size_t d = 0; d < nd; ++d)
            filtered[a * nd + d] = row[d].real();
    }

    const LinearOperator op = LinearOperator::radon(geom);
    std::vector<double> img = op.adjoint(filtered);
    const double scale = kPi / (2.0 * geom.n_angles);
    for (double& p : img)
        p *= scale;

    const auto n = static_cast<std::uint32_t>(geom.image_size);
    return Image(Tensor::from_doubles({n, n}, img));
}

} // namespace cncreg
