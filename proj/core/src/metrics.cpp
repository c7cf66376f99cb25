#include "cncreg/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace cncreg {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::array<double, kWin> gaussian_taps() {
    std::array<double, kWin> w{};
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - (kWin - 1) / 2.0;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w)
        v /= sum;
    return w;
}

// separable valid-mode filter: output is (h - kWin + 1) x (w - kWin + 1)
std::vector<double> filter_valid(const std::vector<double>& img,
                                 std::size_t h, std::size_t w,
                                 const std::array<double, kWin>& taps) {
    const std::size_t wo = w - kWin + 1;
    const std::size_t ho = h - kWin + 1;
    std::vector<double> rows(h * wo);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < wo; ++c) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k)
                acc += taps[static_cast<std::size_t>(k)] *
                       img[r * w + c + static_cast<std::size_t>(k)];
            rows[r * wo + c] = acc;
        }
    }
    std::vector<double> out(ho * wo);
    for (std::size_t r = 0; r < ho; ++r) {
        for (std::size_t c = 0; c < wo; ++c) {
            double acc = 0.0;
            for (int k = 0; k < kWin; ++k)
                acc += taps[static_cast<std::size_t>(k)] *
                       rows[(r + static_cast<std::size_t>(k)) * wo + c];
            out[r * wo + c] = acc;
        }
    }
    return out;
}

void require_comparable(const Image& a, const Image& b, double data_range) {
    if (!a.tensor.same_shape(b.tensor))
        throw ValueError("metric inputs must have identical shapes");
    if (!(data_range > 0.0))
        throw ValueError("data_range must be positive");
}

} // namespace

double psnr(const Image& a, const Image& b, double data_range) {
    require_comparable(a, b, data_range);
    const auto da = a.tensor.data();
    const auto db = b.tensor.data();
    double mse = 0.0;
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(da.size());
    if (mse == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const Image& a, const Image& b, double data_range) {
    require_comparable(a, b, data_range);
    const std::size_t h = a.height();
    const std::size_t w = a.width();
    if (h < kWin || w < kWin)
        throw ValueError("ssim needs images at least 11x11");

    const std::vector<double> xa = a.tensor.to_doubles();
    const std::vector<double> xb = b.tensor.to_doubles();
    std::vector<double> aa(xa.size()), bb(xa.size()), ab(xa.size());
    for (std::size_t i = 0; i < xa.size(); ++i) {
        aa[i] = xa[i] * xa[i];
        bb[i] = xb[i] * xb[i];
        ab[i] = xa[i] * xb[i];
    }

    const auto taps = gaussian_taps();
    const auto mu_a = filter_valid(xa, h, w, taps);
    const auto mu_b = filter_valid(xb, h, w, taps);
    const auto m_aa = filter_valid(aa, h, w, taps);
    const auto m_bb = filter_valid(bb, h, w, taps);
    const auto m_ab = filter_valid(ab, h, w, taps);

    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);

    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = m_aa[i] - mu_a[i] * mu_a[i];
        const double vb = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

} // namespace cncreg
