#ifndef CNCREG_METRICS_HPP
#define CNCREG_METRICS_HPP

#include "cncreg/tensor.hpp"

namespace cncreg {

// Peak signal-to-noise ratio, 10*log10(range^2 / MSE). Returns +infinity for
// identical inputs. data_range defaults to 1.0 for [0,1] images.
double psnr(const Image& a, const Image& b, double data_range = 1.0);

// Structural similarity with the standard 11x11 Gaussian window (sigma 1.5),
// C1 = (0.01*range)^2, C2 = (0.03*range)^2, averaged over positions where the
// window fits entirely inside the image. Requires min(H, W) >= 11.
double ssim(const Image& a, const Image& b, double data_range = 1.0);

} // namespace cncreg

#endif
