#include "cncreg/tensor.hpp"

#include <cmath>
#include <limits>

namespace cncreg {

std::size_t Tensor::checked_element_count(const std::vector<std::uint32_t>& shape) {
    if (shape.empty())
        throw ValueError("tensor shape must have at least one dimension");
    std::size_t n = 1;
    for (std::uint32_t d : shape) {
        if (d == 0)
            throw ValueError("tensor dimension must be positive");
        if (n > std::numeric_limits<std::size_t>::max() / d)
            throw ValueError("tensor shape overflows element count");
        n *= d;
    }
    // caps total elements so byte counts stay within 32-bit-safe territory
    if (n > (std::size_t{1} << 31))
        throw ValueError("tensor element count exceeds supported maximum");
    return n;
}

Tensor::Tensor(std::vector<std::uint32_t> shape)
    : shape_(std::move(shape)), data_(checked_element_count(shape_), 0.0f) {}

Tensor::Tensor(std::vector<std::uint32_t> shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_element_count(shape_) != data_.size())
        throw ValueError("tensor data length does not match shape");
    for (float v : data_) {
        if (!std::isfinite(v))
            throw ValueError("tensor entries must be finite");
    }
}

Tensor Tensor::from_doubles(std::vector<std::uint32_t> shape,
                            std::span<const double> values) {
    std::vector<float> f(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        f[i] = static_cast<float>(values[i]);
    return Tensor(std::move(shape), std::move(f));
}

float Tensor::at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
}

float& Tensor::at(std::size_t r, std::size_t c) {
    return data_[r * shape_[1] + c];
}

std::vector<double> Tensor::to_doubles() const {
    return std::vector<double>(data_.begin(), data_.end());
}

namespace {

void require_rank2(const Tensor& t, const char* what, std::size_t min_dim) {
    if (t.ndim() != 2)
        throw ValueError(std::string(what) + " must be rank 2");
    if (t.shape()[0] < min_dim || t.shape()[1] < min_dim)
        throw ValueError(std::string(what) + " dimensions too small");
}

} // namespace

Image::Image(Tensor t) : tensor(std::move(t)) {
    require_rank2(tensor, "image", 2);
}

Image::Image(std::size_t height, std::size_t width)
    : Image(Tensor({static_cast<std::uint32_t>(height),
                    static_cast<std::uint32_t>(width)})) {}

Sinogram::Sinogram(Tensor t) : tensor(std::move(t)) {
    require_rank2(tensor, "sinogram", 1);
}

Sinogram::Sinogram(std::size_t n_angles, std::size_t n_detectors)
    : Sinogram(Tensor({static_cast<std::uint32_t>(n_angles),
                       static_cast<std::uint32_t>(n_detectors)})) {}

} // namespace cncreg
