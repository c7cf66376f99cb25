#ifndef CNCREG_TENSOR_HPP
#define CNCREG_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cncreg/errors.hpp"

namespace cncreg {

// Dense row-major float32 array with explicit shape. This is the on-disk and
// data-exchange type; numerical kernels work in double and convert at the
// boundary. Invariants: size() == product(shape), every entry finite.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::uint32_t> shape);
    Tensor(std::vector<std::uint32_t> shape, std::vector<float> data);

    static Tensor from_doubles(std::vector<std::uint32_t> shape,
                               std::span<const double> values);

    const std::vector<std::uint32_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::span<const float> data() const { return data_; }
    std::span<float> data() { return data_; }

    // rank-2 accessors
    float at(std::size_t r, std::size_t c) const;
    float& at(std::size_t r, std::size_t c);

    std::vector<double> to_doubles() const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    static std::size_t checked_element_count(const std::vector<std::uint32_t>& shape);

private:
    std::vector<std::uint32_t> shape_;
    std::vector<float> data_;
};

// Rank-2 tensor interpreted as an image, height x width, both >= 2.
struct Image {
    Image() = default;
    explicit Image(Tensor t);
    Image(std::size_t height, std::size_t width);

    std::size_t height() const { return tensor.shape()[0]; }
    std::size_t width() const { return tensor.shape()[1]; }

    float at(std::size_t r, std::size_t c) const { return tensor.at(r, c); }
    float& at(std::size_t r, std::size_t c) { return tensor.at(r, c); }

    Tensor tensor;
};

// Rank-2 tensor of line-integral data, n_angles x n_detectors.
struct Sinogram {
    Sinogram() = default;
    explicit Sinogram(Tensor t);
    Sinogram(std::size_t n_angles, std::size_t n_detectors);

    std::size_t n_angles() const { return tensor.shape()[0]; }
    std::size_t n_detectors() const { return tensor.shape()[1]; }

    float at(std::size_t a, std::size_t d) const { return tensor.at(a, d); }
    float& at(std::size_t a, std::size_t d) { return tensor.at(a, d); }

    Tensor tensor;
};

} // namespace cncreg

#endif
