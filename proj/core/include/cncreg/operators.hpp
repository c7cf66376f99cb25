#ifndef CNCREG_OPERATORS_HPP
#define CNCREG_OPERATORS_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "cncreg/tensor.hpp"

namespace cncreg {

// Parallel-beam sampling geometry. Angles are radians in [0, pi), strictly
// increasing; detector offsets are centered and unit-spaced by default, in
// pixel units.
struct RadonGeometry {
    int image_size = 0;
    int n_angles = 0;
    int n_detectors = 0;
    double detector_spacing = 1.0;
    std::vector<double> angles;

    // uniform angles over [0, arc); arc = pi gives the full parallel range
    static RadonGeometry uniform(int image_size, int n_angles, int n_detectors,
                                 double arc, double detector_spacing = 1.0);

    void validate() const;
};

struct NoiseModel {
    double sigma = 0.0;
    std::uint64_t seed = 0;
};

// Matrix- or Radon-backed linear map between flat double vectors. `scale`
// multiplies the underlying map and is what operator normalization adjusts;
// adjoint() is the exact transpose of apply() including the scale.
class LinearOperator {
public:
    enum class Kind { Matrix, Radon };

    static LinearOperator from_matrix(std::size_t rows, std::size_t cols,
                                      std::vector<double> row_major);
    static LinearOperator radon(RadonGeometry geom);

    Kind kind() const { return kind_; }
    double scale() const { return scale_; }
    const std::vector<std::size_t>& domain_shape() const { return domain_shape_; }
    const std::vector<std::size_t>& range_shape() const { return range_shape_; }
    std::size_t domain_size() const;
    std::size_t range_size() const;

    std::vector<double> apply(std::span<const double> x) const;
    std::vector<double> adjoint(std::span<const double> y) const;

    // same map with the scale multiplied by `factor`
    LinearOperator scaled(double factor) const;

    const RadonGeometry& geometry() const;

private:
    LinearOperator() = default;

    Kind kind_ = Kind::Matrix;
    double scale_ = 1.0;
    std::vector<std::size_t> domain_shape_;
    std::vector<std::size_t> range_shape_;

    // matrix payload
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> m_;

    // radon payload
    RadonGeometry geom_;
};

struct NormEstimate {
    double value = 0.0;
    int iterations = 0;
    bool zero_operator = false; // the power iterate vanished; value is 0
};

// Power iteration on A^T A started from a seeded random unit vector.
NormEstimate estimate_operator_norm(const LinearOperator& op, int max_iters = 500,
                                    double tol = 1e-12, std::uint64_t seed = 0);

// Rescales so the estimated operator norm is 1; rejects the zero operator.
LinearOperator normalize_operator(const LinearOperator& op);

struct MeasurementVec {
    std::vector<double> y;
    double delta = 0.0; // realized noise norm, sigma * ||g||
};

struct Measurement {
    Sinogram y;
    double delta = 0.0;
};

MeasurementVec simulate_measurement(const LinearOperator& op,
                                    std::span<const double> x,
                                    const NoiseModel& noise);
Measurement simulate_measurement(const LinearOperator& op, const Image& x,
                                 const NoiseModel& noise);

// Filtered backprojection: per-angle ramp (Ram-Lak) filtering in the FFT
// domain with zero-padding to the next power of two, backprojection via the
// Radon adjoint, and the standard pi/(2*n_angles) scaling. Expects sinogram
// values in raw (unscaled) geometry units.
Image fbp(const Sinogram& y, const RadonGeometry& geom);

} // namespace cncreg

#endif
