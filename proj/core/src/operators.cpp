#include "cncreg/operators.hpp"

#include <cmath>

#include "cncreg/rng.hpp"

namespace cncreg {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::size_t product(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims)
        n *= d;
    return n;
}

} // namespace

RadonGeometry RadonGeometry::uniform(int image_size, int n_angles, int n_detectors,
                                     double arc, double detector_spacing) {
    RadonGeometry g;
    g.image_size = image_size;
    g.n_angles = n_angles;
    g.n_detectors = n_detectors;
    g.detector_spacing = detector_spacing;
    if (n_angles > 0) {
        g.angles.resize(static_cast<std::size_t>(n_angles));
        for (int i = 0; i < n_angles; ++i)
            g.angles[static_cast<std::size_t>(i)] = arc * i / n_angles;
    }
    g.validate();
    return g;
}

void RadonGeometry::validate() const {
    if (image_size < 2)
        throw ValueError("radon geometry needs image_size >= 2");
    if (n_angles < 1 || n_detectors < 1)
        throw ValueError("radon geometry needs at least one angle and detector");
    if (angles.size() != static_cast<std::size_t>(n_angles))
        throw ValueError("angle list length does not match n_angles");
    if (!(detector_spacing > 0.0))
        throw ValueError("detector spacing must be positive");
    for (std::size_t i = 0; i < angles.size(); ++i) {
        if (!(angles[i] >= 0.0) || !(angles[i] < kPi))
            throw ValueError("angles must lie in [0, pi)");
        if (i > 0 && !(angles[i] > angles[i - 1]))
            throw ValueError("angles must be strictly increasing");
    }
}

LinearOperator LinearOperator::from_matrix(std::size_t rows, std::size_t cols,
                                           std::vector<double> row_major) {
    if (rows == 0 || cols == 0)
        throw ValueError("matrix operator needs positive dimensions");
    if (row_major.size() != rows * cols)
        throw ValueError("matrix payload length does not match dimensions");
    LinearOperator op;
    op.kind_ = Kind::Matrix;
    op.rows_ = rows;
    op.cols_ = cols;
    op.m_ = std::move(row_major);
    op.domain_shape_ = {cols};
    op.range_shape_ = {rows};
    return op;
}

LinearOperator LinearOperator::radon(RadonGeometry geom) {
    geom.validate();
    LinearOperator op;
    op.kind_ = Kind::Radon;
    op.geom_ = std::move(geom);
    const auto n = static_cast<std::size_t>(op.geom_.image_size);
    op.domain_shape_ = {n, n};
    op.range_shape_ = {static_cast<std::size_t>(op.geom_.n_angles),
                       static_cast<std::size_t>(op.geom_.n_detectors)};
    return op;
}

std::size_t LinearOperator::domain_size() const { return product(domain_shape_); }
std::size_t LinearOperator::range_size() const { return product(range_shape_); }

const RadonGeometry& LinearOperator::geometry() const {
    if (kind_ != Kind::Radon)
        throw ValueError("operator has no radon geometry");
    return geom_;
}

LinearOperator LinearOperator::scaled(double factor) const {
    if (!std::isfinite(factor))
        throw ValueError("operator scale must be finite");
    LinearOperator op = *this;
    op.scale_ *= factor;
    return op;
}

namespace {

// Ray-driven line integrals: samples at unit spacing along each ray with
// bilinear interpolation of the image. `Forward` distinguishes apply (gather
// into the sinogram) from adjoint (scatter into the image); both directions
// walk the same sample/weight pattern, so the adjoint is the exact transpose.
template <bool Forward>
void radon_walk(const RadonGeometry& g, double scale,
                const double* img_or_sino, double* out) {
    const int n = g.image_size;
    const double center = (n - 1) / 2.0;
    const double det_center = (g.n_detectors - 1) / 2.0;
    const double half_diag = 0.5 * std::sqrt(2.0) * n + 1.0;
    const int t_max = static_cast<int>(std::ceil(half_diag));

    for (int a = 0; a < g.n_angles; ++a) {
        const double ca = std::cos(g.angles[static_cast<std::size_t>(a)]);
        const double sa = std::sin(g.angles[static_cast<std::size_t>(a)]);
        for (int d = 0; d < g.n_detectors; ++d) {
            const double s = (d - det_center) * g.detector_spacing;
            const std::size_t bin = static_cast<std::size_t>(a) *
                                        static_cast<std::size_t>(g.n_detectors) +
                                    static_cast<std::size_t>(d);
            // ray point: center + s * (cos, sin) + t * (-sin, cos)
            const double bx = center + s * ca;
            const double by = center + s * sa;
            double acc = 0.0;
            const double sino_val = Forward ? 0.0 : scale * img_or_sino[bin];
            for (int t = -t_max; t <= t_max; ++t) {
                const double x = bx - t * sa;
                const double y = by + t * ca;
                const int j0 = static_cast<int>(std::floor(x));
                const int i0 = static_cast<int>(std::floor(y));
                if (j0 < -1 || j0 >= n || i0 < -1 || i0 >= n)
                    continue;
                const double fx = x - j0;
                const double fy = y - i0;
                const double w00 = (1.0 - fy) * (1.0 - fx);
                const double w01 = (1.0 - fy) * fx;
                const double w10 = fy * (1.0 - fx);
                const double w11 = fy * fx;
                const bool i0ok = i0 >= 0, i1ok = i0 + 1 < n;
                const bool j0ok = j0 >= 0, j1ok = j0 + 1 < n;
                if constexpr (Forward) {
                    if (i0ok && j0ok) acc += w00 * img_or_sino[i0 * n + j0];
                    if (i0ok && j1ok) acc += w01 * img_or_sino[i0 * n + j0 + 1];
                    if (i1ok && j0ok) acc += w10 * img_or_sino[(i0 + 1) * n + j0];
                    if (i1ok && j1ok) acc += w11 * img_or_sino[(i0 + 1) * n + j0 + 1];
                } else {
                    if (i0ok && j0ok) out[i0 * n + j0] += w00 * sino_val;
                    if (i0ok && j1ok) out[i0 * n + j0 + 1] += w01 * sino_val;
                    if (i1ok && j0ok) out[(i0 + 1) * n + j0] += w10 * sino_val;
                    if (i1ok && j1ok) out[(i0 + 1) * n + j0 + 1] += w11 * sino_val;
                }
            }
            if constexpr (Forward)
                out[bin] = scale * acc;
        }
    }
}

} // namespace

std::vector<double> LinearOperator::apply(std::span<const double> x) const {
    if (x.size() != domain_size())
        throw ValueError("apply: input length does not match operator domain");
    std::vector<double> y(range_size(), 0.0);
    if (kind_ == Kind::Matrix) {
        for (std::size_t r = 0; r < rows_; ++r) {
            const double* row = m_.data() + r * cols_;
            double acc = 0.0;
            for (std::size_t c = 0; c < cols_; ++c)
                acc += row[c] * x[c];
            y[r] = scale_ * acc;
        }
    } else {
        radon_walk<true>(geom_, scale_, x.data(), y.data());
    }
    return y;
}

std::vector<double> LinearOperator::adjoint(std::span<const double> y) const {
    if (y.size() != range_size())
        throw ValueError("adjoint: input length does not match operator range");
    std::vector<double> x(domain_size(), 0.0);
    if (kind_ == Kind::Matrix) {
        for (std::size_t r = 0; r < rows_; ++r) {
            const double* row = m_.data() + r * cols_;
            const double v = scale_ * y[r];
            for (std::size_t c = 0; c < cols_; ++c)
                x[c] += row[c] * v;
        }
    } else {
        radon_walk<false>(geom_, scale_, y.data(), x.data());
    }
    return x;
}

NormEstimate estimate_operator_norm(const LinearOperator& op, int max_iters,
                                    double tol, std::uint64_t seed) {
    if (max_iters < 1)
        throw ValueError("norm estimation needs at least one iteration");
    if (tol < 0.0)
        throw ValueError("norm estimation tolerance must be nonnegative");

    Rng rng(Rng::fork(seed, 7));
    std::vector<double> v(op.domain_size());
    double nv = 0.0;
    for (double& vi : v) {
        vi = rng.normal();
        nv += vi * vi;
    }
    nv = std::sqrt(nv);
    for (double& vi : v)
        vi /= nv;

    NormEstimate est;
    double lambda_prev = 0.0;
    for (int it = 1; it <= max_iters; ++it) {
        std::vector<double> w = op.adjoint(op.apply(v));
        double rayleigh = 0.0, nw = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            rayleigh += v[i] * w[i];
            nw += w[i] * w[i];
        }
        nw = std::sqrt(nw);
        est.iterations = it;
        if (nw == 0.0) {
            est.zero_operator = true;
            est.value = 0.0;
            return est;
        }
        for (std::size_t i = 0; i < w.size(); ++i)
            v[i] = w[i] / nw;
        est.value = std::sqrt(std::max(rayleigh, 0.0));
        if (it > 1 && std::abs(rayleigh - lambda_prev) <= tol * std::abs(rayleigh))
            break;
        lambda_prev = rayleigh;
    }
    return est;
}

LinearOperator normalize_operator(const LinearOperator& op) {
    const NormEstimate est = estimate_operator_norm(op, 2000, 1e-14, 0);
    if (est.zero_operator || est.value == 0.0)
        throw ValueError("cannot normalize an operator with zero norm");
    return op.scaled(1.0 / est.value);
}

MeasurementVec simulate_measurement(const LinearOperator& op,
                                    std::span<const double> x,
                                    const NoiseModel& noise) {
    if (noise.sigma < 0.0)
        throw ValueError("noise sigma must be nonnegative");
    MeasurementVec m;
    m.y = op.apply(x);
    if (noise.sigma > 0.0) {
        Rng rng(noise.seed);
        double g2 = 0.0;
        for (double& yi : m.y) {
            const double g = rng.normal();
            yi += noise.sigma * g;
            g2 += g * g;
        }
        m.delta = noise.sigma * std::sqrt(g2);
    }
    return m;
}

Measurement simulate_measurement(const LinearOperator& op, const Image& x,
                                 const NoiseModel& noise) {
    if (op.range_shape().size() != 2)
        throw ValueError("typed measurement needs a sinogram-shaped range");
    MeasurementVec m = simulate_measurement(op, x.tensor.to_doubles(), noise);
    Tensor t = Tensor::from_doubles(
        {static_cast<std::uint32_t>(op.range_shape()[0]),
         static_cast<std::uint32_t>(op.range_shape()[1])},
        m.y);
    return Measurement{Sinogram(std::move(t)), m.delta};
}

} // namespace cncreg
