#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cncreg/operators.hpp"
#include "cncreg/solvers.hpp"

namespace cncreg {

// Continuous piecewise-linear function on the real line. Piece i covers
// (b_{i-1}, b_i], the first piece runs from -inf and the last to +inf, so
// evaluation at a breakpoint takes the left piece. Adjacent pieces must agree
// at their shared breakpoint to within 1e-9.
struct PwlPiece {
    double slope = 0.0;
    double intercept = 0.0; // f(x) = slope * x + intercept on the piece
};

class PiecewiseLinear1D {
public:
    PiecewiseLinear1D(std::vector<double> breakpoints,
                      std::vector<PwlPiece> pieces);

    // continuous function through (x0, f0) with the given slopes
    static PiecewiseLinear1D from_slopes(double x0, double f0,
                                         std::vector<double> breakpoints,
                                         std::vector<double> slopes);

    double eval(double x) const;
    double operator()(double x) const { return eval(x); }

    // slopes nondecreasing, allowing tol of backsliding
    bool is_convex(double tol = 0.0) const;

    const std::vector<double>& breakpoints() const { return breaks_; }
    const std::vector<PwlPiece>& pieces() const { return pieces_; }

private:
    std::vector<double> breaks_;
    std::vector<PwlPiece> pieces_;
};

// Explicit refutation of claimed rho-weak convexity: points straddling a
// concave kink for which
//   f(lambda x1 + (1-lambda) x2) > lambda f(x1) + (1-lambda) f(x2)
//                                   + rho lambda (1-lambda) (x1-x2)^2.
// A slope drop at a kink defeats every finite rho; halving the straddle
// width below the drop/(2 rho) threshold doubles the implied modulus past
// the claim, and the violation margin stays on the order of drop^2/(16 rho),
// far above rounding.
struct ViolationWitness {
    double x1 = 0.0;
    double x2 = 0.0;
    double lambda = 0.5;
    double lhs = 0.0;
    double rhs = 0.0;
    double implied_rho = 0.0;
};

std::optional<ViolationWitness>
pwl_weak_convexity_witness(const PiecewiseLinear1D& f, double rho);

// Sampled lower bound on the weak-convexity modulus of a black-box function
// over the box [lo, hi]^dim, floored at zero. Needs at least 100 triples.
double estimate_weak_convexity_modulus(
    const std::function<double(std::span<const double>)>& f, int dim,
    double lo, double hi, int n_triples, std::uint64_t seed);

// Noise-to-zero study. Per level k the measurement is A x_true plus noise of
// norm exactly delta_k, solved at alpha_k. The schedule must drive delta,
// alpha and delta/alpha to zero; a schedule like alpha = delta^2 sends the
// ratio to infinity and is rejected before any solve runs.
struct ConvergenceSchedule {
    std::vector<double> deltas;
    std::vector<double> alphas;
};

struct ConvergenceRow {
    double delta = 0.0;
    double alpha = 0.0;
    double error = 0.0; // l2 distance to x_true
    double objective = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    bool solver_failed = false;
    // final error under tol, and the worst late error under the worst early
    // error (decay actually happened)
    bool pass = false;
};

ConvergenceReport convergence_experiment(const LinearOperator& op,
                                         const RegularizerCnc& r,
                                         std::span<const double> x_true,
                                         const ConvergenceSchedule& schedule,
                                         const SolveConfig& base, double tol,
                                         std::uint64_t seed);

// Perturbation study in the strongly convex regime: for random direction
// noise of the given norm, solutions must stay within
// 2 ||A|| ||dy|| / (alpha mu) plus the solver slack. Outside alpha rho <= 1
// the premise fails and the call is refused.
struct StabilityReport {
    int n_perturbations = 0;
    double max_distance = 0.0;
    double max_ratio = 0.0; // worst distance / bound
    double bound = 0.0;     // 2 ||A|| magnitude / (alpha mu) + tol
    bool all_within = false;
};

StabilityReport stability_experiment(const LinearOperator& op,
                                     const RegularizerCnc& r, double alpha,
                                     double rho, std::span<const double> y,
                                     int n_perturbations, double magnitude,
                                     const SolveConfig& base, double tol,
                                     std::uint64_t seed);

} // namespace cncreg
