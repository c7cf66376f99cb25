#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "cncreg/networks.hpp"
#include "cncreg/operators.hpp"

namespace cncreg {

// Convexity regime of the variational objective
//   J(x) = ||Ax - y||^2 + alpha (r_c(x) + r_wc(Ax)).
// With rho the weak-convexity modulus of r_wc and mu the quadratic
// coefficient of r_c: alpha rho <= 1 keeps J strongly convex with modulus
// alpha mu; past the boundary the guaranteed modulus degrades by
// (alpha rho - 1) ||A||^2. A nonpositive weakly convex modulus still
// certifies a convex objective, only the strong guarantee is lost.
enum class Regime { StronglyConvex, WeaklyConvex };

struct RegimeInfo {
    Regime regime = Regime::StronglyConvex;
    double modulus = 0.0;
};

RegimeInfo classify_regime(double alpha, double mu, double rho, double op_norm);

double objective(const LinearOperator& op, const RegularizerCnc& r,
                 double alpha, std::span<const double> x,
                 std::span<const double> y);

// 2 A^T (Ax - y) + alpha (grad r_c(x) + A^T grad r_wc(Ax))
std::vector<double> objective_subgradient(const LinearOperator& op,
                                          const RegularizerCnc& r, double alpha,
                                          std::span<const double> x,
                                          std::span<const double> y);

enum class SolveMethod { Subgradient, Accelerated };
enum class StepRule { Constant, Diminishing, StronglyConvex };
enum class InitMode { Fbp, Zero, Provided };

struct SolveConfig {
    double alpha = 1.0;
    SolveMethod method = SolveMethod::Subgradient;
    StepRule step_rule = StepRule::Constant;
    double step_size = 1e-3; // base size for constant and diminishing rules
    InitMode init = InitMode::Fbp;
    std::vector<double> x0;        // starting point when init is Provided
    std::vector<double> reference; // ground truth for trace quality, optional
    int n_steps = 200;
    double momentum_scale = 1.0; // accelerated method only; 0 gives plain descent
};

struct TraceRow {
    int iteration = 0;
    double objective = 0.0;
    double grad_norm = 0.0;
    double step = 0.0;
    double psnr = 0.0; // NaN without a reference
};

struct SolveTrace {
    std::vector<TraceRow> rows;
};

// header: iteration,objective,grad_norm,step,psnr
void write_trace_csv(const SolveTrace& trace, std::ostream& os);

// Best iterate selection: by reconstruction quality against the reference
// when one is given, by objective value otherwise. A non-finite iterate
// aborts the run; x then holds the best iterate seen instead of the final one.
struct SolveResult {
    std::vector<double> x; // final iterate, or best-so-far after an abort
    std::vector<double> best_x;
    SolveTrace trace;
    int best_iteration = 0;
    double best_psnr = 0.0; // NaN without a reference
    bool aborted_nonfinite = false;
};

SolveResult subgradient_descent(const LinearOperator& op,
                                const RegularizerCnc& r,
                                std::span<const double> y,
                                const SolveConfig& cfg);

SolveResult accelerated_gd(const LinearOperator& op, const RegularizerCnc& r,
                           std::span<const double> y, const SolveConfig& cfg);

SolveResult solve_variational(const LinearOperator& op, const RegularizerCnc& r,
                              std::span<const double> y,
                              const SolveConfig& cfg);

// Smoothed isotropic total variation baseline,
//   ||Ax - y||^2 + weight sum sqrt(dx^2 + dy^2 + epsilon^2),
// minimized by accelerated gradient descent. Tomographic operators start
// from the analytic reconstruction, matrix operators from A^T y; rank-1
// domains are treated as single-row images.
struct TvConfig {
    double weight = 0.01;
    double epsilon = 1e-6;
    double step_size = 5e-4;
    int n_steps = 300;
};

std::vector<double> tv_reconstruct(const LinearOperator& op,
                                   std::span<const double> y,
                                   const TvConfig& cfg);

} // namespace cncreg
