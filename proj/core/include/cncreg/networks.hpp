#ifndef CNCREG_NETWORKS_HPP
#define CNCREG_NETWORKS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cncreg/errors.hpp"

namespace cncreg {

enum class Activation { None, LeakyRelu, Silu };

// Dense or strided-convolution weight map. Conv weights are stored row-major
// as (out_ch) x (in_ch * k * k) with zero padding k/2; feature vectors are
// flattened channel-major, index = c * (h*w) + y*w + x.
struct LayerMap {
    enum class Kind { Dense, Conv };

    Kind kind = Kind::Dense;
    int out_dim = 0, in_dim = 0;                    // dense
    int in_ch = 0, out_ch = 0, ksize = 0, stride = 1; // conv
    int in_h = 0, in_w = 0;
    std::vector<double> w;

    static LayerMap dense(int out_dim, int in_dim);
    static LayerMap conv(int in_ch, int out_ch, int ksize, int stride,
                         int in_h, int in_w);

    int out_h() const;
    int out_w() const;
    std::size_t input_size() const;
    std::size_t output_size() const;
};

// One hidden stage: z_out = act(main(z_in) + skip(x) + bias). `skip` is the
// input-injection path of convex nets; `main_nonneg` marks weights that the
// convexity constraint keeps in [0, inf).
struct Block {
    LayerMap main;
    std::optional<LayerMap> skip;
    std::vector<double> bias;
    bool main_nonneg = false;
};

struct FeedForwardNet {
    std::vector<Block> blocks;
    Activation act = Activation::LeakyRelu;
    double leaky_slope = 0.2;

    bool head_pool = false; // global average per channel before the head
    LayerMap head;          // dense map to the output dimension
    std::vector<double> head_bias;
    bool head_nonneg = false;

    std::size_t input_size() const;
    int output_dim() const;
    std::size_t head_input_size() const;
};

// Input-convex network: leaky-rectifier activations (convex, nondecreasing),
// nonnegative weights on every path that consumes previous features, and
// unconstrained input injections. Scalar output.
struct IcnnParams {
    FeedForwardNet net;
    // cleared only by the no-guarantees adversarial training mode; when
    // false this is a plain network and no convexity claim is made
    bool constrained = true;

    static IcnnParams dense(int input_dim, std::span<const int> widths,
                            std::uint64_t seed, double leaky_slope = 0.2);
    static IcnnParams conv(int in_h, int in_w, int n_layers, int channels,
                           int ksize, std::span<const int> strides,
                           std::uint64_t seed, double leaky_slope = 0.2);
};

// Smooth feed-forward net with SiLU activations and a linear head; used as
// the inner reparameterization c in weakly convex critics.
struct SmoothNetParams {
    FeedForwardNet net;

    static SmoothNetParams dense(int input_dim, std::span<const int> widths,
                                 int out_dim, std::uint64_t seed,
                                 Activation act = Activation::Silu);
    static SmoothNetParams conv(int in_h, int in_w, int n_layers, int channels,
                                int ksize, std::span<const int> strides,
                                int out_dim, std::uint64_t seed,
                                Activation act = Activation::Silu);
};

// Weakly convex critic f = inner(smooth(y)): convex Lipschitz outer net
// composed with a smooth map, so the weak-convexity modulus is bounded by
// Lip(inner) * gradLip(smooth).
struct IwcnnParams {
    SmoothNetParams smooth;
    IcnnParams inner;
};

// Convex-nonconvex regularizer: R(x, y) = theta1(x) + mu*||x||^2 + theta2(y),
// evaluated with y = Ax by the solvers.
struct RegularizerCnc {
    IcnnParams theta1;
    double mu = 0.05;
    IwcnnParams theta2;
};

double icnn_forward(const IcnnParams& p, std::span<const double> x);
std::vector<double> smoothnet_forward(const SmoothNetParams& p,
                                      std::span<const double> x);
double iwcnn_forward(const IwcnnParams& p, std::span<const double> y);

std::vector<double> icnn_input_gradient(const IcnnParams& p,
                                        std::span<const double> x);
std::vector<double> iwcnn_input_gradient(const IwcnnParams& p,
                                         std::span<const double> y);

double regularizer_value(const RegularizerCnc& r, std::span<const double> x,
                         std::span<const double> y);

struct RegularizerGrad {
    std::vector<double> gx;
    std::vector<double> gy;
};
RegularizerGrad regularizer_gradient(const RegularizerCnc& r,
                                     std::span<const double> x,
                                     std::span<const double> y);

// Clamps every constrained weight to [0, inf). Idempotent.
IcnnParams project_icnn_weights(IcnnParams p);
void project_icnn_weights_inplace(IcnnParams& p);

struct LipschitzCurvature {
    double lipschitz = 0.0;
    double curvature = 0.0; // Lipschitz bound on the gradient
};

// Layer-recursive bounds with spectral norms from power iteration:
// per layer Lip = ||W|| * sup|act'|, gradLip = ||W||^2 * sup|act''|, composed
// by Lip(g o f) = Lip(g)Lip(f) and
// gradLip(g o f) = gradLip(g)Lip(f)^2 + Lip(g)gradLip(f).
LipschitzCurvature bound_lipschitz_curvature(const SmoothNetParams& p);

// Piecewise-linear nets carry no curvature bound; only L is defined.
double bound_lipschitz(const IcnnParams& p);

struct ModulusCertificate {
    double lipschitz = 0.0;     // Lip bound of the convex outer net
    double beta = 0.0;          // gradient-Lipschitz bound of the smooth net
    double rho_bound = 0.0;     // lipschitz * beta
    double empirical_rho = 0.0; // sampled violation estimate (lower bound)
    int samples = 0;
    std::uint64_t seed = 0;
};

ModulusCertificate certify_weak_convexity(const IwcnnParams& p, int n_samples,
                                          std::uint64_t seed);
ModulusCertificate certify_weak_convexity(const RegularizerCnc& r, int n_samples,
                                          std::uint64_t seed);

// Largest sampled violation of the midpoint inequality
// f((x1+x2)/2) <= (f(x1)+f(x2))/2 over Gaussian triples; a correctly
// constrained network stays at rounding level.
double max_midpoint_violation(const IcnnParams& p, int n_triples,
                              double input_scale, std::uint64_t seed);

// Mutable views of every trainable tensor, in a fixed enumeration order.
struct ParamRef {
    std::vector<double>* values = nullptr;
    bool nonneg = false;
    std::string name;
};
std::vector<ParamRef> param_refs(FeedForwardNet& net, const std::string& prefix);
std::vector<ParamRef> param_refs(RegularizerCnc& r);

// Trainable scalars plus one for the fixed quadratic coefficient mu.
std::size_t param_count(const RegularizerCnc& r);

} // namespace cncreg

#endif
