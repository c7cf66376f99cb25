#ifndef CNCREG_NET_ENGINE_HPP
#define CNCREG_NET_ENGINE_HPP

// Batched evaluation / differentiation engine behind the public network API.
// Activations live in Eigen matrices with one sample per column; conv maps
// run as im2col + GEMM per sample. The tangent (dot) fields implement a
// forward directional derivative alongside the primal pass, and
// jvp_backward differentiates that composite graph, which is what the
// gradient-penalty parameter gradient needs.

#include <Eigen/Dense>

#include "cncreg/networks.hpp"

namespace cncreg::detail {

using Mat = Eigen::MatrixXd;

void map_apply(const LayerMap& m, const Mat& x, Mat& y);
void map_adjoint(const LayerMap& m, const Mat& g, Mat& gx);
// accumulates d(loss)/dW given layer input x and output cotangent gy
void map_grad_w(const LayerMap& m, const Mat& x, const Mat& gy,
                std::vector<double>& gw);

// spectral norm of the linear map via power iteration on W^T W
double map_spectral_norm(const LayerMap& m, int iters = 300, double tol = 1e-12);

struct BlockCache {
    Mat in, u, z;
    Mat indot, udot, zdot;
};

struct ForwardCache {
    Mat x, xdot;
    std::vector<BlockCache> blocks;
    Mat head_in, head_in_dot; // after pooling when head_pool is set
    Mat out, outdot;
};

// Primal pass, optionally carrying a tangent direction xdot.
void forward(const FeedForwardNet& net, const Mat& x, ForwardCache& cache,
             const Mat* xdot = nullptr);

// fills the tangent stream of a cache produced by a plain forward pass
void forward_tangent(const FeedForwardNet& net, ForwardCache& cache,
                     const Mat& xdot);

// One gradient buffer per param_refs entry, same order.
struct GradSink {
    std::vector<std::vector<double>> g;
    void init(const FeedForwardNet& net);
    void scale(double s);
};

// Reverse pass seeded on the output; fills the input gradient (if gx) and
// accumulates parameter gradients (if sink).
void backward(const FeedForwardNet& net, const ForwardCache& cache,
              const Mat& out_seed, GradSink* sink, Mat* gx);

// Reverse pass over the primal+tangent graph, seeded on both outputs.
void jvp_backward(const FeedForwardNet& net, const ForwardCache& cache,
                  const Mat& out_seed, const Mat& outdot_seed, GradSink* sink,
                  Mat* gx, Mat* gxdot);

// head input from the last block output (pooling if configured)
void head_input(const FeedForwardNet& net, const Mat& z_last, Mat& h);

double act_sup_d1(Activation a, double slope);
double act_sup_d2(Activation a);

// structural checks shared by factories and checkpoint loading
void validate_icnn_structure(const IcnnParams& p);
void validate_smooth_structure(const SmoothNetParams& p);

} // namespace cncreg::detail

#endif
