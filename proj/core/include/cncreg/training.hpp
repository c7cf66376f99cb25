#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cncreg/networks.hpp"
#include "cncreg/operators.hpp"
#include "cncreg/rng.hpp"

namespace cncreg {

// Deterministic shuffled index source over a backing sample set.
// Finite streams raise once drained, naming themselves; cycling streams
// reshuffle and continue.
class SampleStream {
public:
    enum class Mode { Finite, Cycle };

    SampleStream(std::string name, std::size_t count, Mode mode,
                 std::uint64_t seed);

    std::size_t count() const { return order_.size(); }
    std::size_t next();
    void take(std::span<std::size_t> out);

private:
    void reshuffle();

    std::string name_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    Mode mode_;
    Rng rng_;
};

struct TrainConfig {
    int n_iterations = 1000;
    int batch_size = 16;
    double lr = 1e-4;
    double gp_weight = 10.0;
    double rmsprop_decay = 0.9;
    double rmsprop_eps = 1e-8;
    int checkpoint_every = 0; // 0 means final checkpoint only
    int log_every = 1;
    std::uint64_t seed = 0;
};

// Four unpaired corpora. The critics only see marginal distributions, so no
// index correlation between them is assumed or used: each corpus gets its own
// independently seeded shuffler and they may have different sizes.
struct TrainDataset {
    std::vector<std::vector<double>> real_images;
    std::vector<std::vector<double>> artifact_images;
    std::vector<std::vector<double>> clean_sinograms;
    std::vector<std::vector<double>> noisy_sinograms;
};

// One critic pass over a batch: adversarial loss plus the one-sided unit
// gradient-norm penalty at random interpolates,
//   loss = mean f(real) - mean f(fake) + w * mean (max(0, ||grad f|| - 1))^2.
// When grads is non-null the parameter gradient is written in param_refs
// enumeration order.
struct CriticEval {
    double loss = 0.0;
    double penalty = 0.0;
    double grad_norm_mean = 0.0; // mean interpolate gradient norm
};

CriticEval eval_convex_critic(const IcnnParams& p, double mu,
                              const std::vector<std::vector<double>>& real,
                              const std::vector<std::vector<double>>& fake,
                              std::span<const double> mix, double gp_weight,
                              std::vector<std::vector<double>>* grads);

CriticEval eval_weakly_convex_critic(const IwcnnParams& p,
                                     const std::vector<std::vector<double>>& real,
                                     const std::vector<std::vector<double>>& fake,
                                     std::span<const double> mix,
                                     double gp_weight,
                                     std::vector<std::vector<double>>* grads);

// Penalty and loss with the interpolation weights drawn internally, one
// uniform draw per real/fake pair. The penalty comes back unweighted.
double gradient_penalty(const IcnnParams& p, double mu,
                        const std::vector<std::vector<double>>& real,
                        const std::vector<std::vector<double>>& fake,
                        std::uint64_t seed);
double gradient_penalty(const IwcnnParams& p,
                        const std::vector<std::vector<double>>& real,
                        const std::vector<std::vector<double>>& fake,
                        std::uint64_t seed);
double critic_loss(const IcnnParams& p, double mu,
                   const std::vector<std::vector<double>>& real,
                   const std::vector<std::vector<double>>& fake,
                   double gp_weight, std::uint64_t seed);
double critic_loss(const IwcnnParams& p,
                   const std::vector<std::vector<double>>& real,
                   const std::vector<std::vector<double>>& fake,
                   double gp_weight, std::uint64_t seed);

struct RmspropState {
    std::vector<std::vector<double>> v;
};

void rmsprop_init(RmspropState& st, const std::vector<ParamRef>& refs);

// Raises on any non-finite gradient before touching parameters or state.
void rmsprop_step(const std::vector<ParamRef>& refs,
                  const std::vector<std::vector<double>>& grads,
                  RmspropState& st, double lr, double decay, double eps);

struct TrainLogRow {
    int iteration = 0;
    double loss_c = 0.0;
    double loss_wc = 0.0;
    double penalty_c = 0.0;
    double penalty_wc = 0.0;
    double lipschitz_estimate = 0.0;
    double wallclock = 0.0; // seconds since training start
};

struct TrainResult {
    RegularizerCnc params;
    std::vector<TrainLogRow> log;
    int iterations_run = 0;
    bool aborted_nonfinite = false;
};

using CheckpointHook = std::function<void(int iteration, const RegularizerCnc&)>;

// Decoupled critic training: each iteration updates the image critic and the
// measurement critic on independent batches, re-projecting constrained
// weights after every step. The operator must be normalized beforehand.
// On a non-finite loss or gradient the run stops and the last finished
// iteration's parameters are returned with aborted_nonfinite set.
TrainResult train_acncr(RegularizerCnc init, const LinearOperator& op,
                        const TrainDataset& data, const TrainConfig& cfg,
                        const CheckpointHook& hook = {},
                        std::ostream* jsonl = nullptr);

// Largest sampled secant slope |f(a) - f(b)| / ||a - b|| per critic, with a
// and b drawn from independently shuffled corpora (images for the convex
// side, sinograms for the other). Coincident pairs are skipped.
struct LipschitzEstimate {
    double convex_side = 0.0;
    double weakly_convex_side = 0.0;
};

LipschitzEstimate empirical_lipschitz(const RegularizerCnc& r,
                                      const TrainDataset& data, int n_samples,
                                      std::uint64_t seed);

} // namespace cncreg
