#pragma once

#include <filesystem>
#include <functional>
#include <random>

#include "nusr/degrade.hpp"
#include "nusr/unetpp.hpp"

namespace nusr {

enum class LossKind { MSE, NLMSE };

LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind kind);

struct TrainConfig {
    LossKind loss = LossKind::NLMSE;
    double learning_rate = 1e-4;
    double weight_decay = 5e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::int64_t steps = 60000;
    std::uint64_t seed = 0;
    double nlmse_epsilon = 1e-12;
    std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint
    std::int64_t val_every = 0;         // 0: validate only at the end
    double norm_lo = -0.5;              // clamp/metric range of the image domain
    double norm_hi = 0.5;

    void validate() const;
};

// (1/n) * sum((pred - target)^2). Differentiable through the tensor engine.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// (1/n) * ln(sum((pred - target)^2) + epsilon); the 1/n sits outside the log.
// epsilon keeps the loss defined at a perfect fit.
Tensor nlmse_loss(const Tensor& pred, const Tensor& target, double epsilon);

struct AdamState {
    std::vector<std::vector<scalar>> m;  // aligned with the parameter order
    std::vector<std::vector<scalar>> v;
    std::int64_t t = 0;

    void init_for(const std::vector<std::pair<std::string, Tensor>>& params);
    bool initialized() const { return !m.empty(); }
};

// Coupled L2 weight decay (g += wd * theta before the moment updates), then
// one bias-corrected Adam step applied in place.
void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
               const TrainConfig& cfg);

struct TrainState {
    std::int64_t step = 0;
    AdamState adam;
    std::mt19937_64 rng;
    std::vector<std::pair<std::int64_t, double>> loss_history;
    std::vector<std::tuple<std::int64_t, double, double>> val_history;  // step, psnr, ssim
    double best_val_psnr = -1e300;
};

// Deterministic shuffled split; |train| = round(0.75 * N). Requires N >= 4.
std::pair<std::vector<PairedSample>, std::vector<PairedSample>> split_dataset(
    const std::vector<PairedSample>& samples, std::uint64_t seed);

// Filesystem side-channels of a run; leave out_dir empty for an in-memory run.
// on_checkpoint fires every cfg.checkpoint_every steps (and is not called at
// the end; callers own the final save). on_validate fires after every
// validation pass, once state has absorbed the result; callers use it for
// best-model snapshots.
struct TrainIO {
    std::filesystem::path out_dir;
    bool verbose = false;
    std::function<void(std::int64_t step)> on_checkpoint;
    std::function<void(std::int64_t step, double val_psnr, double val_ssim)> on_validate;
};

// Residual-learning loop: per step, draw a sample in shuffled epoch order,
// forward, loss against the residual target, backward, Adam. Resuming from a
// checkpointed TrainState continues bit-exactly. Aborts on a non-finite loss.
void train(UNetPPModel& model, const std::vector<PairedSample>& train_set,
           const std::vector<PairedSample>& val_set, const TrainConfig& cfg, TrainState& state,
           const TrainIO& io = {});

// Mean PSNR / mean SSIM of super_resolve(model, lf) against hf over a set.
// PSNR uses the spec'd normalization range as peak; infinite values (perfect
// reconstructions) are excluded from the mean.
std::pair<double, double> validate(const UNetPPModel& model,
                                   const std::vector<PairedSample>& val_set, double norm_lo,
                                   double norm_hi);

// Trailing moving average of the loss history at a given step.
double smoothed_loss_at(const std::vector<std::pair<std::int64_t, double>>& history,
                        std::int64_t step, std::int64_t window);

}  // namespace nusr
