#include "nusr/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "nusr/metrics.hpp"
#include "nusr/ops.hpp"
#include "nusr/rng.hpp"

namespace nusr {

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "mse") return LossKind::MSE;
    if (s == "nlmse") return LossKind::NLMSE;
    throw ConfigError("unknown loss '" + s + "' (expected 'mse' or 'nlmse')");
}

std::string to_string(LossKind kind) {
    return kind == LossKind::MSE ? "mse" : "nlmse";
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) {
        throw ConfigError("learning rate must be positive, got " + std::to_string(learning_rate));
    }
    if (weight_decay < 0.0) {
        throw ConfigError("weight decay must be non-negative, got " +
                          std::to_string(weight_decay));
    }
    if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (adam_eps <= 0.0) {
        throw ConfigError("adam epsilon must be positive");
    }
    if (steps < 0) {
        throw ConfigError("steps must be non-negative, got " + std::to_string(steps));
    }
    if (nlmse_epsilon <= 0.0) {
        throw ConfigError("nlmse epsilon must be positive");
    }
    if (checkpoint_every < 0 || val_every < 0) {
        throw ConfigError("checkpoint/validation cadences must be non-negative");
    }
    if (!(norm_lo < norm_hi)) {
        throw ConfigError("normalization range must satisfy lo < hi");
    }
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) {
        throw DimensionError("mse_loss: shape mismatch, " + shape_str(pred.shape()) + " vs " +
                             shape_str(target.shape()));
    }
    return mean(square(sub(pred, target)));
}

Tensor nlmse_loss(const Tensor& pred, const Tensor& target, double epsilon) {
    if (pred.shape() != target.shape()) {
        throw DimensionError("nlmse_loss: shape mismatch, " + shape_str(pred.shape()) + " vs " +
                             shape_str(target.shape()));
    }
    if (epsilon <= 0.0) {
        throw DomainError("nlmse_loss: epsilon must be positive, got " + std::to_string(epsilon));
    }
    const Tensor eps = Tensor::full({1}, static_cast<scalar>(epsilon));
    const scalar inv_n = static_cast<scalar>(1.0 / static_cast<double>(pred.numel()));
    return mul_scalar(log(add(sum(square(sub(pred, target))), eps)), inv_n);
}

void AdamState::init_for(const std::vector<std::pair<std::string, Tensor>>& params) {
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& [name, p] : params) {
        (void)name;
        m.emplace_back(static_cast<std::size_t>(p.numel()), scalar(0));
        v.emplace_back(static_cast<std::size_t>(p.numel()), scalar(0));
    }
    t = 0;
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
               const TrainConfig& cfg) {
    if (!state.initialized()) {
        state.init_for(params);
    }
    if (state.m.size() != params.size()) {
        throw UsageError("adam_step: optimizer state holds " + std::to_string(state.m.size()) +
                         " slots but the model has " + std::to_string(params.size()) +
                         " parameters");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.t));
    const scalar lr = static_cast<scalar>(cfg.learning_rate);
    const scalar wd = static_cast<scalar>(cfg.weight_decay);
    const scalar b1 = static_cast<scalar>(cfg.adam_beta1);
    const scalar b2 = static_cast<scalar>(cfg.adam_beta2);
    const scalar eps = static_cast<scalar>(cfg.adam_eps);
    const scalar inv_bc1 = static_cast<scalar>(1.0 / bc1);
    const scalar inv_bc2 = static_cast<scalar>(1.0 / bc2);

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi].second;
        const auto g_in = p.grad();  // throws UsageError if no gradient was accumulated
        auto theta = p.data_mut();
        if (state.m[pi].size() != theta.size()) {
            throw UsageError("adam_step: state slot " + std::to_string(pi) + " has " +
                             std::to_string(state.m[pi].size()) + " entries, parameter '" +
                             params[pi].first + "' has " + std::to_string(theta.size()));
        }
        scalar* m = state.m[pi].data();
        scalar* v = state.v[pi].data();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            // Coupled L2: the decay term joins the gradient before the moments.
            const scalar g = g_in[i] + wd * theta[i];
            m[i] = b1 * m[i] + (scalar(1) - b1) * g;
            v[i] = b2 * v[i] + (scalar(1) - b2) * g * g;
            const scalar m_hat = m[i] * inv_bc1;
            const scalar v_hat = v[i] * inv_bc2;
            theta[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

std::pair<std::vector<PairedSample>, std::vector<PairedSample>> split_dataset(
    const std::vector<PairedSample>& samples, std::uint64_t seed) {
    const std::size_t n = samples.size();
    if (n < 4) {
        throw UsageError("split_dataset needs at least 4 samples to form a 3:1 split, got " +
                         std::to_string(n));
    }
    const auto order = shuffle_indices(n, seed);
    const std::size_t n_train =
        static_cast<std::size_t>(std::llround(0.75 * static_cast<double>(n)));
    std::vector<PairedSample> train_set, val_set;
    train_set.reserve(n_train);
    val_set.reserve(n - n_train);
    for (std::size_t i = 0; i < n; ++i) {
        (i < n_train ? train_set : val_set).push_back(samples[order[i]]);
    }
    return {std::move(train_set), std::move(val_set)};
}

std::pair<double, double> validate(const UNetPPModel& model,
                                   const std::vector<PairedSample>& val_set, double norm_lo,
                                   double norm_hi) {
    if (val_set.empty()) {
        throw UsageError("validate: empty validation set");
    }
    MetricConfig mc;
    mc.psnr_peak = norm_hi - norm_lo;
    mc.ssim_dynamic_range = norm_hi - norm_lo;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::int64_t psnr_n = 0;
    for (const auto& s : val_set) {
        const Tensor sr = super_resolve(model, s.lf_bilinear, static_cast<scalar>(norm_lo),
                                        static_cast<scalar>(norm_hi));
        const double p = psnr(sr, s.hf, mc);
        if (!std::isinf(p)) {
            psnr_sum += p;
            ++psnr_n;
        }
        ssim_sum += ssim(sr, s.hf, mc);
    }
    const double psnr_mean =
        psnr_n > 0 ? psnr_sum / psnr_n : std::numeric_limits<double>::infinity();
    return {psnr_mean, ssim_sum / static_cast<double>(val_set.size())};
}

double smoothed_loss_at(const std::vector<std::pair<std::int64_t, double>>& history,
                        std::int64_t step, std::int64_t window) {
    if (window <= 0) {
        throw UsageError("smoothed_loss_at: window must be positive");
    }
    double sum = 0.0;
    std::int64_t count = 0;
    for (const auto& [s, v] : history) {
        if (s > step - window && s <= step) {
            sum += v;
            ++count;
        }
    }
    if (count == 0) {
        throw UsageError("smoothed_loss_at: no recorded losses in (" +
                         std::to_string(step - window) + ", " + std::to_string(step) + "]");
    }
    return sum / static_cast<double>(count);
}

namespace {

// Opens a CSV log for appending, writing the header only when the file is new.
std::ofstream open_log(const std::filesystem::path& path, const char* header) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    std::ofstream out(path, std::ios::app);
    if (!out) {
        throw IoError("cannot open log file " + path.string());
    }
    if (fresh) {
        out << header << '\n';
    }
    return out;
}

}  // namespace

void train(UNetPPModel& model, const std::vector<PairedSample>& train_set,
           const std::vector<PairedSample>& val_set, const TrainConfig& cfg, TrainState& state,
           const TrainIO& io) {
    cfg.validate();
    if (train_set.empty() && state.step < cfg.steps) {
        throw UsageError("train: empty training set");
    }
    auto params = model.parameters();
    if (!state.adam.initialized()) {
        state.adam.init_for(params);
        state.rng.seed(splitmix64(cfg.seed));
    }

    std::ofstream train_log, val_log;
    if (!io.out_dir.empty()) {
        std::filesystem::create_directories(io.out_dir);
        train_log = open_log(io.out_dir / "train_log.csv", "step,loss,lr");
        if (!val_set.empty()) {
            val_log = open_log(io.out_dir / "val_log.csv", "step,val_psnr,val_ssim");
        }
    }

    const std::int64_t n_train = static_cast<std::int64_t>(train_set.size());
    std::int64_t cached_epoch = -1;
    std::vector<std::size_t> order;

    char line[128];
    while (state.step < cfg.steps) {
        // Epoch ordering is a pure function of (seed, epoch), so a resumed run
        // draws exactly the sample sequence the uninterrupted run would have.
        const std::int64_t epoch = state.step / n_train;
        if (epoch != cached_epoch) {
            order = shuffle_indices(static_cast<std::size_t>(n_train),
                                    derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
            cached_epoch = epoch;
        }
        const PairedSample& sample = train_set[order[static_cast<std::size_t>(state.step % n_train)]];

        model.zero_grad();
        double loss_value;
        {
            Graph graph;
            const Tensor pred = forward(model, sample.lf_bilinear);
            const Tensor loss = cfg.loss == LossKind::MSE
                                    ? mse_loss(pred, sample.residual_target)
                                    : nlmse_loss(pred, sample.residual_target, cfg.nlmse_epsilon);
            loss_value = static_cast<double>(loss.item());
            if (!std::isfinite(loss_value)) {
                throw Error("training aborted at step " + std::to_string(state.step + 1) +
                            ": loss is not finite (" + std::to_string(loss_value) + ")");
            }
            backward(loss);
        }
        adam_step(params, state.adam, cfg);
        state.step += 1;
        state.loss_history.emplace_back(state.step, loss_value);

        if (train_log.is_open()) {
            std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g",
                          static_cast<long long>(state.step), loss_value, cfg.learning_rate);
            train_log << line << '\n';
        }
        if (io.verbose && state.step % 100 == 0) {
            std::fprintf(stderr, "step %lld/%lld loss %.6g\n", static_cast<long long>(state.step),
                         static_cast<long long>(cfg.steps), loss_value);
        }

        const bool last_step = state.step == cfg.steps;
        if (!val_set.empty() &&
            ((cfg.val_every > 0 && state.step % cfg.val_every == 0) || last_step)) {
            const auto [vp, vs] = validate(model, val_set, cfg.norm_lo, cfg.norm_hi);
            state.val_history.emplace_back(state.step, vp, vs);
            state.best_val_psnr = std::max(state.best_val_psnr, vp);
            if (val_log.is_open()) {
                std::snprintf(line, sizeof(line), "%lld,%.9g,%.9g",
                              static_cast<long long>(state.step), vp, vs);
                val_log << line << '\n';
            }
            if (io.verbose) {
                std::fprintf(stderr, "step %lld val psnr %.4f ssim %.4f\n",
                             static_cast<long long>(state.step), vp, vs);
            }
            if (io.on_validate) {
                io.on_validate(state.step, vp, vs);
            }
        }
        if (io.on_checkpoint && cfg.checkpoint_every > 0 &&
            state.step % cfg.checkpoint_every == 0 && !last_step) {
            io.on_checkpoint(state.step);
        }
    }
}

}  // namespace nusr
