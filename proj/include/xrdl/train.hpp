#pragma once

// Adam, the training loop, and the early-stopping / checkpoint /
// plateau-LR callbacks.

#include "xrdl/checkpoint.hpp"
#include "xrdl/data.hpp"
#include "xrdl/history.hpp"
#include "xrdl/metrics.hpp"
#include "xrdl/model.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace xrdl {

template <scalar T>
struct adam_state {
    struct moments {
        tensor<T> m;
        tensor<T> v;
    };

    std::map<std::string, moments> slots;  // trainable parameters only
    std::size_t step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    /// Zero moments for every trainable parameter of `params`.
    static adam_state for_params(const param_store<T>& params, double learning_rate = 1e-3) {
        adam_state s;
        s.learning_rate = learning_rate;
        for (const auto& [name, e] : params) {
            if (e.trainable) {
                s.slots.emplace(name, moments{tensor<T>(e.value.dims()), tensor<T>(e.value.dims())});
            }
        }
        return s;
    }
};

/// One bias-corrected Adam update. `grads` must name exactly the trainable
/// parameters; frozen ones are never touched.
template <scalar T>
void adam_step(param_store<T>& params, const std::map<std::string, tensor<T>>& grads, adam_state<T>& state) {
    std::string problems;
    for (const auto& name : params.names(true)) {
        if (!grads.count(name)) {
            problems += " missing gradient for '" + name + "';";
        }
    }
    for (const auto& [name, g] : grads) {
        if (!params.contains(name) || !params.trainable(name)) {
            problems += " unexpected gradient for '" + name + "';";
        } else if (g.dims() != params.value(name).dims()) {
            problems += " gradient for '" + name + "' has shape " + to_string(g.dims()) + ";";
        }
    }
    if (!problems.empty()) {
        throw usage_error("adam_step:" + problems);
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (const auto& [name, g] : grads) {
        auto it = state.slots.find(name);
        if (it == state.slots.end()) {
            it = state.slots.emplace(name, typename adam_state<T>::moments{tensor<T>(g.dims()), tensor<T>(g.dims())})
                     .first;
        }
        auto& [m, v] = it->second;
        tensor<T>& theta = params.mutable_value(name);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double gi = g[i];
            const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * gi;
            const double vi = state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double m_hat = mi / correction1;
            const double v_hat = vi / correction2;
            theta[i] = static_cast<T>(static_cast<double>(theta[i]) -
                                      state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon));
        }
    }
}

struct plateau_config {
    double factor = 0.1;
    std::size_t patience = 3;
    double min_lr = 1e-6;
};

struct train_config {
    std::size_t max_epochs = 50;
    std::size_t batch_size = 32;
    std::size_t early_stop_patience = 5;
    double learning_rate = 1e-3;
    plateau_config lr_plateau;
    std::uint64_t seed = 0;
    bool restore_best = true;
    std::optional<augment_config> augmentation;

    void validate() const {
        if (max_epochs < 1) throw parameter_error("max_epochs must be >= 1");
        if (batch_size < 1) throw parameter_error("batch_size must be >= 1");
        if (early_stop_patience < 1) throw parameter_error("early-stopping patience must be >= 1");
        if (lr_plateau.patience < 1) throw parameter_error("plateau patience must be >= 1");
        if (!(lr_plateau.factor > 0.0 && lr_plateau.factor < 1.0)) {
            throw parameter_error("plateau factor must lie in (0, 1)");
        }
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
            throw parameter_error("learning rate must be positive");
        }
        if (!(lr_plateau.min_lr >= 0.0)) throw parameter_error("min_lr must be >= 0");
        if (augmentation) augmentation->validate();
    }
};

// ---------------------------------------------------------------------------
// Callbacks

struct stopping_decision {
    bool stop = false;
    std::size_t best_epoch = 0;  // 1-based, earliest on ties
};

/// Stop once the last `patience` values all fail to strictly improve on the
/// best value seen before them.
inline stopping_decision early_stopping_update(const std::vector<double>& history, std::size_t patience) {
    if (history.empty()) {
        throw usage_error("early stopping needs at least one monitored value");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i] < history[best]) {
            best = i;
        }
    }
    return {history.size() - 1 - best >= patience, best + 1};
}

/// Multiplies the learning rate by `factor` after `patience` epochs without
/// strict improvement, then restarts the count. Never goes below min_lr.
class plateau_scheduler {
  public:
    explicit plateau_scheduler(plateau_config config) : config_(config) {}

    /// Feeds one epoch's monitored value; returns the rate for the next epoch.
    double update(double monitored, double current_lr) {
        if (monitored < best_) {
            best_ = monitored;
            wait_ = 0;
            return current_lr;
        }
        if (++wait_ >= config_.patience) {
            wait_ = 0;
            if (current_lr > config_.min_lr) {
                return std::max(current_lr * config_.factor, config_.min_lr);
            }
        }
        return current_lr;
    }

  private:
    plateau_config config_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t wait_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct epoch_stats {
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t batches = 0;
};

/// Forward (train mode), cross-entropy, backward and one Adam step per
/// batch. Returns sample-weighted mean loss and accuracy.
template <scalar T>
epoch_stats run_epoch(const model_spec& spec, param_store<T>& params, adam_state<T>& adam,
                      const std::vector<batch>& batches, rng& gen) {
    if (batches.empty()) {
        throw usage_error("run_epoch needs at least one batch");
    }
    epoch_stats stats;
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const batch& b = batches[i];
        try {
            auto pass = forward_model(spec, params, b.images.template cast<T>(), run_mode::train, gen);
            const var<T> loss = categorical_cross_entropy(pass.output_node, b.labels.template cast<T>());
            const double value = loss.value().item();
            if (!std::isfinite(value)) {
                throw numeric_domain_error("loss is " + std::to_string(value));
            }
            auto grads = pass.graph->backward(loss);
            for (const auto& [name, g] : grads.params()) {
                require_finite(g, "gradient of " + name);
            }
            adam_step(params, grads.params(), adam);
            loss_sum += value * static_cast<double>(b.size());
            const auto pred = predict_classes(pass.output);
            for (std::size_t k = 0; k < pred.size(); ++k) {
                correct += pred[k] == b.label_indices[k];
            }
            seen += b.size();
        } catch (const numeric_domain_error& e) {
            throw divergence_error("training diverged at batch " + std::to_string(i) + ": " + e.what());
        }
    }
    stats.loss = loss_sum / static_cast<double>(seen);
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    stats.batches = batches.size();
    return stats;
}

struct validation_result {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct fit_hooks {
    /// Called after every completed epoch.
    std::function<void(const epoch_record&)> on_epoch;
    /// Replaces the built-in validation pass (scripted tests, custom monitors).
    std::function<validation_result(std::size_t epoch, const param_store<float>&)> validate;
    /// When set, the best model so far is written here after each improvement.
    std::filesystem::path checkpoint_path;
    std::vector<std::string> class_names;
    nlohmann::json extra_metadata = nlohmann::json::object();
};

struct fit_result {
    param_store<float> params;
    std::vector<epoch_record> history;
    std::optional<std::filesystem::path> best_checkpoint;
    std::size_t best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
};

/// Thrown when training diverges; carries the epochs that completed.
class fit_divergence : public divergence_error {
  public:
    fit_divergence(const std::string& message, std::vector<epoch_record> history)
        : divergence_error(message), history_(std::move(history)) {}
    [[nodiscard]] const std::vector<epoch_record>& history() const noexcept { return history_; }

  private:
    std::vector<epoch_record> history_;
};

/// Produces the training batches for a 1-based epoch.
using batch_provider = std::function<std::vector<batch>(std::size_t epoch, rng& gen)>;

/// Shuffled (and optionally augmented) batches of an in-memory sample set.
inline batch_provider shuffled_batches(const sample_set& samples, std::size_t batch_size,
                                       std::optional<augment_config> augmentation = std::nullopt) {
    return [&samples, batch_size, augmentation](std::size_t, rng& gen) {
        return make_batches(samples, batch_size, true, gen, augmentation ? &*augmentation : nullptr);
    };
}

inline nlohmann::json checkpoint_metadata(const epoch_record& r, std::uint64_t seed, const nlohmann::json& extra) {
    nlohmann::json meta = extra;
    meta["epoch"] = r.epoch;
    meta["val_loss"] = r.val_loss;
    meta["val_accuracy"] = r.val_accuracy;
    meta["seed"] = seed;
    return meta;
}

/// Full training run: per-epoch validation in infer mode, best-model
/// checkpointing, plateau LR reduction and early stopping on validation loss.
inline fit_result fit(const model_spec& spec, param_store<float> params, const batch_provider& train_batches,
                      const std::vector<batch>& valid_batches, const train_config& config, const fit_hooks& hooks = {}) {
    config.validate();
    validate(spec);
    check_params_match(spec, params);
    if (valid_batches.empty() && !hooks.validate) {
        throw usage_error("fit needs validation batches for early stopping and plateau scheduling");
    }

    fit_result result;
    adam_state<float> adam = adam_state<float>::for_params(params, config.learning_rate);
    plateau_scheduler plateau(config.lr_plateau);
    std::vector<double> monitored;
    std::optional<param_store<float>> best_params;
    double lr = config.learning_rate;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        rng gen(rng::derive(config.seed, epoch));
        adam.learning_rate = lr;
        epoch_stats stats;
        try {
            stats = run_epoch(spec, params, adam, train_batches(epoch, gen), gen);
        } catch (const divergence_error& e) {
            throw fit_divergence(std::string("epoch ") + std::to_string(epoch) + ": " + e.what(), result.history);
        }
        validation_result val;
        if (hooks.validate) {
            val = hooks.validate(epoch, params);
        } else {
            const auto e = evaluate_model(spec, params, valid_batches, hooks.class_names);
            val = {e.loss, e.accuracy};
        }
        const epoch_record record{epoch, stats.loss, stats.accuracy, val.loss, val.accuracy, lr};
        result.history.push_back(record);
        if (hooks.on_epoch) {
            hooks.on_epoch(record);
        }

        if (val.loss < result.best_val_loss) {
            result.best_val_loss = val.loss;
            result.best_epoch = epoch;
            best_params = params;
            if (!hooks.checkpoint_path.empty()) {
                const std::vector<std::string> names =
                    hooks.class_names.empty() ? default_class_names(spec.num_classes) : hooks.class_names;
                save_checkpoint(checkpoint{spec, names, checkpoint_metadata(record, config.seed, hooks.extra_metadata),
                                           params},
                                hooks.checkpoint_path);
                result.best_checkpoint = hooks.checkpoint_path;
            }
        }
        monitored.push_back(val.loss);
        lr = plateau.update(val.loss, lr);
        if (early_stopping_update(monitored, config.early_stop_patience).stop) {
            break;
        }
    }
    result.params = config.restore_best && best_params ? std::move(*best_params) : std::move(params);
    return result;
}

/// Convenience overload over in-memory training samples.
inline fit_result fit(const model_spec& spec, param_store<float> params, const sample_set& train,
                      const std::vector<batch>& valid_batches, const train_config& config, const fit_hooks& hooks = {}) {
    return fit(spec, std::move(params), shuffled_batches(train, config.batch_size, config.augmentation), valid_batches,
               config, hooks);
}

}  // namespace xrdl
