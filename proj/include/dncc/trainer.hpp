#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dncc/data.hpp"
#include "dncc/loss.hpp"
#include "dncc/model.hpp"

namespace dncc {

struct TrainConfig {
    int epochs = 30;
    std::size_t batch_size = 128;
    double initial_lr = 0.1;
    double lr_decay_factor = 0.1;
    std::vector<int> lr_milestones;
    double momentum = 0.9;
    double weight_decay = 0.0;
    DnccConfig dncc;
    std::uint64_t seed = 0;

    void validate() const;
};

// initial_lr * decay^(number of milestones <= epoch); epoch is 0-based.
double lr_at(const TrainConfig& cfg, int epoch);

// v <- momentum * v + g;  theta <- theta - lr * v
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity, double lr,
              double momentum);

struct EpochRecord {
    int epoch = 0;  // 0-based
    double lambda = 0.0;
    double lr = 0.0;
    double train_ensemble_loss = 0.0;
    double train_mean_individual_loss = 0.0;
    double train_bregman_information = 0.0;
    double val_ensemble_loss = 0.0;
    double val_mean_individual_loss = 0.0;
    double val_bregman_information = 0.0;
    double val_ensemble_accuracy = 0.0;
    std::vector<double> val_head_accuracy;
    // Not written to the metrics files, which must be reproducible.
    double wall_time_s = 0.0;

    // Equality of every field except wall time.
    bool same_metrics(const EpochRecord& other) const;
};

struct MetricsLog {
    std::vector<EpochRecord> records;

    bool same_metrics(const MetricsLog& other) const;
};

std::string metrics_jsonl(const MetricsLog& log);
std::string metrics_csv(const MetricsLog& log);
MetricsLog parse_metrics_jsonl(const std::string& text);
MetricsLog parse_metrics_csv(const std::string& text);
// epoch,wall_time_s
std::string timing_csv(const MetricsLog& log);

struct EvalResult {
    double ensemble_accuracy = 0.0;
    std::vector<double> head_accuracy;
    double ensemble_loss = 0.0;
    double mean_individual_loss = 0.0;
    double bregman_information = 0.0;
};

// Read-only evaluation. The decomposition identity is checked per chunk and
// the Jensen bound L_bar <= mean L_m (1e-9 slack) is asserted on the result.
EvalResult evaluate(const EnsembleModel& model, const Dataset& ds);

// Everything besides the model needed to resume training bit-exactly.
struct TrainingState {
    int next_epoch = 0;
    std::vector<std::vector<double>> velocity;  // one buffer per parameter tensor
    MetricsLog log;
};

class Trainer {
public:
    using EpochCallback = std::function<void(const Trainer&, const EpochRecord&)>;

    Trainer(EnsembleModel& model, TrainConfig cfg);

    // Trains epochs [state.next_epoch, min(cfg.epochs, stop_after)). Throws
    // TrainingError on a non-finite loss; callbacks already run for the
    // completed epochs are not undone.
    const MetricsLog& fit(const Dataset& train, const Dataset& val, std::optional<int> stop_after = std::nullopt);

    void on_epoch_end(EpochCallback cb) { callbacks_.push_back(std::move(cb)); }
    void restore(TrainingState state);

    const TrainingState& state() const { return state_; }
    const MetricsLog& log() const { return state_.log; }
    const TrainConfig& config() const { return cfg_; }
    const EnsembleModel& model() const { return model_; }

private:
    void run_epoch(const Dataset& train, const Dataset& val, int epoch);

    EnsembleModel& model_;
    TrainConfig cfg_;
    std::vector<Tensor> params_;
    TrainingState state_;
    std::vector<EpochCallback> callbacks_;
};

MetricsLog train(EnsembleModel& model, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg);

}  // namespace dncc
