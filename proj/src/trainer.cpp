#include "dncc/trainer.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dncc/error.hpp"
#include "dncc/text.hpp"

namespace dncc {

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) throw ConfigError("learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
    if (!std::isfinite(dncc.lambda_schedule.value)) throw ConfigError("lambda must be finite");
    for (std::size_t i = 0; i < lr_milestones.size(); ++i) {
        if (lr_milestones[i] >= epochs || lr_milestones[i] < 0) {
            throw ConfigError("milestone " + std::to_string(lr_milestones[i]) + " outside [0, epochs)");
        }
        if (i > 0 && lr_milestones[i] <= lr_milestones[i - 1]) {
            throw ConfigError("milestones must be strictly increasing");
        }
    }
}

double lr_at(const TrainConfig& cfg, int epoch) {
    int passed = 0;
    for (int m : cfg.lr_milestones) passed += m <= epoch ? 1 : 0;
    double lr = cfg.initial_lr;
    for (int i = 0; i < passed; ++i) lr *= cfg.lr_decay_factor;
    return lr;
}

void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity, double lr,
              double momentum) {
    if (params.size() != grads.size() || params.size() != velocity.size()) {
        throw DimensionError("sgd_step: parameter, gradient and velocity sizes differ");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grads[i];
        params[i] -= lr * velocity[i];
    }
}

// ---- metrics -----------------------------------------------------------------

bool EpochRecord::same_metrics(const EpochRecord& o) const {
    return epoch == o.epoch && lambda == o.lambda && lr == o.lr && train_ensemble_loss == o.train_ensemble_loss &&
           train_mean_individual_loss == o.train_mean_individual_loss &&
           train_bregman_information == o.train_bregman_information && val_ensemble_loss == o.val_ensemble_loss &&
           val_mean_individual_loss == o.val_mean_individual_loss &&
           val_bregman_information == o.val_bregman_information &&
           val_ensemble_accuracy == o.val_ensemble_accuracy && val_head_accuracy == o.val_head_accuracy;
}

bool MetricsLog::same_metrics(const MetricsLog& o) const {
    if (records.size() != o.records.size()) return false;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].same_metrics(o.records[i])) return false;
    }
    return true;
}

namespace {

const char* const kScalarColumns[] = {
    "epoch",
    "lambda",
    "lr",
    "train_ensemble_loss",
    "train_mean_individual_loss",
    "train_bregman_information",
    "val_ensemble_loss",
    "val_mean_individual_loss",
    "val_bregman_information",
    "val_ensemble_accuracy",
};

std::vector<double> scalar_values(const EpochRecord& r) {
    return {static_cast<double>(r.epoch),   r.lambda,
            r.lr,                           r.train_ensemble_loss,
            r.train_mean_individual_loss,   r.train_bregman_information,
            r.val_ensemble_loss,            r.val_mean_individual_loss,
            r.val_bregman_information,      r.val_ensemble_accuracy};
}

void assign_scalars(EpochRecord& r, const std::vector<double>& v) {
    r.epoch = static_cast<int>(v[0]);
    r.lambda = v[1];
    r.lr = v[2];
    r.train_ensemble_loss = v[3];
    r.train_mean_individual_loss = v[4];
    r.train_bregman_information = v[5];
    r.val_ensemble_loss = v[6];
    r.val_mean_individual_loss = v[7];
    r.val_bregman_information = v[8];
    r.val_ensemble_accuracy = v[9];
}

}  // namespace

std::string metrics_jsonl(const MetricsLog& log) {
    std::string out;
    for (const auto& r : log.records) {
        nlohmann::ordered_json j;
        const auto v = scalar_values(r);
        j["epoch"] = r.epoch;
        for (std::size_t c = 1; c < v.size(); ++c) j[kScalarColumns[c]] = v[c];
        j["val_head_accuracy"] = r.val_head_accuracy;
        out += j.dump() + "\n";
    }
    return out;
}

MetricsLog parse_metrics_jsonl(const std::string& text) {
    MetricsLog log;
    const auto lines = split_lines(text);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(lines[ln]);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("invalid JSONL record: ") + e.what(), ln + 1);
        }
        EpochRecord r;
        std::vector<double> v(std::size(kScalarColumns));
        v[0] = j.at("epoch").get<int>();
        for (std::size_t c = 1; c < v.size(); ++c) v[c] = j.at(kScalarColumns[c]).get<double>();
        assign_scalars(r, v);
        r.val_head_accuracy = j.at("val_head_accuracy").get<std::vector<double>>();
        log.records.push_back(std::move(r));
    }
    return log;
}

std::string metrics_csv(const MetricsLog& log) {
    std::ostringstream out;
    const std::size_t heads = log.records.empty() ? 0 : log.records.front().val_head_accuracy.size();
    for (std::size_t c = 0; c < std::size(kScalarColumns); ++c) out << (c ? "," : "") << kScalarColumns[c];
    for (std::size_t m = 0; m < heads; ++m) out << ",val_head_accuracy_" << m;
    out << '\n';
    for (const auto& r : log.records) {
        const auto v = scalar_values(r);
        out << r.epoch;
        for (std::size_t c = 1; c < v.size(); ++c) out << ',' << format_double(v[c]);
        for (double a : r.val_head_accuracy) out << ',' << format_double(a);
        out << '\n';
    }
    return out.str();
}

MetricsLog parse_metrics_csv(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw FormatError("metrics CSV has no header", 1);
    const auto header = split(lines[0], ',');
    const std::size_t scalars = std::size(kScalarColumns);
    if (header.size() < scalars) throw FormatError("metrics CSV header too short", 1);
    for (std::size_t c = 0; c < scalars; ++c) {
        if (header[c] != kScalarColumns[c]) throw FormatError("unexpected column " + std::string(header[c]), 1);
    }
    MetricsLog log;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        const auto cells = split(lines[ln], ',');
        if (cells.size() != header.size()) throw FormatError("ragged metrics row", ln + 1);
        EpochRecord r;
        std::vector<double> v(scalars);
        for (std::size_t c = 0; c < scalars; ++c) v[c] = parse_double(cells[c], ln + 1);
        assign_scalars(r, v);
        for (std::size_t c = scalars; c < cells.size(); ++c) r.val_head_accuracy.push_back(parse_double(cells[c], ln + 1));
        log.records.push_back(std::move(r));
    }
    return log;
}

std::string timing_csv(const MetricsLog& log) {
    std::ostringstream out;
    out << "epoch,wall_time_s\n";
    for (const auto& r : log.records) out << r.epoch << ',' << format_double(r.wall_time_s) << '\n';
    return out.str();
}

// ---- evaluation ----------------------------------------------------------------

EvalResult evaluate(const EnsembleModel& model, const Dataset& ds) {
    if (ds.size() == 0) throw ContractError("evaluate: empty dataset");
    NoGradGuard no_grad;
    constexpr std::size_t kChunk = 1024;
    const std::size_t heads = model.num_heads();
    std::vector<std::size_t> head_hits(heads, 0);
    std::size_t ens_hits = 0;
    double ens_loss = 0.0, mean_loss = 0.0, info = 0.0;

    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < ds.size(); start += kChunk) {
        const std::size_t end = std::min(ds.size(), start + kChunk);
        rows.clear();
        for (std::size_t i = start; i < end; ++i) rows.push_back(i);
        const auto labels = ds.batch_labels(rows);
        const std::vector<Tensor> logits = model.forward(ds.batch_features(rows));
        const auto pred = predict_from_logits(logits).labels;
        for (std::size_t i = 0; i < rows.size(); ++i) ens_hits += pred[i] == labels[i] ? 1 : 0;
        for (std::size_t m = 0; m < heads; ++m) {
            const auto hp = argmax_rows(logits[m]);
            for (std::size_t i = 0; i < rows.size(); ++i) head_hits[m] += hp[i] == labels[i] ? 1 : 0;
        }
        const LossBreakdown b = decompose(logits, labels);
        const double w = static_cast<double>(rows.size());
        ens_loss += w * b.ensemble_loss;
        mean_loss += w * b.mean_individual_loss();
        info += w * b.bregman_information;
    }
    const double n = static_cast<double>(ds.size());
    EvalResult r;
    r.ensemble_accuracy = static_cast<double>(ens_hits) / n;
    for (std::size_t h : head_hits) r.head_accuracy.push_back(static_cast<double>(h) / n);
    r.ensemble_loss = ens_loss / n;
    r.mean_individual_loss = mean_loss / n;
    r.bregman_information = info / n;
    if (!(r.ensemble_loss <= r.mean_individual_loss + kDecompositionTolerance)) {
        throw ConsistencyError("evaluation ensemble loss exceeds mean individual loss");
    }
    return r;
}

// ---- training ------------------------------------------------------------------

Trainer::Trainer(EnsembleModel& model, TrainConfig cfg) : model_(model), cfg_(std::move(cfg)) {
    cfg_.validate();
    params_ = model_.parameters();
    for (const Tensor& p : params_) state_.velocity.emplace_back(p.numel(), 0.0);
}

void Trainer::restore(TrainingState state) {
    if (state.velocity.size() != params_.size()) {
        throw ContractError("restored optimizer state has " + std::to_string(state.velocity.size()) +
                            " buffers for " + std::to_string(params_.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (state.velocity[i].size() != params_[i].numel()) {
            throw ContractError("restored velocity buffer " + std::to_string(i) + " has the wrong size");
        }
    }
    state_ = std::move(state);
}

const MetricsLog& Trainer::fit(const Dataset& train_ds, const Dataset& val_ds, std::optional<int> stop_after) {
    if (train_ds.dim != model_.spec().input_dim || val_ds.dim != model_.spec().input_dim) {
        throw DimensionError("dataset width does not match model input_dim");
    }
    if (train_ds.num_classes > model_.num_classes() || val_ds.num_classes > model_.num_classes()) {
        throw ConfigError("dataset has more classes than the model");
    }
    const int until = stop_after ? std::min(*stop_after, cfg_.epochs) : cfg_.epochs;
    while (state_.next_epoch < until) {
        run_epoch(train_ds, val_ds, state_.next_epoch);
        ++state_.next_epoch;
        for (const auto& cb : callbacks_) cb(*this, state_.log.records.back());
    }
    return state_.log;
}

void Trainer::run_epoch(const Dataset& train_ds, const Dataset& val_ds, int epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double lambda = lambda_at(cfg_.dncc.lambda_schedule, epoch, cfg_.epochs);
    const double lr = lr_at(cfg_, epoch);
    const BatchIterator batches(train_ds.size(), cfg_.batch_size, cfg_.seed);

    double ens_loss = 0.0, mean_loss = 0.0, info = 0.0;
    int step = 0;
    for (const auto& rows : batches.batches(epoch)) {
        const Tensor x = train_ds.batch_features(rows);
        const std::vector<int> y = train_ds.batch_labels(rows);
        for (Tensor& p : params_) p.zero_grad();
        try {
            const std::vector<Tensor> logits = model_.forward(x);
            const Tensor objective = dncc_objective(logits, y, lambda, cfg_.dncc.detach_ensemble_mean);
            if (!std::isfinite(objective.item())) throw NumericError("non-finite loss");
            const LossBreakdown b = decompose(logits, y, lambda);
            const double w = static_cast<double>(rows.size());
            ens_loss += w * b.ensemble_loss;
            mean_loss += w * b.mean_individual_loss();
            info += w * b.bregman_information;
            objective.backward();
        } catch (const TrainingError&) {
            throw;
        } catch (const Error& e) {
            throw TrainingError(std::string("training aborted: ") + e.what(), epoch, step);
        }
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = params_[i];
            auto g = p.mutable_grad();
            if (cfg_.weight_decay != 0.0) {
                const auto theta = p.data();
                for (std::size_t j = 0; j < g.size(); ++j) g[j] += cfg_.weight_decay * theta[j];
            }
            sgd_step(p.mutable_data(), g, state_.velocity[i], lr, cfg_.momentum);
        }
        ++step;
    }

    EvalResult ev;
    try {
        ev = evaluate(model_, val_ds);
    } catch (const ConsistencyError&) {
        throw;
    } catch (const Error& e) {
        throw TrainingError(std::string("evaluation failed: ") + e.what(), epoch, step);
    }

    const double n = static_cast<double>(train_ds.size());
    EpochRecord r;
    r.epoch = epoch;
    r.lambda = lambda;
    r.lr = lr;
    r.train_ensemble_loss = ens_loss / n;
    r.train_mean_individual_loss = mean_loss / n;
    r.train_bregman_information = info / n;
    r.val_ensemble_loss = ev.ensemble_loss;
    r.val_mean_individual_loss = ev.mean_individual_loss;
    r.val_bregman_information = ev.bregman_information;
    r.val_ensemble_accuracy = ev.ensemble_accuracy;
    r.val_head_accuracy = ev.head_accuracy;
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const double residual =
        r.train_ensemble_loss - (r.train_mean_individual_loss - r.train_bregman_information);
    if (!(std::abs(residual) < kDecompositionTolerance)) {
        throw ConsistencyError("epoch " + std::to_string(epoch) + " training decomposition residual " +
                               std::to_string(residual));
    }
    state_.log.records.push_back(std::move(r));
}

MetricsLog train(EnsembleModel& model, const Dataset& train_ds, const Dataset& val_ds, const TrainConfig& cfg) {
    Trainer trainer(model, cfg);
    return trainer.fit(train_ds, val_ds);
}

}  // namespace dncc
