#include "dncc/model.hpp"

#include <cmath>
#include <random>

#include "dncc/error.hpp"

namespace dncc {

std::string to_string(FeatureMode mode) { return mode == FeatureMode::split ? "split" : "expand_split"; }

FeatureMode feature_mode_from_string(const std::string& s) {
    if (s == "split") return FeatureMode::split;
    if (s == "expand_split" || s == "expand-split") return FeatureMode::expand_split;
    throw ConfigError("unknown feature mode '" + s + "' (expected split or expand_split)");
}

void BackboneSpec::validate() const {
    if (input_dim == 0) throw ConfigError("input_dim must be positive");
    if (hidden_widths.empty()) throw ConfigError("hidden_widths must be non-empty");
    for (std::size_t w : hidden_widths) {
        if (w == 0) throw ConfigError("hidden widths must be positive");
    }
    if (branch_depth > hidden_widths.size()) {
        throw ConfigError("branch_depth " + std::to_string(branch_depth) + " exceeds the " +
                          std::to_string(hidden_widths.size()) + " hidden layers");
    }
}

void validate(const BackboneSpec& spec, const EnsembleConfig& cfg) {
    spec.validate();
    if (cfg.num_heads == 0) throw ConfigError("num_heads must be at least 1");
    if (cfg.num_classes < 2) throw ConfigError("num_classes must be at least 2");
    if (cfg.feature_mode == FeatureMode::split && spec.last_width() % cfg.num_heads != 0) {
        throw ConfigError("last hidden width " + std::to_string(spec.last_width()) +
                          " must be divisible by num_heads = " + std::to_string(cfg.num_heads));
    }
}

Tensor Linear::forward(const Tensor& x) const { return add(matmul(x, weight), bias); }

namespace {

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-s, s);
    std::vector<double> w(in * out);
    for (double& v : w) v = dist(rng);
    return Linear{Tensor::from({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t key) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    return std::mt19937_64(seq);
}

Linear clone_linear(const Linear& l) { return Linear{l.weight.clone(), l.bias.clone()}; }

std::size_t linear_count(std::size_t in, std::size_t out) { return in * out + out; }

}  // namespace

EnsembleModel EnsembleModel::init(const BackboneSpec& spec, const EnsembleConfig& cfg) {
    validate(spec, cfg);
    EnsembleModel model(spec, cfg);
    const auto& widths = spec.hidden_widths;
    const std::size_t shared_depth = spec.shared_depth();
    const std::size_t d = model.slice_width();

    auto rng = stream(cfg.seed, 0);
    std::size_t in = spec.input_dim;
    for (std::size_t l = 0; l < shared_depth; ++l) {
        model.shared_.push_back(make_linear(in, widths[l], rng));
        in = widths[l];
    }
    const std::size_t branch_in = in;

    for (std::size_t m = 0; m < cfg.num_heads; ++m) {
        auto head_rng = stream(cfg.seed, m + 1);
        Head head;
        std::size_t hin = branch_in;
        for (std::size_t l = shared_depth; l < widths.size(); ++l) {
            const bool last = l + 1 == widths.size();
            const std::size_t out = (last && cfg.feature_mode == FeatureMode::split) ? d : widths[l];
            head.branch.push_back(make_linear(hin, out, head_rng));
            hin = out;
        }
        if (cfg.feature_mode == FeatureMode::expand_split) {
            head.expansion = make_linear(spec.last_width(), spec.last_width(), head_rng);
        }
        head.classifier = make_linear(d, cfg.num_classes, head_rng);
        model.heads_.push_back(std::move(head));
    }
    return model;
}

std::size_t EnsembleModel::slice_width() const {
    return cfg_.feature_mode == FeatureMode::split ? spec_.last_width() / cfg_.num_heads : spec_.last_width();
}

std::vector<std::pair<std::size_t, std::size_t>> EnsembleModel::feature_slices() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const std::size_t d = slice_width();
    for (std::size_t m = 0; m < cfg_.num_heads; ++m) out.emplace_back(m * d, (m + 1) * d);
    return out;
}

Tensor EnsembleModel::shared_features(const Tensor& batch) const {
    if (batch.ndim() != 2 || batch.cols() != spec_.input_dim) {
        throw DimensionError("batch shape " + shape_str(batch.shape()) + " does not match input_dim " +
                             std::to_string(spec_.input_dim));
    }
    Tensor h = batch;
    for (const Linear& layer : shared_) h = relu(layer.forward(h));
    return h;
}

Tensor EnsembleModel::head_logits(std::size_t m, const Tensor& shared) const {
    const Head& head = heads_.at(m);
    Tensor g = shared;
    for (const Linear& layer : head.branch) g = relu(layer.forward(g));
    if (cfg_.feature_mode == FeatureMode::split) {
        if (head.branch.empty()) g = slice_cols(g, m * slice_width(), slice_width());
    } else {
        g = head.expansion->forward(g);
    }
    return head.classifier.forward(g);
}

std::vector<Tensor> EnsembleModel::forward(const Tensor& batch) const {
    const Tensor shared = shared_features(batch);
    std::vector<Tensor> out;
    out.reserve(heads_.size());
    for (std::size_t m = 0; m < heads_.size(); ++m) out.push_back(head_logits(m, shared));
    return out;
}

std::vector<Tensor> EnsembleModel::parameters() const {
    std::vector<Tensor> out;
    auto push = [&out](const Linear& l) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    };
    for (const Linear& l : shared_) push(l);
    for (const Head& h : heads_) {
        for (const Linear& l : h.branch) push(l);
        if (h.expansion) push(*h.expansion);
        push(h.classifier);
    }
    return out;
}

std::vector<std::string> EnsembleModel::parameter_names() const {
    std::vector<std::string> out;
    auto push = [&out](const std::string& prefix) {
        out.push_back(prefix + ".weight");
        out.push_back(prefix + ".bias");
    };
    for (std::size_t l = 0; l < shared_.size(); ++l) push("shared." + std::to_string(l));
    for (std::size_t m = 0; m < heads_.size(); ++m) {
        const std::string hp = "head." + std::to_string(m);
        for (std::size_t l = 0; l < heads_[m].branch.size(); ++l) push(hp + ".branch." + std::to_string(l));
        if (heads_[m].expansion) push(hp + ".expansion");
        push(hp + ".classifier");
    }
    return out;
}

std::size_t EnsembleModel::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : parameters()) n += t.numel();
    return n;
}

std::size_t EnsembleModel::shared_parameter_count() const {
    std::size_t n = 0;
    for (const Linear& l : shared_) n += l.parameter_count();
    return n;
}

EnsembleModel EnsembleModel::clone() const {
    EnsembleModel copy(spec_, cfg_);
    for (const Linear& l : shared_) copy.shared_.push_back(clone_linear(l));
    for (const Head& h : heads_) {
        Head c;
        for (const Linear& l : h.branch) c.branch.push_back(clone_linear(l));
        if (h.expansion) c.expansion = clone_linear(*h.expansion);
        c.classifier = clone_linear(h.classifier);
        copy.heads_.push_back(std::move(c));
    }
    return copy;
}

std::size_t expected_shared_parameter_count(const BackboneSpec& spec, const EnsembleConfig& cfg) {
    validate(spec, cfg);
    std::size_t n = 0;
    std::size_t in = spec.input_dim;
    for (std::size_t l = 0; l < spec.shared_depth(); ++l) {
        n += linear_count(in, spec.hidden_widths[l]);
        in = spec.hidden_widths[l];
    }
    return n;
}

std::size_t expected_parameter_count(const BackboneSpec& spec, const EnsembleConfig& cfg) {
    validate(spec, cfg);
    const auto& w = spec.hidden_widths;
    const std::size_t depth = w.size();
    const std::size_t shared_depth = spec.shared_depth();
    const bool split = cfg.feature_mode == FeatureMode::split;
    const std::size_t d = split ? spec.last_width() / cfg.num_heads : spec.last_width();

    std::size_t per_head = 0;
    for (std::size_t l = shared_depth; l < depth; ++l) {
        const std::size_t in = l == 0 ? spec.input_dim : w[l - 1];
        const std::size_t out = (l + 1 == depth && split) ? d : w[l];
        per_head += linear_count(in, out);
    }
    if (!split) per_head += linear_count(spec.last_width(), spec.last_width());
    per_head += linear_count(d, cfg.num_classes);
    return expected_shared_parameter_count(spec, cfg) + cfg.num_heads * per_head;
}

std::vector<int> argmax_rows(const Tensor& scores) {
    const std::size_t n = scores.rows(), k = scores.cols();
    const auto d = scores.data();
    std::vector<int> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (d[r * k + j] > d[r * k + best]) best = j;
        }
        out[r] = static_cast<int>(best);
    }
    return out;
}

Prediction predict_from_logits(std::span<const Tensor> per_head_logits) {
    if (per_head_logits.empty()) throw ContractError("predict: no heads");
    NoGradGuard no_grad;
    const Shape shape = per_head_logits.front().shape();
    std::vector<double> probs(shape_numel(shape), 0.0);
    const double inv_m = 1.0 / static_cast<double>(per_head_logits.size());
    for (const Tensor& logits : per_head_logits) {
        if (logits.shape() != shape) throw DimensionError("predict: heads disagree on logit shape");
        const Tensor lp = log_softmax_rows(logits);
        const auto d = lp.data();
        for (std::size_t i = 0; i < d.size(); ++i) probs[i] += inv_m * std::exp(d[i]);
    }
    Prediction p;
    p.ensemble_probs = Tensor::from(shape, std::move(probs));
    p.labels = argmax_rows(p.ensemble_probs);
    return p;
}

Prediction predict(const EnsembleModel& model, const Tensor& batch) {
    NoGradGuard no_grad;
    const std::vector<Tensor> logits = model.forward(batch);
    return predict_from_logits(logits);
}

double shared_param_fraction(const EnsembleModel& model) {
    return static_cast<double>(model.shared_parameter_count()) / static_cast<double>(model.parameter_count());
}

std::vector<Tensor> head_weight_matrices(const EnsembleModel& model) {
    std::vector<Tensor> out;
    for (const Head& h : model.heads()) {
        const Tensor& w = h.classifier.weight;  // {d, K}
        const std::size_t d = w.rows(), k = w.cols();
        std::vector<double> t(k * d);
        const auto src = w.data();
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < k; ++j) t[j * d + i] = src[i * k + j];
        }
        out.push_back(Tensor::from({k, d}, std::move(t)));
    }
    return out;
}

}  // namespace dncc
