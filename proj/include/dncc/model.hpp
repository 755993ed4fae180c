#pragma once

// Shared-backbone multi-head ensemble classifier.
//
//   input -> [shared hidden layers] -> [per-head branched layers]
//         -> per-head feature slice (split) or per-head expansion block (expand_split)
//         -> per-head linear classifier -> logits
//
// The last `branch_depth` hidden layers are replicated per head. In split mode
// head m owns columns [m*d, (m+1)*d) of the last hidden layer, d = width / M;
// when that layer is branched, head m's copy only computes its own d columns.
// In expand_split mode each head owns a width x width block of the linear
// expansion map (the full map is width -> M*width) and reads the whole last
// hidden layer.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dncc/tensor.hpp"

namespace dncc {

enum class Activation { relu };
enum class FeatureMode { split, expand_split };

std::string to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(const std::string& s);

struct BackboneSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_widths;
    Activation activation = Activation::relu;
    std::size_t branch_depth = 0;

    std::size_t last_width() const { return hidden_widths.back(); }
    std::size_t shared_depth() const { return hidden_widths.size() - branch_depth; }
    void validate() const;
};

struct EnsembleConfig {
    std::size_t num_heads = 1;
    FeatureMode feature_mode = FeatureMode::split;
    std::size_t num_classes = 2;
    std::uint64_t seed = 0;
};

// Throws ConfigError when spec and cfg cannot form a model.
void validate(const BackboneSpec& spec, const EnsembleConfig& cfg);

struct Linear {
    Tensor weight;  // {in, out}
    Tensor bias;    // {out}

    Tensor forward(const Tensor& x) const;
    std::size_t parameter_count() const { return weight.numel() + bias.numel(); }
};

struct Head {
    std::vector<Linear> branch;
    std::optional<Linear> expansion;
    Linear classifier;  // {slice_width, K}
};

class EnsembleModel {
public:
    // Glorot-uniform weights, zero biases. Shared layers draw from a stream
    // keyed on (seed, 0); head m draws from (seed, m + 1).
    static EnsembleModel init(const BackboneSpec& spec, const EnsembleConfig& cfg);

    const BackboneSpec& spec() const { return spec_; }
    const EnsembleConfig& config() const { return cfg_; }
    std::size_t num_heads() const { return cfg_.num_heads; }
    std::size_t num_classes() const { return cfg_.num_classes; }
    // Width of the feature slice each classifier consumes.
    std::size_t slice_width() const;
    // Column ranges of each head within the concatenated (expanded) feature
    // vector of width num_heads() * slice_width().
    std::vector<std::pair<std::size_t, std::size_t>> feature_slices() const;

    // Per-head logits {n, K} on the autodiff tape; shared layers run once.
    std::vector<Tensor> forward(const Tensor& batch) const;
    // Output of the shared layers (the input itself when nothing is shared).
    Tensor shared_features(const Tensor& batch) const;
    // Head m's logits computed from shared features.
    Tensor head_logits(std::size_t m, const Tensor& shared) const;

    // All trainable tensors in declaration order: shared layers (weight, bias),
    // then for each head its branch layers, expansion, classifier.
    std::vector<Tensor> parameters() const;
    std::vector<std::string> parameter_names() const;
    std::size_t parameter_count() const;
    std::size_t shared_parameter_count() const;

    std::vector<Linear>& shared_layers() { return shared_; }
    const std::vector<Linear>& shared_layers() const { return shared_; }
    std::vector<Head>& heads() { return heads_; }
    const std::vector<Head>& heads() const { return heads_; }

    // Deep copy with independent parameter storage.
    EnsembleModel clone() const;

private:
    EnsembleModel(BackboneSpec spec, EnsembleConfig cfg) : spec_(std::move(spec)), cfg_(cfg) {}

    BackboneSpec spec_;
    EnsembleConfig cfg_;
    std::vector<Linear> shared_;
    std::vector<Head> heads_;
};

// Closed-form parameter counts for a (spec, cfg) pair.
std::size_t expected_parameter_count(const BackboneSpec& spec, const EnsembleConfig& cfg);
std::size_t expected_shared_parameter_count(const BackboneSpec& spec, const EnsembleConfig& cfg);

struct Prediction {
    std::vector<int> labels;
    Tensor ensemble_probs;  // {n, K}, rows sum to 1
};

// Average of per-head softmax probabilities; argmax with ties to the lowest
// class index.
Prediction predict(const EnsembleModel& model, const Tensor& batch);
// Same aggregation over precomputed per-head logits.
Prediction predict_from_logits(std::span<const Tensor> per_head_logits);

// Row-wise argmax with ties to the lowest index.
std::vector<int> argmax_rows(const Tensor& scores);

double shared_param_fraction(const EnsembleModel& model);

// Classifier weights without biases, one {K, d} matrix per head; row k is the
// weight vector of class k.
std::vector<Tensor> head_weight_matrices(const EnsembleModel& model);

}  // namespace dncc
