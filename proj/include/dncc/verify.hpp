#pragma once

// Randomized identity sweeps and the full-model gradient check behind
// `dncc verify`. Each trial draws from its own generator keyed on
// (seed, trial), so a failing case can be replayed from the serialized record.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dncc/bregman.hpp"
#include "dncc/loss.hpp"

namespace dncc {

struct CheckResult {
    std::string name;
    double max_deviation = 0.0;
    double tolerance = 0.0;
    int trials = 0;
    bool pass = false;
    nlohmann::json failing_case;  // null when passing
};

struct RandomEnsemble {
    std::vector<Tensor> logits;  // M tensors {n, K}
    std::vector<int> labels;
};

// M in [2, 16], K in [2, 100], n in [1, 8], logits ~ N(0, 3^2).
RandomEnsemble random_ensemble(std::uint64_t seed, int trial);
nlohmann::json to_json(const RandomEnsemble& e);

// |L_bar - (mean L_m - I)| over random ensembles; tolerance 1e-9.
CheckResult check_decomposition(int trials, std::uint64_t seed);

// |jensen_gap - bregman_information| over random distributions; 1e-12.
CheckResult check_jensen(const ConvexFunctional& phi, int trials, std::uint64_t seed);

using HeadLossFn = std::function<Tensor(std::size_t m, const HeadLogProbs& lp, double lambda, bool detach)>;
Tensor default_head_loss(std::size_t m, const HeadLogProbs& lp, double lambda, bool detach);

// |mean_m dncc_head_loss(lambda = -1) - ensemble_ce|; tolerance 1e-12.
CheckResult check_lambda_minus_one(int trials, std::uint64_t seed, const HeadLossFn& head_loss = default_head_loss);

// Central-difference check of the summed per-head objective on a model with
// two hidden layers, M = 4, K = 3, for both detach settings and
// lambda in {-1, 0, 1e-4, 1e-2}; tolerance 1e-5.
CheckResult check_model_gradients(std::uint64_t seed, const HeadLossFn& head_loss = default_head_loss);

struct VerifyOptions {
    int trials = 1000;
    std::uint64_t seed = 0;
    // Flips the sign of the penalty inside the head loss; must make the
    // suite fail.
    bool inject_penalty_sign_flip = false;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    bool pass() const;
};

VerifyReport run_verify(const VerifyOptions& opts);

}  // namespace dncc
