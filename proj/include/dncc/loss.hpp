#pragma once

#include <span>
#include <string>
#include <vector>

#include "dncc/tensor.hpp"

namespace dncc {

struct LambdaSchedule {
    enum class Kind { constant, linear_ramp };
    Kind kind = Kind::constant;
    double value = 0.0;

    static LambdaSchedule constant(double v) { return {Kind::constant, v}; }
    static LambdaSchedule linear_ramp(double base) { return {Kind::linear_ramp, base}; }
    // "const:<v>" or "ramp:<base>".
    static LambdaSchedule parse(const std::string& text);
    std::string str() const;
};

// constant(v) -> v; linear_ramp(b) -> (epoch + 1) / total_epochs * b, with a
// 0-based epoch so the last epoch gets exactly b.
double lambda_at(const LambdaSchedule& schedule, int epoch, int total_epochs);

struct DnccConfig {
    LambdaSchedule lambda_schedule;
    // Treat the ensemble-average probability as a constant in the penalty.
    bool detach_ensemble_mean = false;
};

// Correct-class log-probabilities are floored here before entering the
// penalty ratio exp(log p - log p_bar).
inline constexpr double kLogProbFloor = -30.0;

// -(1/n) sum_i log softmax(logits)[i, y_i].
Tensor individual_ce(const Tensor& logits, std::span<const int> labels);

// -(1/n) sum_i log((1/M) sum_m softmax(logits_m)[i, y_i]), with the inner
// average taken in the log domain.
Tensor ensemble_ce(std::span<const Tensor> per_head_logits, std::span<const int> labels);

// Elementwise d_{-log}(p, q) = (log q - log p) + exp(log p - log q) - 1.
Tensor itakura_saito(const Tensor& log_p, const Tensor& log_q);

// Per-head correct-class log-probabilities and the log of their average.
struct HeadLogProbs {
    std::vector<Tensor> correct;  // M tensors of shape {n}
    Tensor ensemble;              // {n}
};
HeadLogProbs head_log_probs(std::span<const Tensor> per_head_logits, std::span<const int> labels);

// (1/n) sum_i [-log p^m_i + lambda * d_{-log}(p^m_i, p_bar_i)].
Tensor dncc_head_loss(std::size_t m, std::span<const Tensor> per_head_logits, std::span<const int> labels,
                      double lambda, bool detach);
Tensor dncc_head_loss(std::size_t m, const HeadLogProbs& lp, double lambda, bool detach);
// Sum of dncc_head_loss over all heads; the quantity trained with one
// backward pass.
Tensor dncc_objective(std::span<const Tensor> per_head_logits, std::span<const int> labels, double lambda,
                      bool detach);

struct LossBreakdown {
    double ensemble_loss = 0.0;               // L_bar
    std::vector<double> individual_losses;    // L_m
    double bregman_information = 0.0;         // I_{-log}, uniform 1/M measure, batch mean
    std::vector<double> per_head_penalty;     // batch mean of d_{-log}(p_m, p_bar)
    std::vector<double> dncc_losses;          // L_m + lambda * penalty_m
    double lambda = 0.0;

    double mean_individual_loss() const;
    // L_bar - (mean L_m - I); zero up to rounding.
    double identity_residual() const;
};

inline constexpr double kDecompositionTolerance = 1e-9;

// All loss quantities from one evaluation of the per-head logits. Throws
// ConsistencyError if |L_bar - (mean L_m - I)| >= 1e-9.
LossBreakdown decompose(std::span<const Tensor> per_head_logits, std::span<const int> labels,
                        double lambda = 0.0);

}  // namespace dncc
