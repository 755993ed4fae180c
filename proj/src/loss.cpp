#include "dncc/loss.hpp"

#include <charconv>
#include <cmath>

#include "dncc/bregman.hpp"
#include "dncc/error.hpp"

namespace dncc {

LambdaSchedule LambdaSchedule::parse(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
        throw ConfigError("lambda schedule '" + text + "' must be const:<v> or ramp:<base>");
    }
    const std::string kind = text.substr(0, colon);
    const std::string num = text.substr(colon + 1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
    if (ec != std::errc() || ptr != num.data() + num.size() || !std::isfinite(v)) {
        throw ConfigError("lambda value '" + num + "' is not a finite number");
    }
    if (kind == "const" || kind == "constant") return constant(v);
    if (kind == "ramp") return linear_ramp(v);
    throw ConfigError("unknown lambda schedule kind '" + kind + "'");
}

std::string LambdaSchedule::str() const {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(kind == Kind::constant ? "const:" : "ramp:") + std::string(buf, res.ptr);
}

double lambda_at(const LambdaSchedule& schedule, int epoch, int total_epochs) {
    if (total_epochs <= 0) throw ContractError("lambda_at: total_epochs must be positive");
    if (epoch < 0 || epoch >= total_epochs) {
        throw ContractError("lambda_at: epoch " + std::to_string(epoch) + " outside [0, " +
                            std::to_string(total_epochs) + ")");
    }
    switch (schedule.kind) {
        case LambdaSchedule::Kind::constant: return schedule.value;
        case LambdaSchedule::Kind::linear_ramp:
            return static_cast<double>(epoch + 1) / static_cast<double>(total_epochs) * schedule.value;
    }
    return schedule.value;
}

Tensor individual_ce(const Tensor& logits, std::span<const int> labels) {
    return mean(neg(pick(log_softmax_rows(logits), labels)));
}

HeadLogProbs head_log_probs(std::span<const Tensor> per_head_logits, std::span<const int> labels) {
    if (per_head_logits.empty()) throw ContractError("at least one head is required");
    const Shape& shape = per_head_logits.front().shape();
    HeadLogProbs lp;
    lp.correct.reserve(per_head_logits.size());
    for (const Tensor& logits : per_head_logits) {
        if (logits.shape() != shape) {
            throw DimensionError("head logits " + shape_str(logits.shape()) + " differ from " + shape_str(shape));
        }
        lp.correct.push_back(pick(log_softmax_rows(logits), labels));
    }
    const double log_m = std::log(static_cast<double>(per_head_logits.size()));
    lp.ensemble = add_scalar(logsumexp_rows(concat_cols(lp.correct)), -log_m);
    return lp;
}

Tensor ensemble_ce(std::span<const Tensor> per_head_logits, std::span<const int> labels) {
    return mean(neg(head_log_probs(per_head_logits, labels).ensemble));
}

Tensor itakura_saito(const Tensor& log_p, const Tensor& log_q) {
    return add_scalar(sub(log_q, log_p) + exp(sub(log_p, log_q)), -1.0);
}

Tensor dncc_head_loss(std::size_t m, const HeadLogProbs& lp, double lambda, bool detach) {
    if (m >= lp.correct.size()) {
        throw ContractError("head index " + std::to_string(m) + " outside [0, " +
                            std::to_string(lp.correct.size()) + ")");
    }
    const Tensor& own = lp.correct[m];
    const Tensor avg = detach ? lp.ensemble.detach() : lp.ensemble;
    const Tensor penalty = itakura_saito(clamp_min(own, kLogProbFloor), clamp_min(avg, kLogProbFloor));
    return mean(neg(own) + scale(penalty, lambda));
}

Tensor dncc_head_loss(std::size_t m, std::span<const Tensor> per_head_logits, std::span<const int> labels,
                      double lambda, bool detach) {
    return dncc_head_loss(m, head_log_probs(per_head_logits, labels), lambda, detach);
}

Tensor dncc_objective(std::span<const Tensor> per_head_logits, std::span<const int> labels, double lambda,
                      bool detach) {
    const HeadLogProbs lp = head_log_probs(per_head_logits, labels);
    Tensor total = dncc_head_loss(0, lp, lambda, detach);
    for (std::size_t m = 1; m < lp.correct.size(); ++m) total = total + dncc_head_loss(m, lp, lambda, detach);
    return total;
}

double LossBreakdown::mean_individual_loss() const {
    double s = 0.0;
    for (double v : individual_losses) s += v;
    return s / static_cast<double>(individual_losses.size());
}

double LossBreakdown::identity_residual() const {
    return ensemble_loss - (mean_individual_loss() - bregman_information);
}

LossBreakdown decompose(std::span<const Tensor> per_head_logits, std::span<const int> labels, double lambda) {
    NoGradGuard no_grad;
    const HeadLogProbs lp = head_log_probs(per_head_logits, labels);
    const std::size_t heads = lp.correct.size();
    const std::size_t n = lp.ensemble.numel();
    const double inv_n = 1.0 / static_cast<double>(n);
    const auto avg = lp.ensemble.data();

    LossBreakdown out;
    out.lambda = lambda;
    double ens = 0.0;
    for (std::size_t i = 0; i < n; ++i) ens -= avg[i];
    out.ensemble_loss = ens * inv_n;

    for (std::size_t m = 0; m < heads; ++m) {
        const auto c = lp.correct[m].data();
        double ce = 0.0;
        double pen = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ce -= c[i];
            pen += itakura_saito_log_domain(c[i], avg[i]);
        }
        out.individual_losses.push_back(ce * inv_n);
        out.per_head_penalty.push_back(pen * inv_n);
        out.dncc_losses.push_back(ce * inv_n + lambda * pen * inv_n);
    }
    double info = 0.0;
    for (double p : out.per_head_penalty) info += p;
    out.bregman_information = info / static_cast<double>(heads);

    const double residual = out.identity_residual();
    if (!(std::abs(residual) < kDecompositionTolerance)) {
        throw ConsistencyError("ensemble loss decomposition violated: residual " + std::to_string(residual));
    }
    return out;
}

}  // namespace dncc
