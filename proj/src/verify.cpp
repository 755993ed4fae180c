#include "dncc/verify.hpp"

#include <cmath>
#include <random>

#include "dncc/error.hpp"
#include "dncc/model.hpp"

namespace dncc {

namespace {

std::mt19937_64 trial_rng(std::uint64_t seed, int trial, std::uint32_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(trial), salt};
    return std::mt19937_64(seq);
}

template <class Int>
Int uniform_int(std::mt19937_64& rng, Int lo, Int hi) {
    return std::uniform_int_distribution<Int>(lo, hi)(rng);
}

DiscreteDistribution random_distribution(const ConvexFunctional& phi, std::mt19937_64& rng) {
    const std::size_t dim = uniform_int<std::size_t>(rng, 1, 4);
    const std::size_t count = uniform_int<std::size_t>(rng, 1, 12);
    double lo = -5.0, hi = 5.0;
    if (phi.name == "neg_log") {
        lo = 1e-3;
        hi = 2.0;
    } else if (phi.name == "x_log_x") {
        lo = 1e-3;
        hi = 3.0;
    }
    std::uniform_real_distribution<double> coord(lo, hi);
    std::exponential_distribution<double> expo(1.0);
    DiscreteDistribution d;
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        Point p(dim);
        for (double& v : p) v = coord(rng);
        d.points.push_back(std::move(p));
        d.weights.push_back(expo(rng));
        total += d.weights.back();
    }
    for (double& w : d.weights) w /= total;
    return d;
}

nlohmann::json to_json(const DiscreteDistribution& d) { return {{"points", d.points}, {"weights", d.weights}}; }

CheckResult finish(CheckResult r) {
    r.pass = r.failing_case.is_null() && r.max_deviation < r.tolerance;
    return r;
}

}  // namespace

RandomEnsemble random_ensemble(std::uint64_t seed, int trial) {
    auto rng = trial_rng(seed, trial, 0xE115);
    const std::size_t heads = uniform_int<std::size_t>(rng, 2, 16);
    const std::size_t classes = uniform_int<std::size_t>(rng, 2, 100);
    const std::size_t n = uniform_int<std::size_t>(rng, 1, 8);
    std::normal_distribution<double> normal(0.0, 3.0);
    RandomEnsemble e;
    for (std::size_t m = 0; m < heads; ++m) {
        std::vector<double> v(n * classes);
        for (double& x : v) x = normal(rng);
        e.logits.push_back(Tensor::from({n, classes}, std::move(v)));
    }
    for (std::size_t i = 0; i < n; ++i) e.labels.push_back(uniform_int<int>(rng, 0, static_cast<int>(classes) - 1));
    return e;
}

nlohmann::json to_json(const RandomEnsemble& e) {
    nlohmann::json heads = nlohmann::json::array();
    for (const Tensor& t : e.logits) {
        heads.push_back({{"shape", t.shape()}, {"values", std::vector<double>(t.data().begin(), t.data().end())}});
    }
    return {{"logits", heads}, {"labels", e.labels}};
}

CheckResult check_decomposition(int trials, std::uint64_t seed) {
    CheckResult r{"decomposition_identity", 0.0, kDecompositionTolerance, trials, false, nullptr};
    for (int t = 0; t < trials; ++t) {
        const RandomEnsemble e = random_ensemble(seed, t);
        double dev = 0.0;
        try {
            dev = std::abs(decompose(e.logits, e.labels).identity_residual());
        } catch (const ConsistencyError&) {
            dev = std::numeric_limits<double>::infinity();
        }
        r.max_deviation = std::max(r.max_deviation, dev);
        if (!(dev < r.tolerance) && r.failing_case.is_null()) {
            r.failing_case = {{"check", r.name}, {"seed", seed}, {"trial", t}, {"case", to_json(e)}};
        }
    }
    return finish(std::move(r));
}

CheckResult check_jensen(const ConvexFunctional& phi, int trials, std::uint64_t seed) {
    CheckResult r{"jensen_gap_equals_bregman_information/" + phi.name, 0.0, 1e-12, trials, false, nullptr};
    for (int t = 0; t < trials; ++t) {
        auto rng = trial_rng(seed, t, 0x1E33A);
        const DiscreteDistribution d = random_distribution(phi, rng);
        const double dev = std::abs(jensen_gap(phi, d) - bregman_information(phi, d));
        r.max_deviation = std::max(r.max_deviation, dev);
        if (!(dev < r.tolerance) && r.failing_case.is_null()) {
            r.failing_case = {{"check", r.name}, {"seed", seed}, {"trial", t}, {"case", to_json(d)}};
        }
    }
    return finish(std::move(r));
}

Tensor default_head_loss(std::size_t m, const HeadLogProbs& lp, double lambda, bool detach) {
    return dncc_head_loss(m, lp, lambda, detach);
}

CheckResult check_lambda_minus_one(int trials, std::uint64_t seed, const HeadLossFn& head_loss) {
    CheckResult r{"lambda_minus_one_recovers_ensemble_loss", 0.0, 1e-12, trials, false, nullptr};
    NoGradGuard no_grad;
    for (int t = 0; t < trials; ++t) {
        const RandomEnsemble e = random_ensemble(seed, t);
        const HeadLogProbs lp = head_log_probs(e.logits, e.labels);
        double total = 0.0;
        for (std::size_t m = 0; m < e.logits.size(); ++m) total += head_loss(m, lp, -1.0, false).item();
        const double avg = total / static_cast<double>(e.logits.size());
        const double dev = std::abs(avg - ensemble_ce(e.logits, e.labels).item());
        r.max_deviation = std::max(r.max_deviation, dev);
        if (!(dev < r.tolerance) && r.failing_case.is_null()) {
            r.failing_case = {{"check", r.name}, {"seed", seed}, {"trial", t}, {"case", to_json(e)}};
        }
    }
    return finish(std::move(r));
}

CheckResult check_model_gradients(std::uint64_t seed, const HeadLossFn& head_loss) {
    CheckResult r{"model_gradient_check", 0.0, 1e-5, 0, false, nullptr};
    const BackboneSpec spec{5, {8, 8}, Activation::relu, 0};
    const EnsembleConfig cfg{4, FeatureMode::split, 3, seed};
    auto rng = trial_rng(seed, 0, 0x6AD);
    std::normal_distribution<double> normal(0.0, 1.0);
    constexpr std::size_t n = 6;
    std::vector<double> xs(n * spec.input_dim);
    for (double& v : xs) v = normal(rng);
    const Tensor x = Tensor::from({n, spec.input_dim}, xs);
    std::vector<int> y(n);
    for (int& v : y) v = uniform_int<int>(rng, 0, 2);

    for (const bool detach : {false, true}) {
        for (const double lambda : {-1.0, 0.0, 1e-4, 1e-2}) {
            EnsembleModel model = EnsembleModel::init(spec, cfg);
            std::vector<Tensor> params = model.parameters();
            auto objective = [&]() {
                const HeadLogProbs lp = head_log_probs(model.forward(x), y);
                Tensor total = head_loss(0, lp, lambda, detach);
                for (std::size_t m = 1; m < lp.correct.size(); ++m) total = total + head_loss(m, lp, lambda, detach);
                return total;
            };
            const GradCheckReport rep = gradient_check(objective, params, 1e-6, r.tolerance);
            ++r.trials;
            r.max_deviation = std::max(r.max_deviation, rep.worst);
            if (!rep.pass && r.failing_case.is_null()) {
                r.failing_case = {{"check", r.name},       {"seed", seed},
                                  {"lambda", lambda},      {"detach", detach},
                                  {"worst_param", model.parameter_names()[rep.worst_param]},
                                  {"worst_index", rep.worst_index},
                                  {"relative_error", rep.worst},
                                  {"failure", rep.failure}};
            }
        }
    }
    return finish(std::move(r));
}

bool VerifyReport::pass() const {
    for (const auto& c : checks) {
        if (!c.pass) return false;
    }
    return !checks.empty();
}

VerifyReport run_verify(const VerifyOptions& opts) {
    HeadLossFn head_loss = default_head_loss;
    if (opts.inject_penalty_sign_flip) {
        head_loss = [](std::size_t m, const HeadLogProbs& lp, double lambda, bool detach) {
            const Tensor avg = detach ? lp.ensemble.detach() : lp.ensemble;
            const Tensor penalty =
                itakura_saito(clamp_min(lp.correct[m], kLogProbFloor), clamp_min(avg, kLogProbFloor));
            return mean(neg(lp.correct[m]) - scale(penalty, lambda));
        };
    }
    VerifyReport report;
    report.checks.push_back(check_decomposition(opts.trials, opts.seed));
    for (const auto& phi : {neg_log(), squared_norm(), x_log_x()}) {
        report.checks.push_back(check_jensen(phi, opts.trials, opts.seed));
    }
    report.checks.push_back(check_lambda_minus_one(opts.trials, opts.seed, head_loss));
    report.checks.push_back(check_model_gradients(opts.seed, head_loss));
    return report;
}

}  // namespace dncc
