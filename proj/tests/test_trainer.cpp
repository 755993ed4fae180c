#include <cmath>

#include <gtest/gtest.h>

#include "dncc/data.hpp"
#include "dncc/error.hpp"
#include "dncc/trainer.hpp"

using namespace dncc;

namespace {

struct Fixture {
    Dataset full = synth_blobs(0, 4, 60, 8, 0.75);
    Split split = train_val_split(full, 4, 1, 0);
};

TrainConfig small_config(int epochs) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 32;
    cfg.initial_lr = 0.05;
    cfg.dncc.lambda_schedule = LambdaSchedule::linear_ramp(1e-2);
    cfg.seed = 3;
    return cfg;
}

EnsembleModel small_model(std::size_t heads = 4) {
    return EnsembleModel::init({8, {16, 8}, Activation::relu, 0}, {heads, FeatureMode::split, 4, 3});
}

}  // namespace

TEST(LrSchedule, StepDecay) {
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.initial_lr = 0.1;
    cfg.lr_decay_factor = 0.1;
    cfg.lr_milestones = {60, 120, 160};
    EXPECT_EQ(lr_at(cfg, 59), 0.1);
    EXPECT_DOUBLE_EQ(lr_at(cfg, 60), 0.01);
    EXPECT_DOUBLE_EQ(lr_at(cfg, 160), 1e-4);
}

TEST(TrainConfig, MilestonesMustIncreaseWithinEpochs) {
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.lr_milestones = {5, 3};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.lr_milestones = {10};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.lr_milestones = {};
    cfg.momentum = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Sgd, ZeroMomentumIsPlainDescent) {
    std::vector<double> p{1.0, -2.0}, g{0.5, 0.25}, v{0.0, 0.0};
    sgd_step(p, g, v, 0.1, 0.0);
    EXPECT_EQ(p, (std::vector<double>{1.0 - 0.1 * 0.5, -2.0 - 0.1 * 0.25}));
}

TEST(Sgd, ZeroGradientLeavesParameters) {
    std::vector<double> p{1.0, -2.0}, g{0.0, 0.0}, v{0.0, 0.0};
    sgd_step(p, g, v, 0.1, 0.9);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0}));
}

TEST(Sgd, TwoStepsMatchHandRecurrence) {
    std::vector<double> p{2.0}, v{0.0};
    const std::vector<double> g1{0.5}, g2{-1.0};
    sgd_step(p, g1, v, 0.1, 0.9);
    sgd_step(p, g2, v, 0.1, 0.9);
    const double v1 = 0.5, p1 = 2.0 - 0.1 * v1;
    const double v2 = 0.9 * v1 - 1.0, p2 = p1 - 0.1 * v2;
    EXPECT_EQ(v[0], v2);
    EXPECT_EQ(p[0], p2);
}

TEST(Train, SingleModelLossDecreasesOverFirstEpochs) {
    Fixture f;
    auto model = small_model(1);
    TrainConfig cfg = small_config(5);
    cfg.dncc.lambda_schedule = LambdaSchedule::constant(0.0);
    const MetricsLog log = train(model, f.split.train, f.split.val, cfg);
    ASSERT_EQ(log.records.size(), 5u);
    for (std::size_t e = 1; e < 5; ++e) {
        EXPECT_LT(log.records[e].train_ensemble_loss, log.records[e - 1].train_ensemble_loss) << e;
    }
}

TEST(Train, SameSeedSameMetrics) {
    Fixture f;
    auto a = small_model(), b = small_model();
    const MetricsLog la = train(a, f.split.train, f.split.val, small_config(3));
    const MetricsLog lb = train(b, f.split.train, f.split.val, small_config(3));
    EXPECT_TRUE(la.same_metrics(lb));
    EXPECT_EQ(metrics_jsonl(la), metrics_jsonl(lb));
    EXPECT_EQ(metrics_csv(la), metrics_csv(lb));
}

TEST(Train, ResumeMatchesUninterrupted) {
    Fixture f;
    auto full = small_model();
    const MetricsLog reference = train(full, f.split.train, f.split.val, small_config(10));

    auto part = small_model();
    Trainer first(part, small_config(10));
    first.fit(f.split.train, f.split.val, 5);
    ASSERT_EQ(first.log().records.size(), 5u);
    const TrainingState saved = first.state();

    auto resumed = part.clone();
    Trainer second(resumed, small_config(10));
    second.restore(saved);
    second.fit(f.split.train, f.split.val);
    EXPECT_TRUE(second.log().same_metrics(reference));
    const auto pa = full.parameters(), pb = resumed.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        EXPECT_TRUE(std::equal(pa[i].data().begin(), pa[i].data().end(), pb[i].data().begin())) << i;
    }
}

TEST(Train, LambdaZeroFullyBranchedEqualsIndependentModels) {
    Fixture f;
    const std::size_t M = 3;
    auto ens = EnsembleModel::init({8, {12, 6}, Activation::relu, 2}, {M, FeatureMode::split, 4, 9});
    std::vector<EnsembleModel> singles;
    for (std::size_t m = 0; m < M; ++m) {
        auto s = EnsembleModel::init({8, {12, 2}, Activation::relu, 2}, {1, FeatureMode::split, 4, 0});
        auto& dst = s.heads()[0];
        const auto& src = ens.heads()[m];
        for (std::size_t l = 0; l < dst.branch.size(); ++l) {
            dst.branch[l].weight = src.branch[l].weight.clone();
            dst.branch[l].bias = src.branch[l].bias.clone();
        }
        dst.classifier.weight = src.classifier.weight.clone();
        dst.classifier.bias = src.classifier.bias.clone();
        singles.push_back(std::move(s));
    }
    TrainConfig cfg = small_config(3);
    cfg.dncc.lambda_schedule = LambdaSchedule::constant(0.0);
    train(ens, f.split.train, f.split.val, cfg);
    for (std::size_t m = 0; m < M; ++m) {
        train(singles[m], f.split.train, f.split.val, cfg);
        const auto& a = ens.heads()[m].classifier.weight.data();
        const auto& b = singles[m].heads()[0].classifier.weight.data();
        for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12) << m;
    }
}

TEST(Train, NonFiniteLossAbortsWithContext) {
    Fixture f;
    auto model = small_model();
    TrainConfig cfg = small_config(3);
    cfg.initial_lr = 1e200;
    try {
        train(model, f.split.train, f.split.val, cfg);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_GE(e.epoch(), 0);
        EXPECT_GE(e.step(), 0);
    }
}

TEST(Train, JensenHoldsEveryEpoch) {
    Fixture f;
    auto model = small_model();
    const MetricsLog log = train(model, f.split.train, f.split.val, small_config(4));
    for (const auto& r : log.records) {
        EXPECT_LE(r.val_ensemble_loss, r.val_mean_individual_loss + 1e-9);
        EXPECT_LE(r.train_ensemble_loss, r.train_mean_individual_loss + 1e-9);
    }
}

TEST(Evaluate, IdenticalHeadsShareAccuracy) {
    Fixture f;
    auto model = EnsembleModel::init({8, {8}, Activation::relu, 0}, {2, FeatureMode::expand_split, 4, 1});
    model.heads()[1].expansion->weight = model.heads()[0].expansion->weight.clone();
    model.heads()[1].classifier.weight = model.heads()[0].classifier.weight.clone();
    const auto before = model.parameters()[0].clone();
    const EvalResult r = evaluate(model, f.split.val);
    EXPECT_EQ(r.ensemble_accuracy, r.head_accuracy[0]);
    EXPECT_EQ(r.head_accuracy[0], r.head_accuracy[1]);
    EXPECT_TRUE(std::equal(before.data().begin(), before.data().end(), model.parameters()[0].data().begin()));
}

TEST(Metrics, JsonlAndCsvRoundTrip) {
    Fixture f;
    auto model = small_model();
    const MetricsLog log = train(model, f.split.train, f.split.val, small_config(2));
    EXPECT_TRUE(parse_metrics_jsonl(metrics_jsonl(log)).same_metrics(log));
    EXPECT_TRUE(parse_metrics_csv(metrics_csv(log)).same_metrics(log));
}
