#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dncc/error.hpp"
#include "dncc/loss.hpp"
#include "dncc/tensor.hpp"

using namespace dncc;

namespace {

Tensor random_tensor(Shape shape, std::uint32_t seed, bool requires_grad = true) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = normal(rng);
    return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Matmul, IdentityLeavesInputUnchanged) {
    const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
    const Tensor x = Tensor::matrix({{1.5, -2}, {3, 4}});
    EXPECT_EQ(values(matmul(eye, x)), values(x));
}

TEST(Matmul, HandCheckedProduct) {
    const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
    const Tensor b = Tensor::matrix({{1}, {1}});
    const Tensor c = matmul(a, b);
    EXPECT_EQ(c.shape(), (Shape{2, 1}));
    EXPECT_EQ(values(c), (std::vector<double>{3, 7}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    const Tensor a = Tensor::zeros({2, 3});
    const Tensor b = Tensor::zeros({2, 3});
    try {
        matmul(a, b);
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find(shape_str({2, 3})), std::string::npos) << msg;
    }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
    Tensor a = random_tensor({3, 4}, 1);
    Tensor b = random_tensor({4, 2}, 2);
    std::vector<Tensor> params{a, b};
    const auto rep = gradient_check([&] { return sum(mul(matmul(a, b), matmul(a, b))); }, params, 1e-6, 1e-7);
    EXPECT_TRUE(rep.pass) << rep.worst;
}

TEST(Elementwise, Relu) {
    const Tensor x = Tensor::from({3}, {-1, 0, 2});
    EXPECT_EQ(values(relu(x)), (std::vector<double>{0, 0, 2}));
    EXPECT_EQ(values(elementwise(UnaryOp::relu, x)), (std::vector<double>{0, 0, 2}));
}

TEST(Elementwise, LogInvertsExp) {
    const Tensor x = random_tensor({4, 5}, 3, false);
    const Tensor y = log(exp(x));
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-12);
}

TEST(Elementwise, LogOfNonPositiveCarriesIndex) {
    const Tensor x = Tensor::from({4}, {1.0, 2.0, 0.0, -1.0});
    try {
        log(x);
        FAIL() << "expected DomainError";
    } catch (const DomainError& e) {
        EXPECT_EQ(e.index(), 2u);
    }
}

TEST(Elementwise, MulGradientMatchesFiniteDifferences) {
    Tensor a = random_tensor({3, 3}, 4);
    Tensor b = random_tensor({3, 3}, 5);
    std::vector<Tensor> params{a, b};
    const auto rep = gradient_check([&] { return sum(mul(mul(a, b), a)); }, params, 1e-6, 1e-7);
    EXPECT_TRUE(rep.pass) << rep.worst;
}

TEST(Elementwise, RowVectorBroadcastGradientSumsOverRows) {
    Tensor x = Tensor::zeros({3, 2}, true);
    Tensor b = Tensor::from({2}, {1.0, -1.0}, true);
    sum(add(x, b)).backward();
    EXPECT_EQ(std::vector<double>(b.grad().begin(), b.grad().end()), (std::vector<double>{3, 3}));
}

TEST(Elementwise, IncompatibleShapesRejected) {
    EXPECT_THROW(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
}

TEST(LogSoftmax, UniformRow) {
    const Tensor out = log_softmax_rows(Tensor::zeros({1, 10}));
    for (double v : out.data()) EXPECT_NEAR(v, -2.302585092994046, 1e-12);
}

TEST(LogSoftmax, LargeLogitsDoNotOverflow) {
    const Tensor out = log_softmax_rows(Tensor::matrix({{1000, 0}}));
    EXPECT_NEAR(out.at(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(out.at(0, 1), -1000.0, 1e-9);
}

TEST(LogSoftmax, ExponentialsSumToOne) {
    const Tensor out = log_softmax_rows(scale(random_tensor({5, 7}, 6, false), 10.0));
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < out.cols(); ++c) s += std::exp(out.at(r, c));
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(LogSoftmax, ShiftInvariant) {
    const Tensor x = random_tensor({3, 4}, 7, false);
    const Tensor a = log_softmax_rows(x);
    const Tensor b = log_softmax_rows(add_scalar(x, 123.0));
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-12);
}

TEST(LogSoftmax, NonFiniteInputRejected) {
    EXPECT_THROW(log_softmax_rows(Tensor::matrix({{0.0, NAN}})), NumericError);
    EXPECT_THROW(log_softmax_rows(Tensor::matrix({{0.0, INFINITY}})), NumericError);
}

TEST(Reduce, MeanAndAxisSum) {
    EXPECT_DOUBLE_EQ(mean(Tensor::from({3}, {1, 2, 3})).item(), 2.0);
    const Tensor s = reduce(ReduceOp::sum, Tensor::full({2, 3}, 1.0), 0);
    EXPECT_EQ(values(s), (std::vector<double>{2, 2, 2}));
}

TEST(Reduce, InvalidAxisRejected) {
    EXPECT_THROW(reduce(ReduceOp::sum, Tensor::full({2, 3}, 1.0), 2), DimensionError);
}

TEST(Reduce, MeanGradientIsOneOverN) {
    Tensor x = Tensor::zeros({2, 5}, true);
    mean(x).backward();
    for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 0.1);
}

TEST(Backward, SumGivesOnes) {
    Tensor x = random_tensor({2, 3}, 8);
    sum(x).backward();
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareAtThree) {
    Tensor x = Tensor::scalar(3.0, true);
    mul(x, x).backward();
    EXPECT_EQ(x.grad()[0], 6.0);
}

TEST(Backward, NonScalarRejected) {
    Tensor x = Tensor::zeros({2}, true);
    EXPECT_THROW(x.backward(), ContractError);
}

TEST(Backward, LeafGradientsAccumulate) {
    Tensor x = Tensor::scalar(2.0, true);
    scale(x, 3.0).backward();
    scale(x, 3.0).backward();
    EXPECT_EQ(x.grad()[0], 6.0);
    x.zero_grad();
    EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
    Tensor x = Tensor::scalar(1.5, true);
    const Tensor y = exp(x);
    const Tensor z = add(mul(y, y), y);
    EXPECT_EQ(Tape::record(z).size(), 4u);
    z.backward();
    EXPECT_NEAR(x.grad()[0], 2 * std::exp(3.0) + std::exp(1.5), 1e-12);
}

TEST(Backward, NoGradGuardSkipsRecording) {
    Tensor x = Tensor::scalar(1.0, true);
    NoGradGuard guard;
    const Tensor y = scale(x, 2.0);
    EXPECT_FALSE(y.requires_grad());
}

TEST(Backward, DetachStopsGradient) {
    Tensor x = Tensor::scalar(2.0, true);
    mul(x, x.detach()).backward();
    EXPECT_EQ(x.grad()[0], 2.0);
}

TEST(Backward, LinearityOfGradient) {
    Tensor x = random_tensor({4}, 9);
    const Tensor w = random_tensor({4}, 10, false);
    sum(mul(scale(x, 2.5), w)).backward();
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(x.grad()[i], 2.5 * w.data()[i], 1e-15);
}

TEST(Pick, OutOfRangeLabelRejected) {
    const Tensor x = Tensor::zeros({2, 3});
    const std::vector<int> bad{0, 3};
    EXPECT_THROW(pick(x, bad), ContractError);
}

TEST(ConcatSlice, RoundTrip) {
    const Tensor x = random_tensor({3, 6}, 11, false);
    const std::vector<Tensor> parts{slice_cols(x, 0, 2), slice_cols(x, 2, 4)};
    EXPECT_EQ(values(concat_cols(parts)), values(x));
}

TEST(GradientCheck, Square) {
    Tensor x = Tensor::scalar(1.0, true);
    std::vector<Tensor> params{x};
    const auto rep = gradient_check([&] { return mul(x, x); }, params, 1e-6, 1e-9);
    EXPECT_TRUE(rep.pass);
    EXPECT_LT(rep.worst, 1e-9);
    EXPECT_EQ(rep.max_rel_error.size(), 1u);
}

TEST(GradientCheck, CrossEntropy) {
    Tensor logits = random_tensor({4, 3}, 12);
    const std::vector<int> labels{0, 2, 1, 2};
    std::vector<Tensor> params{logits};
    const auto rep = gradient_check([&] { return individual_ce(logits, labels); }, params, 1e-6, 1e-6);
    EXPECT_TRUE(rep.pass) << rep.worst;
}

TEST(GradientCheck, DnccHeadLoss) {
    std::vector<Tensor> logits{random_tensor({4, 3}, 13), random_tensor({4, 3}, 14), random_tensor({4, 3}, 15)};
    const std::vector<int> labels{0, 2, 1, 2};
    const auto rep = gradient_check([&] { return dncc_head_loss(0, logits, labels, 0.01, false); }, logits, 1e-6, 1e-5);
    EXPECT_TRUE(rep.pass) << rep.worst;
}

TEST(GradientCheck, WrongGradientDetected) {
    Tensor x = Tensor::scalar(1.3, true);
    std::vector<Tensor> params{x};
    // clamp_min at the floor has a one-sided derivative; the check must notice the kink.
    const auto rep = gradient_check([&] { return clamp_min(x, 1.3); }, params, 1e-6, 1e-5);
    EXPECT_FALSE(rep.pass);
}

TEST(GradientCheck, DeterministicReport) {
    Tensor a = random_tensor({3, 3}, 16);
    std::vector<Tensor> params{a};
    const auto r1 = gradient_check([&] { return sum(exp(a)); }, params, 1e-6, 1e-7);
    const auto r2 = gradient_check([&] { return sum(exp(a)); }, params, 1e-6, 1e-7);
    EXPECT_EQ(r1.worst, r2.worst);
    EXPECT_EQ(r1.max_rel_error, r2.max_rel_error);
}
