#include <gtest/gtest.h>

#include <cmath>

#include "pgnas/nn_ops.hpp"
#include "pgnas/tensor.hpp"

using namespace pgnas;

TEST(Tensor, ShapeAndValuesAgree) {
    Tensor t({2, 3});
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_THROW(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
    EXPECT_THROW(Tensor({0, 3}), ShapeError);
}

TEST(Tensor, DigestSeparatesValues) {
    Tensor a({2}, {1.0, 2.0});
    Tensor b({2}, {1.0, 2.0});
    Tensor c({2}, {1.0, 2.5});
    EXPECT_EQ(a.digest(), b.digest());
    EXPECT_NE(a.digest(), c.digest());
}

TEST(Dense, IdentityPassesInputThrough) {
    Tensor x({2, 2}, {1, 0, 0, 1});
    Tensor w({2, 2}, {1, 0, 0, 1});
    Tensor b({2}, {0, 0});
    Tensor y = nn::dense_forward(x, w, b);
    EXPECT_EQ(y.values(), x.values());
}

TEST(Dense, HandEvaluatedAffine) {
    Tensor x({1, 2}, {1, 2});
    Tensor w({2, 1}, {1, 1});
    Tensor b({1}, {0.5});
    Tensor y = nn::dense_forward(x, w, b);
    EXPECT_DOUBLE_EQ(y[0], 3.5);
}

TEST(Dense, ZeroWeightsAnnihilate) {
    Tensor x({3, 4}, std::vector<double>(12, 2.5));
    Tensor w({4, 2});
    Tensor b({2});
    Tensor y = nn::dense_forward(x, w, b);
    for (size_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], 0.0);
}

TEST(Dense, MismatchNamesBothShapes) {
    Tensor x({1, 3});
    Tensor w({2, 1});
    Tensor b({1});
    try {
        nn::dense_forward(x, w, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[1x3]"), std::string::npos);
        EXPECT_NE(msg.find("[2x1]"), std::string::npos);
    }
}

TEST(Conv2d, OneByOneUnitKernelIsIdentity) {
    Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor k({1, 1, 1, 1}, {1});
    Tensor y = nn::conv2d_forward(x, k, 1, 0);
    EXPECT_EQ(y.values(), x.values());
}

TEST(Conv2d, AllOnesHandConvolution) {
    Tensor x({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor k({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor y = nn::conv2d_forward(x, k, 1, 1);
    // same padding: corners see 4 taps, edges 6, center all 9
    EXPECT_DOUBLE_EQ(y.at(0, 0, 1, 1), 9.0);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 0), 4.0);
    EXPECT_DOUBLE_EQ(y.at(0, 0, 0, 1), 6.0);
}

TEST(Conv2d, ZeroKernelGivesZeroOutput) {
    Tensor x({2, 3, 4, 4}, std::vector<double>(96, 1.5));
    Tensor k({3, 2, 3, 3});
    Tensor y = nn::conv2d_forward(x, k, 1, 1);
    for (size_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], 0.0);
}

TEST(Conv2d, RejectsChannelMismatchAndBadStride) {
    Tensor x({1, 2, 4, 4});
    Tensor k({3, 2, 3, 3});
    EXPECT_THROW(nn::conv2d_forward(x, k, 1, 1), ShapeError);
    Tensor ok({2, 1, 3, 3});
    EXPECT_THROW(nn::conv2d_forward(x, ok, 0, 1), ShapeError);
}

TEST(MaskMul, OnesLeaveInputUnchanged) {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor m({2}, {1, 1});
    EXPECT_EQ(nn::mask_mul_forward(x, m).values(), x.values());
}

TEST(MaskMul, ZerosAnnihilateAndZeroGradient) {
    Tensor x({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor m({2}, {0, 0});
    Tensor y = nn::mask_mul_forward(x, m);
    for (size_t i = 0; i < y.numel(); ++i) EXPECT_DOUBLE_EQ(y[i], 0.0);
    Tensor gy({2, 3}, std::vector<double>(6, 1.0));
    Tensor gx({2, 3});
    Tensor gm({2});
    nn::mask_mul_backward(x, m, gy, &gx, &gm);
    for (size_t i = 0; i < gx.numel(); ++i) EXPECT_DOUBLE_EQ(gx[i], 0.0);
    EXPECT_DOUBLE_EQ(gm[0], 1 + 2 + 3);
    EXPECT_DOUBLE_EQ(gm[1], 4 + 5 + 6);
}

TEST(MaskMul, HalfMaskByChainRule) {
    Tensor x({1}, {4.0});
    Tensor m({1}, {0.5});
    Tensor y = nn::mask_mul_forward(x, m);
    EXPECT_DOUBLE_EQ(y[0], 2.0);
    Tensor gy({1}, {3.0});  // arbitrary upstream
    Tensor gx({1});
    Tensor gm({1});
    nn::mask_mul_backward(x, m, gy, &gx, &gm);
    EXPECT_DOUBLE_EQ(gm[0], 4.0 * 3.0);
    EXPECT_DOUBLE_EQ(gx[0], 0.5 * 3.0);
}

TEST(MaskMul, RejectsNonPrefixShapes) {
    Tensor x({2, 3});
    Tensor m({3});
    EXPECT_THROW(nn::mask_mul_forward(x, m), ShapeError);
}

TEST(CrossEntropy, UniformLogitsGiveLogClasses) {
    Tensor logits({1, 4}, {0.7, 0.7, 0.7, 0.7});
    EXPECT_NEAR(nn::softmax_cross_entropy_forward(logits, {2}), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, ConfidentTrueClassNearZero) {
    Tensor logits({1, 3}, {50.0, 0.0, 0.0});
    EXPECT_LT(nn::softmax_cross_entropy_forward(logits, {0}), 1e-9);
}

TEST(CrossEntropy, HandEvaluatedBinaryCase) {
    Tensor logits({1, 2}, {1.0, 0.0});
    // -log(e / (e + 1)) = log(1 + e^{-1})
    EXPECT_NEAR(nn::softmax_cross_entropy_forward(logits, {0}), 0.3132616875182228, 1e-15);
}

TEST(CrossEntropy, LabelOutOfRangeFails) {
    Tensor logits({1, 2}, {0.0, 0.0});
    EXPECT_THROW(nn::softmax_cross_entropy_forward(logits, {2}), DataError);
    EXPECT_THROW(nn::softmax_cross_entropy_forward(logits, {-1}), DataError);
}

TEST(CrossEntropy, StrictlyPositiveForFiniteLogits) {
    Tensor logits({2, 3}, {1.0, -2.0, 0.3, 0.0, 0.1, -0.1});
    EXPECT_GT(nn::softmax_cross_entropy_forward(logits, {0, 1}), 0.0);
}

TEST(Relu, ClampsNegativesAndZeroSubgradient) {
    Tensor x({4}, {-1.0, 0.0, 2.0, -0.5});
    Tensor y = nn::relu_forward(x);
    EXPECT_DOUBLE_EQ(y[0], 0.0);
    EXPECT_DOUBLE_EQ(y[2], 2.0);
    Tensor gy({4}, {1, 1, 1, 1});
    Tensor gx({4});
    nn::relu_backward(x, gy, &gx);
    EXPECT_DOUBLE_EQ(gx[0], 0.0);
    EXPECT_DOUBLE_EQ(gx[1], 0.0);  // subgradient at 0 is 0
    EXPECT_DOUBLE_EQ(gx[2], 1.0);
}

TEST(GlobalAvgPool, AveragesSpatialExtent) {
    Tensor x({1, 2, 2, 2}, {1, 2, 3, 4, 10, 10, 10, 10});
    Tensor y = nn::global_avg_pool_forward(x);
    EXPECT_DOUBLE_EQ(y.at(0, 0), 2.5);
    EXPECT_DOUBLE_EQ(y.at(0, 1), 10.0);
}

TEST(Forward, DeterministicBitwise) {
    Tensor x({1, 2, 5, 5});
    for (size_t i = 0; i < x.numel(); ++i) x[i] = std::sin(static_cast<double>(i) * 0.7);
    Tensor k({2, 3, 3, 3});
    for (size_t i = 0; i < k.numel(); ++i) k[i] = std::cos(static_cast<double>(i) * 0.3);
    Tensor y1 = nn::conv2d_forward(x, k, 1, 1);
    Tensor y2 = nn::conv2d_forward(x, k, 1, 1);
    EXPECT_EQ(y1.values(), y2.values());
}
