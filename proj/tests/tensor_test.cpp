#include <gtest/gtest.h>

#include <cmath>

#include "mka/tensor.hpp"
#include "mka/verify.hpp"

using mka::ModelDims;
using mka::Tensor;

TEST(Matmul, IdentityCase) {
    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    Tensor<double> m({2, 2}, {1, 2, 3, 4});
    auto c = mka::matmul(eye, m);
    EXPECT_EQ(c.data, m.data);
}

TEST(Matmul, ProjectorRowSelection) {
    Tensor<double> p({2, 2}, {1, 0, 0, 0});
    Tensor<double> m({2, 2}, {5, 6, 7, 8});
    auto c = mka::matmul(p, m);
    EXPECT_EQ(c.data, (std::vector<double>{5, 6, 0, 0}));
}

TEST(Matmul, TripleLoopOracle) {
    mka::Rng rng(7);
    auto a = Tensor<double>::random({7, 5}, rng);
    auto b = Tensor<double>::random({5, 3}, rng);
    auto c = mka::matmul(a, b);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < 5; ++k) acc += a(i, k) * b(k, j);
            EXPECT_NEAR(c(i, j), acc, 1e-12);
        }
}

TEST(Matmul, ShapeMismatchReportsDimensions) {
    Tensor<double> a({2, 3});
    Tensor<double> b({4, 2});
    try {
        mka::matmul(a, b);
        FAIL() << "expected shape mismatch";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
    }
}

TEST(Softmax, SymmetricRow) {
    Tensor<double> s({1, 2}, {0, 0});
    auto p = mka::softmax_rows(s);
    EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(p(0, 1), 0.5);
}

TEST(Softmax, SingleElementRow) {
    for (double x : {-123.0, 0.0, 88.5}) {
        Tensor<double> s({1, 1}, {x});
        EXPECT_DOUBLE_EQ(mka::softmax_rows(s)(0, 0), 1.0);
    }
}

TEST(Softmax, ClosedFormRatio) {
    Tensor<double> s({1, 2}, {2, 0});
    auto p = mka::softmax_rows(s);
    const double e2 = std::exp(2.0);
    EXPECT_NEAR(p(0, 0), e2 / (e2 + 1.0), 1e-15);
    EXPECT_NEAR(p(0, 1), 1.0 / (e2 + 1.0), 1e-15);
}

TEST(Softmax, NanRejected) {
    Tensor<double> s({1, 2}, {std::nan(""), 0.0});
    EXPECT_THROW(mka::softmax_rows(s), std::invalid_argument);
}

TEST(Softmax, RowSumProperty) {
    auto r = mka::check_softmax_row_sums(11);
    EXPECT_TRUE(r.passed) << r.worst_err;
}

TEST(Softmax, ShiftInvarianceProperty) {
    auto r = mka::check_softmax_shift_invariance(12);
    EXPECT_TRUE(r.passed) << r.worst_err;
}

TEST(ShiftedExp, ShiftByOwnMax) {
    const double mu = 3.7;
    Tensor<double> s({2}, {mu, mu - 1.0});
    auto e = mka::shifted_exp(s, mu);
    EXPECT_DOUBLE_EQ(e(0), 1.0);
    EXPECT_NEAR(e(1), std::exp(-1.0), 1e-16);
}

TEST(ShiftedExp, ZeroCase) {
    Tensor<double> s({1}, {0.0});
    EXPECT_DOUBLE_EQ(mka::shifted_exp(s, 0.0)(0), 1.0);
}

TEST(ShiftedExp, SinglePrecisionBoundary) {
    // shifted values stay finite and in (0,1]; the unshifted exp of the same
    // scores blows past the float range once they cross ~88.7
    Tensor<float> s({2}, {80.0f, 79.0f});
    auto e = mka::shifted_exp(s, 80.0f);
    EXPECT_TRUE(e.all_finite());
    EXPECT_LE(e(0), 1.0f);
    EXPECT_LE(e(1), 1.0f);
    EXPECT_FALSE(std::isfinite(std::exp(89.0f)));
}

TEST(Heads, LayoutDefinition) {
    ModelDims dims(4, 2, 2);
    Tensor<double> x({1, 1, 4}, {1, 2, 3, 4});
    auto h = mka::split_heads(x, dims);
    EXPECT_EQ(h.shape, (std::vector<std::size_t>{1, 2, 1, 2}));
    EXPECT_EQ(h.data, (std::vector<double>{1, 2, 3, 4}));
}

TEST(Heads, RoundTripBitIdentical) {
    ModelDims dims(8, 4, 2);
    mka::Rng rng(3);
    auto x = Tensor<double>::random({2, 3, 8}, rng);
    auto back = mka::merge_heads(mka::split_heads(x, dims), dims);
    EXPECT_EQ(back.data, x.data);
}

TEST(Heads, SingleHeadIsIdentity) {
    ModelDims dims(6, 1, 6);
    mka::Rng rng(4);
    auto x = Tensor<double>::random({1, 5, 6}, rng);
    auto h = mka::split_heads(x, dims);
    EXPECT_EQ(h.data, x.data);
}

TEST(Heads, IndivisibleWidthRejected) {
    EXPECT_THROW(ModelDims(7, 2, 3), std::invalid_argument);
}

TEST(Heads, RoundTripProperty) {
    auto r = mka::check_split_merge_roundtrip(13);
    EXPECT_TRUE(r.passed);
}

TEST(Tensor, ShapeDataMismatchRejected) {
    EXPECT_THROW((Tensor<double>({2, 2}, {1.0})), std::invalid_argument);
}
