#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pzsl/disambiguation.hpp"
#include "pzsl/train.hpp"

using namespace pzsl;

namespace {

Tensor<double> c(Array<double> a) { return Tensor<double>::constant(std::move(a)); }

Array<std::uint8_t> mask_of(std::initializer_list<std::initializer_list<std::uint8_t>> rows) {
    return Array<std::uint8_t>(rows);
}

oracle::Mat to_mat(const Array<double>& a) {
    oracle::Mat m(a.rows(), std::vector<double>(a.cols()));
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m[i][j] = a(i, j);
    return m;
}

ClassVocabulary vocab(std::size_t seen, std::size_t unseen) { return synthetic_vocabulary(seen, unseen); }

} // namespace

TEST(Correction, SelfSimilarityOrthogonalityAndDiagonal) {
    const auto r = label_correction<double>({{2, 0}, {0, 3}, {1, 1}}, {{1, 0}, {0, 1}});
    EXPECT_DOUBLE_EQ(r(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(r(0, 1), 0.0);
    EXPECT_DOUBLE_EQ(r(1, 1), 1.0);
    EXPECT_NEAR(r(2, 0), 0.7071, 1e-4);
}

TEST(Correction, BoundedAndMatchesOracle) {
    Rng rng(1);
    const auto p = random_uniform<double>({40, 7}, rng), t = random_uniform<double>({5, 7}, rng);
    const auto r = label_correction(p, t);
    const auto ref = oracle::correction(to_mat(p), to_mat(t));
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            EXPECT_NEAR(r(i, j), ref[i][j], 1e-12);
            EXPECT_LE(std::abs(r(i, j)), 1.0);
        }
}

TEST(Correction, ZeroNormRowThrows) {
    EXPECT_THROW(label_correction<double>({{0, 0}}, {{1, 0}}), NumericError);
    EXPECT_THROW(label_correction<double>({{1, 0}}, {{0, 0}}), NumericError);
    EXPECT_THROW(label_correction<double>({{1, 0, 0}}, {{1, 0}}), DimensionError);
}

TEST(Loss, DistanceZeroWhenLabelsEqualText) {
    const Array<double> text{{1, 2}, {3, 4}};
    const auto loss = partial_zsl_loss<double>(c({{0.5, 0.5}}), {{1, 1}}, {{0.5, 0.5}}, text, c(text));
    EXPECT_EQ(loss.dist_term.item(), 0.0);
}

TEST(Loss, ConfidentCorrectPredictionHasZeroCE) {
    const Array<double> text{{1, 0}};
    const auto loss = partial_zsl_loss<double>(c({{1.0}}), {{1.0}}, {{1.0}}, text, c(text));
    EXPECT_EQ(loss.ce_term.item(), 0.0);
}

TEST(Loss, HandEvaluatedCE) {
    const Array<double> text{{1, 0}, {0, 1}};
    const auto loss = partial_zsl_loss<double>(c({{0.5, 0.5}}), {{0.8, 0.2}}, {{0.5, 0.5}}, text, c(text));
    EXPECT_NEAR(loss.ce_term.item(), 0.3466, 1e-3);
    EXPECT_NEAR(loss.total.item(), 0.3466, 1e-3);
}

TEST(Loss, TermsSwitchOffIndependently) {
    const Array<double> text{{1, 0}, {0, 1}};
    const Array<double> shifted{{0, 0}, {0, 1}};
    LossTerms no_ce{false, true, false};
    auto loss = partial_zsl_loss<double>(c({{0.5, 0.5}}), {{0.8, 0.2}}, {{0.5, 0.5}}, text, c(shifted), no_ce);
    EXPECT_EQ(loss.ce_term.item(), 0.0);
    EXPECT_DOUBLE_EQ(loss.dist_term.item(), 1.0);
    LossTerms none{false, false, false};
    loss = partial_zsl_loss<double>(c({{0.5, 0.5}}), {{0.8, 0.2}}, {{0.5, 0.5}}, text, c(shifted), none);
    EXPECT_EQ(loss.total.item(), 0.0);
    EXPECT_FALSE(loss.total.requires_grad());
}

TEST(Loss, ClampDropsNegativeCorrections) {
    const Array<double> text{{1, 0}, {0, 1}};
    LossTerms clamp{true, true, true};
    const auto a = partial_zsl_loss<double>(c({{0.25, 0.75}}), {{-0.5, 0.5}}, {{0.5, 0.5}}, text, c(text), clamp);
    EXPECT_NEAR(a.ce_term.item(), -0.5 * 0.5 * std::log(0.75), 1e-12);
}

TEST(Loss, ShapeMismatchThrows) {
    const Array<double> text{{1, 0}, {0, 1}};
    EXPECT_THROW(partial_zsl_loss<double>(c({{0.5, 0.5}}), {{1.0}}, {{0.5, 0.5}}, text, c(text)), DimensionError);
    EXPECT_THROW(partial_zsl_loss<double>(c({{0.5, 0.5}}), {{1, 1}}, {{0.5, 0.5}}, text, c({{1, 0}})),
                 DimensionError);
}

TEST(Refine, SingletonAndSymmetricCases) {
    auto y = refine_confidence<double>({{0.3, 0.9}}, {{0.2, 0.5}}, mask_of({{0, 1}}));
    EXPECT_EQ(y(0, 0), 0.0);
    EXPECT_EQ(y(0, 1), 1.0);
    y = refine_confidence<double>({{0.25, 0.25}}, {{0.25, 0.25}}, mask_of({{1, 1}}));
    EXPECT_DOUBLE_EQ(y(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(y(0, 1), 0.5);
}

TEST(Refine, HandEvaluatedThreeClasses) {
    const auto y = refine_confidence<double>({{0.9, 0.1, 0.7}}, {{0.7, 0.2, 0.1}}, mask_of({{1, 1, 0}}));
    EXPECT_NEAR(y(0, 0), 0.8421, 1e-3);
    EXPECT_NEAR(y(0, 1), 0.1579, 1e-3);
    EXPECT_EQ(y(0, 2), 0.0);
}

TEST(Refine, AllNonPositiveFallsBackToFloor) {
    const auto y = refine_confidence<double>({{-0.9, -0.8, 0.1}}, {{0.1, 0.2, 0.7}}, mask_of({{1, 1, 0}}));
    EXPECT_DOUBLE_EQ(y(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(y(0, 1), 0.5);
}

TEST(Refine, EmptyCandidateRowThrows) {
    EXPECT_THROW(refine_confidence<double>({{0.1, 0.2}}, {{0.5, 0.5}}, mask_of({{0, 0}})), DataError);
    EXPECT_THROW(initial_confidence<double>(mask_of({{0, 0}})), DataError);
}

TEST(Refine, PropertyRowsSumToOneOnCandidates) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + trial % 9, q = 2 + trial % 6;
        auto r = random_uniform<double>({n, q}, rng);
        auto m = random_uniform<double>({n, q}, rng);
        for (auto& v : m.data()) v = std::abs(v);
        Array<std::uint8_t> mask = Array<std::uint8_t>::matrix(n, q);
        for (std::size_t i = 0; i < n; ++i) {
            mask(i, i % q) = 1;
            for (std::size_t j = 0; j < q; ++j) mask(i, j) |= rng.bernoulli(0.4);
        }
        const auto y = refine_confidence(r, m, mask);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < q; ++j) {
                if (!mask(i, j)) {
                    ASSERT_EQ(y(i, j), 0.0);
                }
                ASSERT_GE(y(i, j), 0.0);
                s += y(i, j);
            }
            ASSERT_NEAR(s, 1.0, 1e-12);
        }
    }
}

TEST(InitialConfidence, UniformOverCandidates) {
    const auto y = initial_confidence<double>(mask_of({{1, 0, 1, 1}, {0, 1, 0, 0}}));
    EXPECT_DOUBLE_EQ(y(0, 0), 1.0 / 3.0);
    EXPECT_EQ(y(0, 1), 0.0);
    EXPECT_EQ(y(1, 1), 1.0);
}

TEST(Predict, ExactMatchWins) {
    Rng rng(3);
    auto classes = random_uniform<double>({6, 5}, rng);
    normalize_rows(classes);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_EQ(predict<double>(classes.row(k), classes), k);
}

TEST(Predict, SingleClassAlwaysZeroAndTiesGoLow) {
    EXPECT_EQ(predict<double>(std::vector<double>{-3, 1}, Array<double>{{0.2, 0.1}}), 0u);
    EXPECT_EQ(predict<double>(std::vector<double>{1, 1}, Array<double>{{1, 0}, {0, 1}}), 0u);
    EXPECT_THROW(predict<double>(std::vector<double>{1}, Array<double>{{1, 0}}), DimensionError);
}

TEST(Predict, MatchesOracleOnRandomTrials) {
    Rng rng(4);
    for (int t = 0; t < 1000; ++t) {
        const auto classes = random_uniform<double>({5, 8}, rng);
        const auto p = random_uniform<double>({1, 8}, rng);
        ASSERT_EQ(predict<double>(p.row(0), classes),
                  oracle::predict(std::vector<double>(p.data().begin(), p.data().end()), to_mat(classes)));
    }
}

TEST(Evaluate, AllCorrect) {
    const std::vector<std::size_t> truth{0, 1, 2, 3};
    const auto acc = evaluate(truth, truth, vocab(2, 2));
    EXPECT_EQ(acc.seen, 1.0);
    EXPECT_EQ(acc.unseen, 1.0);
}

TEST(Evaluate, NoUnseenInstances) {
    const std::vector<std::size_t> truth{0, 1};
    const auto acc = evaluate(truth, truth, vocab(2, 2));
    EXPECT_EQ(acc.seen, 1.0);
    EXPECT_FALSE(acc.unseen.has_value());
}

TEST(Evaluate, MixedCounts) {
    const std::vector<std::size_t> truth{0, 1, 2, 0, 3, 3}, preds{0, 1, 2, 1, 3, 0};
    const auto acc = evaluate(preds, truth, vocab(3, 1));
    EXPECT_DOUBLE_EQ(*acc.seen, 0.75);
    EXPECT_DOUBLE_EQ(*acc.unseen, 0.5);
}

TEST(Evaluate, ErrorPaths) {
    const std::vector<std::size_t> a{0, 1}, b{0};
    EXPECT_THROW(evaluate(a, b, vocab(2, 0)), DataError);
    const std::vector<std::size_t> bad{7, 0};
    EXPECT_THROW(evaluate(a, bad, vocab(2, 0)), DataError);
}

TEST(Disambiguation, AccuracyCountsArgmax) {
    const Array<double> y{{0.2, 0.8}, {0.6, 0.4}, {0.5, 0.5}};
    const std::vector<std::size_t> truth{1, 1, 0};
    EXPECT_NEAR(disambiguation_accuracy(y, truth), 2.0 / 3.0, 1e-15);
}
