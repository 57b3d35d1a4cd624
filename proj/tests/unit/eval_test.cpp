#include "eval.hpp"

#include "common.hpp"
#include "rng.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace dag;
using dag::testing::random_batch;

TEST(Roc, PerfectlySeparatedScores) {
    const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
    const std::vector<std::uint8_t> g{1, 1, 0, 0};
    const RocCurve r = verification_roc(s, g);
    EXPECT_EQ(r.genuine, 2u);
    EXPECT_EQ(r.impostor, 2u);
    EXPECT_DOUBLE_EQ(r.tar_at(0.0), 1.0);
    EXPECT_EQ(r.points.front().far, 0.0);
    EXPECT_EQ(r.points.front().tar, 0.0);
    EXPECT_EQ(r.points.back().far, 1.0);
    EXPECT_EQ(r.points.back().tar, 1.0);
}

TEST(Roc, ConstantScoresGiveOnlyTheEndpoints) {
    const std::vector<double> s(6, 0.5);
    const std::vector<std::uint8_t> g{1, 0, 1, 0, 1, 0};
    const RocCurve r = verification_roc(s, g);
    ASSERT_EQ(r.points.size(), 2u);
    EXPECT_EQ(r.tar_at(0.5), 0.0);
}

TEST(Roc, MatchesExhaustiveThresholdOracle) {
    CounterRng rng{41};
    std::vector<double> s(20);
    std::vector<std::uint8_t> g(20);
    for (std::size_t i = 0; i < 20; ++i) {
        g[i] = i % 3 == 0 ? 1 : 0;
        s[i] = std::round(rng.uniform(-1, 1) * 8) / 8 + (g[i] ? 0.2 : 0.0);  // coarse grid forces ties
    }
    const RocCurve r = verification_roc(s, g);
    const double ng = std::count(g.begin(), g.end(), 1), ni = 20 - ng;
    for (const auto& p : r.points) {
        double tp = 0, fp = 0;
        for (std::size_t i = 0; i < 20; ++i)
            if (s[i] > p.threshold) (g[i] ? tp : fp) += 1;
        EXPECT_DOUBLE_EQ(p.tar, tp / ng);
        EXPECT_DOUBLE_EQ(p.far, fp / ni);
    }
    for (std::size_t k = 1; k < r.points.size(); ++k) {
        EXPECT_LT(r.points[k].threshold, r.points[k - 1].threshold);
        EXPECT_GE(r.points[k].far, r.points[k - 1].far);
        EXPECT_GE(r.points[k].tar, r.points[k - 1].tar);
    }
}

TEST(Roc, NeedsBothClasses) {
    const std::vector<double> s{0.1, 0.2};
    const std::vector<std::uint8_t> g{1, 1};
    try {
        verification_roc(s, g);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InsufficientPairs);
    }
}

TEST(VerificationPairs, AllGenuineAndSampledImpostors) {
    const std::vector<int> labels{0, 0, 1, 1, 2};
    const PairSet all = verification_pairs(labels, 0, 1);
    EXPECT_EQ(all.a.size(), 10u);
    EXPECT_EQ(std::count(all.genuine.begin(), all.genuine.end(), 1), 2);
    const PairSet some = verification_pairs(labels, 3, 1);
    EXPECT_EQ(some.a.size(), 5u);
    for (std::size_t k = 0; k < some.a.size(); ++k)
        EXPECT_EQ(some.genuine[k] != 0, labels[some.a[k]] == labels[some.b[k]]);
}

TEST(VerificationAccuracy, SeparableScoresGiveOne) {
    std::vector<double> s;
    std::vector<std::uint8_t> g;
    for (int i = 0; i < 40; ++i) {
        s.push_back(i < 20 ? 0.9 - 0.01 * i : -0.5 + 0.01 * i);
        g.push_back(i < 20 ? 1 : 0);
    }
    EXPECT_DOUBLE_EQ(verification_accuracy(s, g, 10, 1), 1.0);
}

TEST(Rank1, MatchesBruteForceWithExcludeSelf) {
    CounterRng rng{42};
    const Batch e = random_batch(rng, 30, 5);
    std::vector<int> labels;
    for (int i = 0; i < 30; ++i) labels.push_back(i % 4);
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < 30; ++i) {
        Eigen::Index best = -1;
        double best_s = -2;
        for (Eigen::Index j = 0; j < 30; ++j) {
            if (i == j) continue;
            const double c = e.row(i).dot(e.row(j)) / (e.row(i).norm() * e.row(j).norm());
            if (c > best_s) best_s = c, best = j;
        }
        hits += labels[static_cast<std::size_t>(best)] == labels[static_cast<std::size_t>(i)];
    }
    EXPECT_DOUBLE_EQ(rank1_identification(e, labels, e, labels, true), hits / 30.0);
    EXPECT_DOUBLE_EQ(rank1_identification(e, labels, e, labels, false), 1.0);
}

TEST(Rank1, OneHotEmbeddingsAreAlwaysCorrect) {
    const int classes = 5;
    Batch gal = Batch::Identity(classes, classes), probes(10, classes);
    std::vector<int> gl(classes), pl(10);
    std::iota(gl.begin(), gl.end(), 0);
    for (int i = 0; i < 10; ++i) {
        pl[static_cast<std::size_t>(i)] = i % classes;
        probes.row(i) = 3.0 * gal.row(i % classes);
    }
    EXPECT_DOUBLE_EQ(rank1_identification(gal, gl, probes, pl), 1.0);
}

TEST(Rank1, RandomEmbeddingsNearChance) {
    CounterRng rng{43};
    const int classes = 10, n = 2000;
    const Batch gal = random_batch(rng, classes, 16), probes = random_batch(rng, n, 16);
    std::vector<int> gl(classes), pl(n);
    std::iota(gl.begin(), gl.end(), 0);
    for (int i = 0; i < n; ++i) pl[static_cast<std::size_t>(i)] = static_cast<int>(rng.index(classes));
    EXPECT_NEAR(rank1_identification(gal, gl, probes, pl), 0.1, 0.03);
}

TEST(FirstOccurrenceGallery, SplitsByFirstSighting) {
    const std::vector<int> labels{3, 1, 3, 2, 1};
    const GallerySplit s = first_occurrence_gallery(labels);
    EXPECT_EQ(s.gallery, (std::vector<std::size_t>{0, 1, 3}));
    EXPECT_EQ(s.probes, (std::vector<std::size_t>{2, 4}));
}

TEST(DisentanglementProbe, LinearTargetGivesOneAndNoiseGivesNearZero) {
    CounterRng rng{44};
    const Batch x = random_batch(rng, 400, 6);
    Eigen::MatrixXd y(400, 2);
    Eigen::VectorXd w(6);
    w << 1, -2, 0.5, 0, 3, 1;
    y.col(0) = x * w + Eigen::VectorXd::Constant(400, 0.7);
    for (Eigen::Index i = 0; i < 400; ++i) y(i, 1) = rng.uniform(-1, 1);
    const ProbeReport r = disentanglement_probe(x, y, 5, 1);
    ASSERT_EQ(r.r2_test.size(), 2u);
    EXPECT_NEAR(r.r2_test[0], 1.0, 1e-10);
    EXPECT_LE(r.r2_test[1], 0.1);
}

TEST(NearestNeighbors, SelfFirstAndFullySorted) {
    CounterRng rng{45};
    const Batch g = random_batch(rng, 12, 4);
    bool truncated = false;
    const auto nn = nearest_neighbors(g, g, 1, &truncated);
    EXPECT_FALSE(truncated);
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(nn[i][0].index, i);
        EXPECT_NEAR(nn[i][0].similarity, 1.0, 1e-12);
    }
    const auto all = nearest_neighbors(g.topRows(2), g, 50, &truncated);
    EXPECT_TRUE(truncated);
    ASSERT_EQ(all[0].size(), 12u);
    for (std::size_t k = 1; k < 12; ++k) EXPECT_GE(all[0][k - 1].similarity, all[0][k].similarity);
}

namespace {

struct AttrData {
    Batch x;
    Eigen::MatrixXi y;
};

AttrData attribute_data(std::uint64_t seed, int n, bool informative) {
    CounterRng rng{seed};
    AttrData d{random_batch(rng, n, 4), Eigen::MatrixXi(n, 2)};
    for (int i = 0; i < n; ++i) {
        d.y(i, 0) = informative ? (d.x(i, 0) > 0) : static_cast<int>(rng.index(2));
        d.y(i, 1) = informative ? (d.x(i, 2) + d.x(i, 3) > 0) : static_cast<int>(rng.index(2));
    }
    return d;
}

}  // namespace

TEST(AttributeProbe, LearnsSeparableAttributes) {
    const AttrData tr = attribute_data(46, 400, true), te = attribute_data(47, 400, true);
    const auto r = attribute_probe(tr.x, tr.y, te.x, te.y, {});
    EXPECT_GE(r.mean, 0.95);
    EXPECT_EQ(r.accuracy.size(), 2u);
}

TEST(AttributeProbe, UninformativeFeaturesStayNearChance) {
    const AttrData tr = attribute_data(48, 400, false), te = attribute_data(49, 400, false);
    const auto r = attribute_probe(tr.x, tr.y, te.x, te.y, {});
    EXPECT_NEAR(r.mean, 0.5, 0.08);
}

TEST(AttributeProbe, SingleClassAttributeIsSkipped) {
    AttrData tr = attribute_data(50, 100, true), te = attribute_data(51, 100, true);
    tr.y.col(1).setZero();
    const auto r = attribute_probe(tr.x, tr.y, te.x, te.y, {});
    EXPECT_TRUE(r.skipped[1]);
    EXPECT_TRUE(std::isnan(r.accuracy[1]));
    EXPECT_DOUBLE_EQ(r.mean, r.accuracy[0]);
}

TEST(AttributePermutationBaseline, NearChanceWithSpread) {
    const AttrData tr = attribute_data(52, 300, true), te = attribute_data(53, 300, true);
    const auto b = attribute_permutation_baseline(tr.x, tr.y, te.x, te.y, {}, 10);
    EXPECT_EQ(b.samples.size(), 10u);
    EXPECT_NEAR(b.mean, 0.5, 0.1);
    EXPECT_GT(b.stddev, 0.0);
}
