#include "losses.hpp"

#include "common.hpp"
#include "rng.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace dag;
using dag::testing::max_rel_error;
using dag::testing::numeric_gradient;
using dag::testing::random_batch;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::Internal;
}

Eigen::VectorXd row(const Batch& b, Eigen::Index i) { return b.row(i).transpose(); }

}  // namespace

TEST(Cosine, ValuesAndGradient) {
    Eigen::VectorXd a(2), b(2);
    a << 1, 0;
    b << 0, 3;
    EXPECT_NEAR(cosine_similarity(a, b).value, 0.0, 1e-15);
    EXPECT_NEAR(cosine_similarity(a, 2 * a).value, 1.0, 1e-15);
    EXPECT_NEAR(cosine_similarity(a, -a).value, -1.0, 1e-15);

    CounterRng rng{31};
    const Batch v = random_batch(rng, 2, 7);
    const auto r = cosine_similarity(row(v, 0), row(v, 1));
    const Eigen::MatrixXd num = numeric_gradient(v, [](const Eigen::MatrixXd& m) {
        return cosine_similarity(m.row(0).transpose(), m.row(1).transpose()).value;
    });
    EXPECT_LE(max_rel_error(r.grad_v1, num.row(0).transpose()), 1e-7);
    EXPECT_LE(max_rel_error(r.grad_v2, num.row(1).transpose()), 1e-7);
}

TEST(Cosine, ZeroVectorThrows) {
    const Eigen::VectorXd z = Eigen::VectorXd::Zero(3), o = Eigen::VectorXd::Ones(3);
    EXPECT_EQ(code_of([&] { cosine_similarity(z, o); }), ErrorCode::DegenerateVector);
}

TEST(GeometryLoss, IdenticalPullAndInactiveHingeGivesMinusOne) {
    Batch g(1, 2), gp(1, 2);
    g << 1, 0;
    gp << 0, 1;  // Phi(g, g') = 0, so the hinge is inactive for alpha_g phi_g >= 0
    const std::vector<double> phi{0.1};
    const auto r = geometry_loss(g, g, gp, phi, 9.4);
    EXPECT_NEAR(r.value, -1.0, 1e-15);
    EXPECT_EQ(r.active_hinges, 0u);
    EXPECT_TRUE(r.d_g_prime.isZero(0.0));
}

TEST(GeometryLoss, ActiveHingeAddsMargin) {
    Batch g(1, 2), gh(1, 2);
    g << 1, 0;
    gh << 0, 1;
    const std::vector<double> phi{0.05};
    // Phi(g, g') = 1 and alpha_g phi_g = 0.47.
    const auto r = geometry_loss(g, gh, g, phi, 9.4);
    EXPECT_NEAR(r.value, 0.0 + (1.0 - 0.47), 1e-12);
    EXPECT_EQ(r.active_hinges, 1u);
}

TEST(GeometryLoss, GradientMatchesFiniteDifferences) {
    CounterRng rng{32};
    const Eigen::Index n = 3, d = 5;
    Eigen::MatrixXd all(3 * n, d);
    all << random_batch(rng, n, d), random_batch(rng, n, d), random_batch(rng, n, d);
    // Small phi_g keeps some hinges active and away from their kink.
    const std::vector<double> phi{0.0, 0.01, 0.2};
    auto eval = [&](const Eigen::MatrixXd& m) {
        return geometry_loss(m.topRows(n), m.middleRows(n, n), m.bottomRows(n), phi, 1.0);
    };
    const auto r = eval(all);
    Eigen::MatrixXd analytic(3 * n, d);
    analytic << r.d_g_i, r.d_g_hat, r.d_g_prime;
    const Eigen::MatrixXd num = numeric_gradient(all, [&](const Eigen::MatrixXd& m) { return eval(m).value; });
    EXPECT_LE(max_rel_error(analytic, num), 1e-6);
}

TEST(GeometryLoss, RejectsNegativePhiAndShapeMismatch) {
    const Batch g = Batch::Ones(2, 3);
    const std::vector<double> bad{0.1, -0.1}, short_phi{0.1};
    EXPECT_EQ(code_of([&] { geometry_loss(g, g, g, bad, 1.0); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { geometry_loss(g, g, g, short_phi, 1.0); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { geometry_loss(g, Batch::Ones(2, 4), g, bad, 1.0); }), ErrorCode::InvalidArgument);
}

TEST(AppearanceLoss, ExtremesAndGradient) {
    Batch a(1, 3);
    a << 1, 2, 3;
    EXPECT_NEAR(appearance_loss(a, a).value, -1.0, 1e-15);
    EXPECT_NEAR(appearance_loss(a, -a).value, 1.0, 1e-15);

    CounterRng rng{33};
    const Eigen::Index n = 4, d = 6;
    Eigen::MatrixXd all(2 * n, d);
    all << random_batch(rng, n, d), random_batch(rng, n, d);
    auto eval = [&](const Eigen::MatrixXd& m) { return appearance_loss(m.topRows(n), m.bottomRows(n)); };
    const auto r = eval(all);
    Eigen::MatrixXd analytic(2 * n, d);
    analytic << r.d_a_prime, r.d_a_hat;
    const Eigen::MatrixXd num = numeric_gradient(all, [&](const Eigen::MatrixXd& m) { return eval(m).value; });
    EXPECT_LE(max_rel_error(analytic, num), 1e-7);
}

TEST(Chebyshev, MatchesCosineOfMultipleAngle) {
    for (int m = 0; m <= 6; ++m) {
        for (double t = 0.0; t <= 3.14; t += 0.13) {
            EXPECT_NEAR(chebyshev_t(m, std::cos(t)), std::cos(m * t), 1e-12);
            const double h = 1e-6, c = std::cos(t);
            const double fd = (chebyshev_t(m, c + h) - chebyshev_t(m, c - h)) / (2 * h);
            EXPECT_NEAR(chebyshev_t_derivative(m, c), fd, 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(IdentificationLoss, TwoClassClosedForm) {
    Batch z(1, 2);
    z << 1, 0;
    const Eigen::MatrixXd w = Eigen::MatrixXd::Identity(2, 2);
    LossConfig cfg;
    cfg.scale_mode = ScaleMode::Fixed;
    cfg.s = 10.0;
    const std::vector<int> label{0};
    const auto r = identification_loss(z, label, w, cfg);
    EXPECT_NEAR(r.value, std::log1p(std::exp(-10.0)), 1e-12);
    EXPECT_EQ(r.correct, 1u);
}

TEST(IdentificationLoss, SoftmaxPresetMatchesPlainSoftmaxOfCosineLogits) {
    CounterRng rng{34};
    const Eigen::Index n = 5, d = 4, c = 6;
    const Batch z = random_batch(rng, n, d);
    const Eigen::MatrixXd w = random_batch(rng, c, d);
    std::vector<int> labels;
    for (Eigen::Index i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.index(c)));
    double want = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        // |z| cos(theta_j) = z . w_j / |w_j|
        Eigen::VectorXd logits(c);
        for (Eigen::Index j = 0; j < c; ++j) logits(j) = z.row(i).dot(w.row(j)) / w.row(j).norm();
        const double mx = logits.maxCoeff();
        const double lse = mx + std::log((logits.array() - mx).exp().sum());
        want += lse - logits(labels[static_cast<std::size_t>(i)]);
    }
    want /= static_cast<double>(n);
    EXPECT_NEAR(identification_loss(z, labels, w, LossConfig::softmax()).value, want, 1e-10);
}

TEST(IdentificationLoss, GradientsMatchFiniteDifferencesForEachPreset) {
    for (const char* name : {"softmax", "sphereface", "cosface"}) {
        CounterRng rng{35};
        const Eigen::Index n = 3, d = 4, c = 5;
        LossConfig cfg = LossConfig::preset(name);
        if (cfg.scale_mode == ScaleMode::Fixed) cfg.s = 4.0;  // keeps the check away from saturation
        Eigen::MatrixXd zw(n + c, d);
        zw << random_batch(rng, n, d), random_batch(rng, c, d);
        const std::vector<int> labels{0, 3, 4};
        auto eval = [&](const Eigen::MatrixXd& m) {
            return identification_loss(m.topRows(n), labels, m.bottomRows(c), cfg);
        };
        const auto r = eval(zw);
        Eigen::MatrixXd analytic(n + c, d);
        analytic << r.d_z, r.d_weights;
        const Eigen::MatrixXd num = numeric_gradient(zw, [&](const Eigen::MatrixXd& m) { return eval(m).value; });
        EXPECT_LE(max_rel_error(analytic, num), 1e-6) << name;
    }
}

TEST(IdentificationLoss, RejectsBadLabels) {
    const Batch z = Batch::Ones(1, 2);
    const Eigen::MatrixXd w = Eigen::MatrixXd::Identity(2, 2);
    const std::vector<int> bad{2};
    EXPECT_EQ(code_of([&] { identification_loss(z, bad, w, LossConfig::softmax()); }), ErrorCode::InvalidArgument);
}

namespace {

struct TotalFixture {
    EmbeddingBatch in, nb, wp;
    std::vector<int> li{0, 1}, ln{2, 0};
    std::vector<double> phi{0.02, 0.3};
    Eigen::MatrixXd w;

    explicit TotalFixture(std::uint64_t seed) {
        CounterRng rng{seed};
        for (auto* e : {&in, &nb, &wp}) {
            e->appearance = random_batch(rng, 2, 3);
            e->geometry = random_batch(rng, 2, 3);
            e->combined = random_batch(rng, 2, 4);
        }
        w = random_batch(rng, 3, 4);
    }

    TotalLossResult eval(const LossConfig& cfg) const { return total_loss(in, nb, wp, li, ln, phi, w, cfg); }
};

}  // namespace

TEST(TotalLoss, IsTheWeightedSumOfItsParts) {
    const TotalFixture f(36);
    const LossConfig cfg = LossConfig::softmax();
    const auto r = f.eval(cfg);
    const double id_i = identification_loss(f.in.combined, f.li, f.w, cfg).value;
    const double id_n = identification_loss(f.nb.combined, f.ln, f.w, cfg).value;
    const double la = appearance_loss(f.nb.appearance, f.wp.appearance).value;
    const double lg = geometry_loss(f.in.geometry, f.wp.geometry, f.nb.geometry, f.phi, cfg.alpha_g).value;
    EXPECT_NEAR(r.id_input, id_i, 1e-14);
    EXPECT_NEAR(r.id_neighbor, id_n, 1e-14);
    EXPECT_NEAR(r.appearance, la, 1e-14);
    EXPECT_NEAR(r.geometry, lg, 1e-14);
    EXPECT_NEAR(r.value, 0.5 * (id_i + id_n) + 1.3 * la + 0.75 * lg, 1e-12);
    EXPECT_TRUE(r.d_warped.combined.isZero(0.0));
}

TEST(TotalLoss, ZeroWeightsReduceToIdentification) {
    const TotalFixture f(37);
    LossConfig cfg = LossConfig::softmax();
    cfg.lambda_a = cfg.lambda_g = 0.0;
    const auto r = f.eval(cfg);
    EXPECT_NEAR(r.value, r.id_mean, 1e-12);
    EXPECT_TRUE(r.d_warped.appearance.isZero(0.0));
    EXPECT_TRUE(r.d_warped.geometry.isZero(0.0));
}

TEST(TotalLoss, LinearInTheLossWeights) {
    const TotalFixture f(38);
    LossConfig a = LossConfig::softmax(), b = a;
    b.lambda_a *= 2;
    b.lambda_g *= 2;
    const auto ra = f.eval(a), rb = f.eval(b);
    EXPECT_NEAR(rb.value - ra.value, a.lambda_a * ra.appearance + a.lambda_g * ra.geometry, 1e-12);
}

TEST(LossConfig, PresetsAndValidation) {
    EXPECT_EQ(LossConfig::preset("sphereface").m1, 4);
    EXPECT_EQ(LossConfig::preset("cosface").scale_mode, ScaleMode::Fixed);
    EXPECT_DOUBLE_EQ(LossConfig::preset("cosface").m2, 0.35);
    EXPECT_EQ(LossConfig::preset("softmax").scale_mode, ScaleMode::EmbeddingNorm);
    EXPECT_EQ(code_of([] { LossConfig::preset("arcface"); }), ErrorCode::Config);
    LossConfig c;
    c.m2 = 1.0;
    EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::Config);
    c = LossConfig{};
    c.lambda_g = -1;
    EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::Config);
    c = LossConfig{};
    c.scale_mode = ScaleMode::Fixed;
    c.s = 0;
    EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::Config);
    EXPECT_NO_THROW(LossConfig{}.validate());
}
