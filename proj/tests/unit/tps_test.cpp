#include "tps.hpp"

#include "common.hpp"
#include "synthetic.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace dag;
using dag::testing::random_landmarks;

namespace {

double kernel(double du, double dv) {
    const double r2 = du * du + dv * dv;
    return r2 > 0 ? r2 * std::log(r2) : 0.0;
}

// Gaussian elimination with partial pivoting on the bordered system; returns
// [w_1..w_K, a_0, a_u, a_v] for each output coordinate as columns.
Eigen::MatrixXd oracle_solve(const LandmarkSet& src, const LandmarkSet& dst) {
    const std::size_t k = src.size(), n = k + 3;
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 2, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) a[i][j] = kernel(src[i].u - src[j].u, src[i].v - src[j].v);
        a[i][k] = a[k][i] = 1;
        a[i][k + 1] = a[k + 1][i] = src[i].u;
        a[i][k + 2] = a[k + 2][i] = src[i].v;
        a[i][n] = dst[i].u;
        a[i][n + 1] = dst[i].v;
    }
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r][c] / a[c][c];
            for (std::size_t j = c; j < n + 2; ++j) a[r][j] -= f * a[c][j];
        }
    }
    Eigen::MatrixXd x(n, 2);
    for (int col = 0; col < 2; ++col) {
        for (std::size_t r = n; r-- > 0;) {
            double s = a[r][n + static_cast<std::size_t>(col)];
            for (std::size_t j = r + 1; j < n; ++j) s -= a[r][j] * x(static_cast<Eigen::Index>(j), col);
            x(static_cast<Eigen::Index>(r), col) = s / a[r][r];
        }
    }
    return x;
}

Point2 oracle_eval(const LandmarkSet& src, const Eigen::MatrixXd& x, Point2 p) {
    const auto k = static_cast<Eigen::Index>(src.size());
    Point2 out{x(k, 0) + x(k + 1, 0) * p.u + x(k + 2, 0) * p.v, x(k, 1) + x(k + 1, 1) * p.u + x(k + 2, 1) * p.v};
    for (Eigen::Index i = 0; i < k; ++i) {
        const double u = kernel(p.u - src[i].u, p.v - src[i].v);
        out.u += x(i, 0) * u;
        out.v += x(i, 1) * u;
    }
    return out;
}

double snap_oracle(double x) {
    const double r = std::round(x);
    return std::abs(x - r) <= kPixelSnap ? r : x;
}

LandmarkSet jitter(CounterRng& rng, const LandmarkSet& ls, double amount) {
    std::vector<Point2> p;
    for (const auto& q : ls.points()) p.push_back({q.u + rng.uniform(-amount, amount), q.v + rng.uniform(-amount, amount)});
    return LandmarkSet(std::move(p));
}

}  // namespace

TEST(FitTps, IdentityGivesIdentityAffineAndZeroWarp) {
    CounterRng rng{21};
    const LandmarkSet s = random_landmarks(rng, 10);
    const TpsTransform t = fit_tps(s, s);
    EXPECT_NEAR(t.affine()[0][0], 0, 1e-10);
    EXPECT_NEAR(t.affine()[0][1], 1, 1e-10);
    EXPECT_NEAR(t.affine()[0][2], 0, 1e-10);
    EXPECT_NEAR(t.affine()[1][0], 0, 1e-10);
    EXPECT_NEAR(t.affine()[1][1], 0, 1e-10);
    EXPECT_NEAR(t.affine()[1][2], 1, 1e-10);
    for (const auto& w : t.warp()) {
        EXPECT_NEAR(w[0], 0, 1e-10);
        EXPECT_NEAR(w[1], 0, 1e-10);
    }
    const Point2 p = t({3.3, 17.1});
    EXPECT_NEAR(p.u, 3.3, 1e-10);
    EXPECT_NEAR(p.v, 17.1, 1e-10);
}

TEST(FitTps, ThreePointsGiveThePureAffineMap) {
    const LandmarkSet s({{0, 0}, {4, 0}, {0, 3}});
    const LandmarkSet d({{1, 1}, {9, 2}, {0, 7}});
    const TpsTransform t = fit_tps(s, d);
    for (const auto& w : t.warp()) {
        EXPECT_NEAR(w[0], 0, 1e-12);
        EXPECT_NEAR(w[1], 0, 1e-12);
    }
    // u' = 1 + 2u - v/3, v' = 1 + u/4 + 2v.
    EXPECT_NEAR(t.affine()[0][0], 1.0, 1e-12);
    EXPECT_NEAR(t.affine()[0][1], 2.0, 1e-12);
    EXPECT_NEAR(t.affine()[0][2], -1.0 / 3.0, 1e-12);
    EXPECT_NEAR(t.affine()[1][0], 1.0, 1e-12);
    EXPECT_NEAR(t.affine()[1][1], 0.25, 1e-12);
    EXPECT_NEAR(t.affine()[1][2], 2.0, 1e-12);
}

TEST(FitTps, MatchesEliminationOracle) {
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        CounterRng rng{22, trial};
        const LandmarkSet s = random_landmarks(rng, 5);
        const LandmarkSet d = jitter(rng, s, 3.0);
        const TpsTransform t = fit_tps(s, d);
        const Eigen::MatrixXd x = oracle_solve(s, d);
        for (std::size_t k = 0; k < 5; ++k) {
            EXPECT_NEAR(t.warp()[k][0], x(static_cast<Eigen::Index>(k), 0), 1e-9);
            EXPECT_NEAR(t.warp()[k][1], x(static_cast<Eigen::Index>(k), 1), 1e-9);
        }
        for (int c = 0; c < 2; ++c)
            for (int j = 0; j < 3; ++j) EXPECT_NEAR(t.affine()[c][j], x(5 + j, c), 1e-9);
    }
}

TEST(FitTps, InterpolatesAndSatisfiesSideConditions) {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        CounterRng rng{23, trial};
        const LandmarkSet s = random_landmarks(rng, 3 + rng.index(66));
        const LandmarkSet d = jitter(rng, s, 2.0);
        const TpsTransform t = fit_tps(s, d);
        for (std::size_t k = 0; k < s.size(); ++k) {
            EXPECT_NEAR(t(s[k]).u, d[k].u, 1e-8);
            EXPECT_NEAR(t(s[k]).v, d[k].v, 1e-8);
        }
        EXPECT_LE(t.side_condition_residual(), 1e-8);
    }
}

TEST(EvalTps, MidpointMatchesOracle) {
    CounterRng rng{24};
    const LandmarkSet s = random_landmarks(rng, 4);
    const LandmarkSet d = jitter(rng, s, 3.0);
    const Point2 mid{(s[0].u + s[1].u) / 2, (s[0].v + s[1].v) / 2};
    const Point2 want = oracle_eval(s, oracle_solve(s, d), mid);
    const Point2 got = eval_tps(fit_tps(s, d), mid);
    EXPECT_NEAR(got.u, want.u, 1e-9);
    EXPECT_NEAR(got.v, want.v, 1e-9);
}

TEST(FitTps, CollinearOrDuplicatedPointsThrow) {
    const LandmarkSet line({{0, 0}, {1, 1}, {2, 2}, {3, 3}});
    const LandmarkSet dup({{0, 0}, {0, 0}, {5, 1}, {2, 6}});
    for (const auto* s : {&line, &dup}) {
        try {
            fit_tps(*s, *s);
            FAIL() << "expected SingularConfiguration";
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::SingularConfiguration);
        }
    }
}

TEST(WarpImage, IdentityIsBitExact) {
    CounterRng rng{25};
    ImageBuffer img(16, 16, 1);
    for (double& p : img.data()) p = rng.uniform(-1, 1);
    const LandmarkSet s = random_landmarks(rng, 8, 2, 14);
    EXPECT_EQ(warp_image(img, s, s), img);
}

TEST(WarpImage, IntegerTranslationShiftsWithEdgeClamp) {
    CounterRng rng{26};
    ImageBuffer img(16, 16, 1);
    for (double& p : img.data()) p = rng.uniform(-1, 1);
    const LandmarkSet s = random_landmarks(rng, 8, 2, 14);
    std::vector<Point2> shifted;
    for (const auto& p : s.points()) shifted.push_back({p.u + 3, p.v});
    const ImageBuffer out = warp_image(img, LandmarkSet(shifted), s);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) ASSERT_EQ(out.at(c, r), img.at(std::max(c - 3, 0), r)) << c << "," << r;
}

TEST(WarpImage, CheckerboardMatchesPerPixelOracle) {
    ImageBuffer board(8, 8, 1);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) board.at(c, r) = (r + c) % 2 ? 1.0 : -1.0;
    const LandmarkSet src({{1, 1}, {7, 1}, {1, 7}, {7, 7}});
    const LandmarkSet dst({{2, 2}, {6, 2}, {2, 6}, {6, 6}});
    const ImageBuffer out = warp_image(board, dst, src);
    const Eigen::MatrixXd inv = oracle_solve(dst, src);
    for (int r = 0; r < 8; ++r) {
        for (int c = 0; c < 8; ++c) {
            const Point2 q = oracle_eval(dst, inv, {c + 0.5, r + 0.5});
            const double x = std::clamp(snap_oracle(q.u - 0.5), 0.0, 7.0);
            const double y = std::clamp(snap_oracle(q.v - 0.5), 0.0, 7.0);
            const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
            const int x1 = std::min(x0 + 1, 7), y1 = std::min(y0 + 1, 7);
            const double fx = x - x0, fy = y - y0;
            const double want = (1 - fy) * ((1 - fx) * board.at(x0, y0) + fx * board.at(x1, y0)) +
                                fy * ((1 - fx) * board.at(x0, y1) + fx * board.at(x1, y1));
            EXPECT_NEAR(out.at(c, r), want, 1e-10);
        }
    }
}

namespace {

struct PairFixture {
    CanonicalFrame frame;
    FaceRecord a, b;
};

PairFixture aligned_pair(std::uint64_t seed) {
    const IdentitySpec s1 = sample_identity(seed, 1), s2 = sample_identity(seed, 2);
    FaceRecord a = render_face(s1, seed * 7 + 1, 0.0), b = render_face(s2, seed * 7 + 2, 0.0);
    a.record_id = 0;
    b.record_id = 1;
    const std::vector<LandmarkSet> shapes = {a.landmarks, b.landmarks};
    PairFixture f;
    f.frame = build_canonical_frame(shapes, 32, 32);
    f.a = align_record(a, f.frame);
    f.b = align_record(b, f.frame);
    return f;
}

}  // namespace

TEST(MakeIdenticalFace, SameRecordReturnsInput) {
    const PairFixture f = aligned_pair(3);
    const FaceRecord out = make_identical_face(f.a, f.a, f.frame);
    EXPECT_EQ(out.image, f.a.image);
}

TEST(MakeIdenticalFace, CarriesGeometryAndProvenance) {
    double moved = 0.0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const PairFixture f = aligned_pair(seed);
        const FaceRecord out = make_identical_face(f.a, f.b, f.frame);
        EXPECT_LE(linf_distance(out.landmarks, f.a.landmarks), 1e-6);
        EXPECT_EQ(out.identity, f.b.identity);
        ASSERT_TRUE(out.provenance.has_value());
        EXPECT_EQ(out.provenance->input_record, f.a.record_id);
        EXPECT_EQ(out.provenance->neighbor_record, f.b.record_id);
        double diff = 0.0;
        for (std::size_t i = 0; i < out.image.size(); ++i) diff += std::abs(out.image.data()[i] - f.b.image.data()[i]);
        moved += diff / static_cast<double>(out.image.size());
    }
    EXPECT_GT(moved / 50.0, 0.0);
}
