#include "eval.hpp"

#include "common.hpp"
#include "parallel.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dag {

const char* representation_name(Representation r) noexcept {
    switch (r) {
        case Representation::Appearance: return "appearance";
        case Representation::Geometry: return "geometry";
        case Representation::Combined: return "combined";
    }
    return "unknown";
}

EmbeddingBatch embed_records(const NetParams& params, std::span<const FaceRecord> records, int threads) {
    const NetConfig& cfg = params.config();
    const auto n = static_cast<Eigen::Index>(records.size());
    EmbeddingBatch out{Batch(n, cfg.d), Batch(n, cfg.d), Batch(n, cfg.d_prime)};
    parallel_for(
        records.size(),
        [&](std::size_t i) {
            const auto c = forward_typed<double>(params.layout(), params.values(), records[i].image);
            const auto row = static_cast<Eigen::Index>(i);
            out.appearance.row(row) = c.appearance.transpose();
            out.geometry.row(row) = c.geometry.transpose();
            out.combined.row(row) = c.combined.transpose();
        },
        threads > 0 ? threads : worker_count());
    return out;
}

const Batch& select(const EmbeddingBatch& e, Representation r) noexcept {
    switch (r) {
        case Representation::Appearance: return e.appearance;
        case Representation::Geometry: return e.geometry;
        case Representation::Combined: break;
    }
    return e.combined;
}

namespace {

Batch normalized_rows(const Batch& m) {
    Batch out = m;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double n = m.row(i).norm();
        if (!(n > 0.0) || !std::isfinite(n))
            throw Error(ErrorCode::DegenerateVector, "cosine similarity of a zero or non-finite embedding");
        out.row(i) /= n;
    }
    return out;
}

}  // namespace

double RocCurve::tar_at(double far_target) const noexcept {
    double best = 0.0;
    for (const auto& p : points)
        if (p.far <= far_target) best = std::max(best, p.tar);
    return best;
}

RocCurve verification_roc(std::span<const double> scores, std::span<const std::uint8_t> genuine) {
    if (scores.size() != genuine.size()) throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
    RocCurve roc;
    for (bool g : genuine) (g ? roc.genuine : roc.impostor) += 1;
    if (roc.genuine == 0 || roc.impostor == 0)
        throw Error(ErrorCode::InsufficientPairs, "ROC needs at least one genuine and one impostor pair");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    // Threshold at each distinct score accepts everything strictly above it.
    std::size_t tp = 0, fp = 0;
    const double ng = static_cast<double>(roc.genuine), ni = static_cast<double>(roc.impostor);
    for (std::size_t k = 0; k < order.size();) {
        const double t = scores[order[k]];
        roc.points.push_back({t, static_cast<double>(fp) / ni, static_cast<double>(tp) / ng});
        while (k < order.size() && scores[order[k]] == t) {
            (genuine[order[k]] ? tp : fp) += 1;
            ++k;
        }
    }
    roc.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});
    return roc;
}

PairSet verification_pairs(std::span<const int> labels, std::size_t impostor_count, std::uint64_t seed) {
    PairSet out;
    std::vector<std::pair<std::size_t, std::size_t>> impostors;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        for (std::size_t j = i + 1; j < labels.size(); ++j) {
            if (labels[i] == labels[j]) {
                out.a.push_back(i);
                out.b.push_back(j);
                out.genuine.push_back(1);
            } else {
                impostors.emplace_back(i, j);
            }
        }
    }
    if (impostor_count > 0 && impostor_count < impostors.size()) {
        CounterRng rng{seed, 0x1a905ull};
        for (std::size_t k = 0; k < impostor_count; ++k)
            std::swap(impostors[k], impostors[k + rng.index(impostors.size() - k)]);
        impostors.resize(impostor_count);
        std::sort(impostors.begin(), impostors.end());
    }
    for (const auto& [i, j] : impostors) {
        out.a.push_back(i);
        out.b.push_back(j);
        out.genuine.push_back(0);
    }
    return out;
}

std::vector<double> pair_scores(const Batch& emb, const PairSet& pairs) {
    const Batch u = normalized_rows(emb);
    std::vector<double> s(pairs.a.size());
    for (std::size_t k = 0; k < s.size(); ++k)
        s[k] = u.row(static_cast<Eigen::Index>(pairs.a[k])).dot(u.row(static_cast<Eigen::Index>(pairs.b[k])));
    return s;
}

namespace {

// Threshold with the best accuracy on the given pairs (accept score > t).
double best_threshold(std::span<const double> scores, std::span<const std::uint8_t> genuine,
                      std::span<const std::size_t> subset) {
    std::vector<std::size_t> order(subset.begin(), subset.end());
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t impostors = 0;
    for (std::size_t k : order) impostors += genuine[k] ? 0 : 1;
    // Start with nothing accepted: every impostor is correct.
    std::size_t correct = impostors, best_correct = impostors;
    double best_t = order.empty() ? 0.0 : scores[order.front()];
    for (std::size_t k = 0; k < order.size();) {
        const double t = scores[order[k]];
        while (k < order.size() && scores[order[k]] == t) {
            if (genuine[order[k]])
                ++correct;
            else
                --correct;
            ++k;
        }
        // Everything down to t is accepted; the threshold sits just below t.
        const double next = k < order.size() ? scores[order[k]] : t - 1.0;
        if (correct > best_correct) {
            best_correct = correct;
            best_t = 0.5 * (t + next);
        }
    }
    return best_t;
}

}  // namespace

double verification_accuracy(std::span<const double> scores, std::span<const std::uint8_t> genuine, int folds,
                             std::uint64_t seed) {
    if (scores.size() != genuine.size()) throw Error(ErrorCode::InvalidArgument, "scores and labels differ in length");
    if (scores.size() < 2) throw Error(ErrorCode::InsufficientPairs, "verification accuracy needs at least two pairs");
    if (folds < 2) throw Error(ErrorCode::InvalidArgument, "verification accuracy needs at least two folds");
    const std::size_t nf = std::min<std::size_t>(static_cast<std::size_t>(folds), scores.size());
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng{seed, 0xf01d5ull};
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t f = 0; f < nf; ++f) {
        std::vector<std::size_t> fit, held;
        for (std::size_t p = 0; p < order.size(); ++p) (p % nf == f ? held : fit).push_back(order[p]);
        const double t = best_threshold(scores, genuine, fit);
        std::size_t correct = 0;
        for (std::size_t k : held) correct += (scores[k] > t) == (genuine[k] != 0) ? 1 : 0;
        sum += static_cast<double>(correct) / static_cast<double>(held.size());
    }
    return sum / static_cast<double>(nf);
}

double rank1_identification(const Batch& gallery, std::span<const int> gallery_labels, const Batch& probes,
                            std::span<const int> probe_labels, bool exclude_self) {
    if (gallery.rows() == 0) throw Error(ErrorCode::InvalidArgument, "empty gallery");
    if (static_cast<std::size_t>(gallery.rows()) != gallery_labels.size() ||
        static_cast<std::size_t>(probes.rows()) != probe_labels.size())
        throw Error(ErrorCode::InvalidArgument, "embedding and label counts differ");
    if (probes.rows() == 0) throw Error(ErrorCode::InvalidArgument, "no probes");
    const Batch g = normalized_rows(gallery), p = normalized_rows(probes);
    const Eigen::MatrixXd sim = p * g.transpose();
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
        Eigen::Index best = -1;
        for (Eigen::Index j = 0; j < sim.cols(); ++j) {
            if (exclude_self && i == j) continue;
            if (best < 0 || sim(i, j) > sim(i, best)) best = j;
        }
        if (best >= 0 && gallery_labels[static_cast<std::size_t>(best)] == probe_labels[static_cast<std::size_t>(i)])
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(sim.rows());
}

GallerySplit first_occurrence_gallery(std::span<const int> labels) {
    GallerySplit s;
    std::vector<int> seen;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (std::find(seen.begin(), seen.end(), labels[i]) == seen.end()) {
            seen.push_back(labels[i]);
            s.gallery.push_back(i);
        } else {
            s.probes.push_back(i);
        }
    }
    return s;
}

Batch gather_rows(const Batch& m, std::span<const std::size_t> rows) {
    Batch out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

double ProbeReport::mean_test() const noexcept {
    return r2_test.empty() ? 0.0 : std::accumulate(r2_test.begin(), r2_test.end(), 0.0) / static_cast<double>(r2_test.size());
}

double ProbeReport::mean_train() const noexcept {
    return r2_train.empty() ? 0.0
                            : std::accumulate(r2_train.begin(), r2_train.end(), 0.0) / static_cast<double>(r2_train.size());
}

namespace {

double r_squared(const Eigen::VectorXd& y, const Eigen::VectorXd& pred) {
    const double sst = (y.array() - y.mean()).square().sum();
    const double sse = (y - pred).squaredNorm();
    if (!(sst > 0.0)) return sse == 0.0 ? 1.0 : 0.0;
    return 1.0 - sse / sst;
}

Eigen::MatrixXd with_intercept(const Batch& x) {
    Eigen::MatrixXd d(x.rows(), x.cols() + 1);
    d.col(0).setOnes();
    d.rightCols(x.cols()) = x;
    return d;
}

}  // namespace

ProbeReport disentanglement_probe(const Batch& x, const Eigen::MatrixXd& y, int folds, std::uint64_t seed) {
    if (x.rows() != y.rows()) throw Error(ErrorCode::InvalidArgument, "probe inputs and targets differ in rows");
    if (folds < 2 || x.rows() < folds) throw Error(ErrorCode::InvalidArgument, "probe needs >= 2 folds and a row per fold");
    const std::size_t n = static_cast<std::size_t>(x.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng{seed, 0x960beull};
    rng.shuffle(order);
    const Eigen::MatrixXd design = with_intercept(x);

    ProbeReport rep;
    rep.r2_test.assign(static_cast<std::size_t>(y.cols()), 0.0);
    rep.r2_train.assign(static_cast<std::size_t>(y.cols()), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> fit, held;
        for (std::size_t p = 0; p < n; ++p) (static_cast<int>(p % static_cast<std::size_t>(folds)) == f ? held : fit).push_back(order[p]);
        const Eigen::MatrixXd xf = gather_rows(design, fit), xh = gather_rows(design, held);
        const Eigen::MatrixXd yf = gather_rows(y, fit), yh = gather_rows(y, held);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xf);
        Eigen::MatrixXd beta;
        if (qr.rank() == xf.cols()) {
            beta = qr.solve(yf);
        } else {
            rep.ridge_fallback = true;
            const Eigen::MatrixXd gram =
                xf.transpose() * xf + 1e-6 * Eigen::MatrixXd::Identity(xf.cols(), xf.cols());
            beta = gram.ldlt().solve(xf.transpose() * yf);
        }
        const Eigen::MatrixXd pf = xf * beta, ph = xh * beta;
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
            rep.r2_test[static_cast<std::size_t>(c)] += r_squared(yh.col(c), ph.col(c)) / folds;
            rep.r2_train[static_cast<std::size_t>(c)] += r_squared(yf.col(c), pf.col(c)) / folds;
        }
    }
    return rep;
}

std::vector<std::vector<Neighbor>> nearest_neighbors(const Batch& probes, const Batch& gallery, int k,
                                                     bool* truncated) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    if (gallery.rows() == 0) throw Error(ErrorCode::InvalidArgument, "empty gallery");
    const std::size_t m = static_cast<std::size_t>(gallery.rows());
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), m);
    if (truncated) *truncated = kk < static_cast<std::size_t>(k);
    const Eigen::MatrixXd sim = normalized_rows(probes) * normalized_rows(gallery).transpose();
    std::vector<std::vector<Neighbor>> out(static_cast<std::size_t>(probes.rows()));
    std::vector<std::size_t> idx(m);
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(kk), idx.end(),
                          [&](std::size_t a, std::size_t b) {
                              const double sa = sim(i, static_cast<Eigen::Index>(a));
                              const double sb = sim(i, static_cast<Eigen::Index>(b));
                              return sa > sb || (sa == sb && a < b);
                          });
        auto& row = out[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < kk; ++j) row.push_back({idx[j], sim(i, static_cast<Eigen::Index>(idx[j]))});
    }
    return out;
}

namespace {

bool single_class(const Eigen::VectorXi& y) { return y.size() == 0 || y.minCoeff() == y.maxCoeff(); }

double probe_one(const Eigen::MatrixXd& xtr, const Eigen::VectorXi& ytr, const Eigen::MatrixXd& xte,
                 const Eigen::VectorXi& yte, const AttributeProbeConfig& cfg, std::uint64_t stream) {
    const Eigen::Index dim = xtr.cols();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2, dim);
    std::vector<std::size_t> order(static_cast<std::size_t>(xtr.rows()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.decay_interval_epochs);
        CounterRng rng{cfg.seed, stream, static_cast<std::uint64_t>(epoch)};
        rng.shuffle(order);
        for (std::size_t i : order) {
            const auto row = static_cast<Eigen::Index>(i);
            const Eigen::Vector2d logit = w * xtr.row(row).transpose();
            const double mx = logit.maxCoeff();
            Eigen::Vector2d p = (logit.array() - mx).exp();
            p /= p.sum();
            p(ytr(row)) -= 1.0;
            w.noalias() -= lr * p * xtr.row(row);
        }
    }
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < xte.rows(); ++i) {
        const Eigen::Vector2d logit = w * xte.row(i).transpose();
        const int pred = logit(1) > logit(0) ? 1 : 0;
        correct += pred == yte(i) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(xte.rows());
}

}  // namespace

AttributeProbeReport attribute_probe(const Batch& train_x, const Eigen::MatrixXi& train_y, const Batch& test_x,
                                     const Eigen::MatrixXi& test_y, const AttributeProbeConfig& cfg) {
    if (train_x.rows() != train_y.rows() || test_x.rows() != test_y.rows() || train_y.cols() != test_y.cols() ||
        train_x.cols() != test_x.cols())
        throw Error(ErrorCode::InvalidArgument, "attribute probe shapes disagree");
    if (train_x.rows() == 0 || test_x.rows() == 0) throw Error(ErrorCode::InvalidArgument, "attribute probe needs data");
    if (cfg.epochs < 0 || cfg.decay_interval_epochs < 1 || !(cfg.lr >= 0.0))
        throw Error(ErrorCode::Config, "invalid attribute probe schedule");

    // Standardize with training statistics and append a bias column.
    const Eigen::RowVectorXd mean = train_x.colwise().mean();
    Eigen::RowVectorXd sd = ((train_x.rowwise() - mean).array().square().colwise().sum() /
                             static_cast<double>(train_x.rows()))
                                .sqrt()
                                .matrix();
    for (Eigen::Index c = 0; c < sd.size(); ++c)
        if (!(sd(c) > 1e-12)) sd(c) = 1.0;
    auto prep = [&](const Batch& x) {
        Eigen::MatrixXd out(x.rows(), x.cols() + 1);
        out.leftCols(x.cols()) = (x.rowwise() - mean).array().rowwise() / sd.array();
        out.col(x.cols()).setOnes();
        return out;
    };
    const Eigen::MatrixXd xtr = prep(train_x), xte = prep(test_x);

    AttributeProbeReport rep;
    double sum = 0.0;
    int used = 0;
    for (Eigen::Index a = 0; a < train_y.cols(); ++a) {
        const Eigen::VectorXi ytr = train_y.col(a), yte = test_y.col(a);
        if ((ytr.array() < 0).any() || (ytr.array() > 1).any() || (yte.array() < 0).any() || (yte.array() > 1).any())
            throw Error(ErrorCode::InvalidArgument, "attribute labels must be 0 or 1");
        if (single_class(ytr) || single_class(yte)) {
            rep.accuracy.push_back(std::numeric_limits<double>::quiet_NaN());
            rep.skipped.push_back(true);
            continue;
        }
        const double acc = probe_one(xtr, ytr, xte, yte, cfg, 0xa77ull + static_cast<std::uint64_t>(a));
        rep.accuracy.push_back(acc);
        rep.skipped.push_back(false);
        sum += acc;
        ++used;
    }
    rep.mean = used > 0 ? sum / used : std::numeric_limits<double>::quiet_NaN();
    return rep;
}

PermutationBaseline attribute_permutation_baseline(const Batch& train_x, const Eigen::MatrixXi& train_y,
                                                   const Batch& test_x, const Eigen::MatrixXi& test_y,
                                                   const AttributeProbeConfig& cfg, int permutations) {
    if (permutations < 2) throw Error(ErrorCode::InvalidArgument, "permutation baseline needs >= 2 permutations");
    PermutationBaseline out;
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(train_y.rows()));
    for (int p = 0; p < permutations; ++p) {
        std::iota(perm.begin(), perm.end(), Eigen::Index{0});
        CounterRng rng{cfg.seed, 0x9e7ull, static_cast<std::uint64_t>(p)};
        rng.shuffle(perm);
        Eigen::MatrixXi shuffled(train_y.rows(), train_y.cols());
        for (std::size_t i = 0; i < perm.size(); ++i) shuffled.row(static_cast<Eigen::Index>(i)) = train_y.row(perm[i]);
        AttributeProbeConfig c = cfg;
        c.seed = mix_key({cfg.seed, static_cast<std::uint64_t>(p)});
        out.samples.push_back(attribute_probe(train_x, shuffled, test_x, test_y, c).mean);
    }
    const double n = static_cast<double>(out.samples.size());
    out.mean = std::accumulate(out.samples.begin(), out.samples.end(), 0.0) / n;
    double var = 0.0;
    for (double s : out.samples) var += (s - out.mean) * (s - out.mean);
    out.stddev = std::sqrt(var / (n - 1.0));
    return out;
}

}  // namespace dag
