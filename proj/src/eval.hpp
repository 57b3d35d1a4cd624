#pragma once

#include "face_record.hpp"
#include "losses.hpp"
#include "net.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dag {

enum class Representation { Appearance, Geometry, Combined };
inline constexpr std::array<Representation, 3> kRepresentations = {
    Representation::Appearance, Representation::Geometry, Representation::Combined};
const char* representation_name(Representation r) noexcept;

// Embeds every record; row i belongs to records[i].
EmbeddingBatch embed_records(const NetParams& params, std::span<const FaceRecord> records, int threads = 0);
const Batch& select(const EmbeddingBatch& e, Representation r) noexcept;

struct RocPoint {
    double threshold = 0.0;  // accept when score > threshold
    double far = 0.0;
    double tar = 0.0;
};

struct RocCurve {
    // Ordered by decreasing threshold: starts at (0, 0), ends at (1, 1).
    std::vector<RocPoint> points;
    std::size_t genuine = 0;
    std::size_t impostor = 0;

    // Largest TAR among operating points with FAR <= far_target.
    double tar_at(double far_target) const noexcept;
};

// Throws InsufficientPairs when either class is empty.
RocCurve verification_roc(std::span<const double> scores, std::span<const std::uint8_t> genuine);

struct PairSet {
    std::vector<std::size_t> a, b;
    std::vector<std::uint8_t> genuine;  // 1 for same-label pairs
};

// Every same-label pair, plus different-label pairs: all of them when
// impostor_count is 0 or covers them, else a seeded sample of that size.
PairSet verification_pairs(std::span<const int> labels, std::size_t impostor_count, std::uint64_t seed);

std::vector<double> pair_scores(const Batch& emb, const PairSet& pairs);

// Mean held-out accuracy where each fold's threshold maximizes accuracy on
// the remaining folds.
double verification_accuracy(std::span<const double> scores, std::span<const std::uint8_t> genuine, int folds,
                             std::uint64_t seed);

// Probes whose cosine-nearest gallery row has their label; ties to the lowest
// gallery index. exclude_self skips gallery row i for probe i, for
// leave-one-out use with probes == gallery.
double rank1_identification(const Batch& gallery, std::span<const int> gallery_labels, const Batch& probes,
                            std::span<const int> probe_labels, bool exclude_self = false);

// Gallery = first occurrence of each label, probes = the rest.
struct GallerySplit {
    std::vector<std::size_t> gallery;
    std::vector<std::size_t> probes;
};
GallerySplit first_occurrence_gallery(std::span<const int> labels);

Batch gather_rows(const Batch& m, std::span<const std::size_t> rows);

struct ProbeReport {
    std::vector<double> r2_test;   // per target column, mean over held-out folds
    std::vector<double> r2_train;  // same, on the fitting folds
    bool ridge_fallback = false;

    double mean_test() const noexcept;
    double mean_train() const noexcept;
};

// Ordinary least squares with intercept from x to each column of y, k-fold.
ProbeReport disentanglement_probe(const Batch& x, const Eigen::MatrixXd& y, int folds, std::uint64_t seed);

struct Neighbor {
    std::size_t index = 0;
    double similarity = 0.0;
};

// k cosine-nearest gallery rows per probe, most similar first, ties to the
// lower index. k is clamped to the gallery size; `truncated` reports it.
std::vector<std::vector<Neighbor>> nearest_neighbors(const Batch& probes, const Batch& gallery, int k,
                                                     bool* truncated = nullptr);

struct AttributeProbeConfig {
    double lr = 0.01;
    double lr_decay = 0.9;
    int decay_interval_epochs = 4;
    int epochs = 40;
    std::uint64_t seed = 1;
};

struct AttributeProbeReport {
    std::vector<double> accuracy;  // per attribute; NaN when skipped
    std::vector<bool> skipped;     // single-class attribute in either split
    double mean = 0.0;             // over attributes that were not skipped
};

// Per attribute, a two-class softmax layer on standardized features trained
// by per-sample SGD. Labels are rows of 0/1 values, one column per attribute.
AttributeProbeReport attribute_probe(const Batch& train_x, const Eigen::MatrixXi& train_y, const Batch& test_x,
                                     const Eigen::MatrixXi& test_y, const AttributeProbeConfig& cfg);

struct PermutationBaseline {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> samples;
};

// attribute_probe mean accuracy with train labels permuted (rows shuffled jointly).
PermutationBaseline attribute_permutation_baseline(const Batch& train_x, const Eigen::MatrixXi& train_y,
                                                   const Batch& test_x, const Eigen::MatrixXi& test_y,
                                                   const AttributeProbeConfig& cfg, int permutations);

}  // namespace dag
