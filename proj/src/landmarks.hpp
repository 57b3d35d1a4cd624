#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace dag {

struct Point2 {
    double u = 0.0;
    double v = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

// K ordered 2-D landmarks in pixel coordinates. Landmark j means the same
// facial point in every set. The vectorized form is (u_1, v_1, ..., u_K, v_K).
class LandmarkSet {
public:
    LandmarkSet() = default;
    explicit LandmarkSet(std::vector<Point2> points);
    static LandmarkSet from_flat(std::span<const double> uv);

    std::size_t size() const noexcept { return points_.size(); }
    const Point2& operator[](std::size_t j) const noexcept { return points_[j]; }
    std::span<const Point2> points() const noexcept { return points_; }
    std::vector<double> flat() const;
    Point2 centroid() const noexcept;

    friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;

private:
    std::vector<Point2> points_;
};

double linf_distance(const LandmarkSet& a, const LandmarkSet& b);
double l2_distance(const LandmarkSet& a, const LandmarkSet& b);

// p' = scale * R(rotation) * p + (tu, tv)
struct Similarity {
    double scale = 1.0;
    double rotation = 0.0;  // radians
    double tu = 0.0;
    double tv = 0.0;

    Point2 apply(Point2 p) const noexcept;
    LandmarkSet apply(const LandmarkSet& ls) const;
    Similarity inverse() const noexcept;
    bool is_identity(double tol) const noexcept;
};

// Least-squares similarity taking `from` onto `to` (orthogonal Procrustes with
// isotropic scale). Throws AlignmentDegenerate when `from` has no spread.
Similarity fit_similarity(const LandmarkSet& from, const LandmarkSet& to);

struct CanonicalFrame {
    LandmarkSet reference;
    int width = 0;
    int height = 0;

    Point2 center() const noexcept { return {0.5 * width, 0.5 * height}; }
};

// Mean shape by generalized Procrustes, re-centred on the frame centre.
CanonicalFrame build_canonical_frame(std::span<const LandmarkSet> shapes, int width, int height,
                                     int iterations = 5);

struct Alignment {
    LandmarkSet aligned;
    Similarity transform;  // maps input coordinates to frame coordinates
};

Alignment align_landmarks(const LandmarkSet& ls, const CanonicalFrame& frame);

// ||a - b||_2 / ||a - centroid(a)||_2 over the vectorized coordinates.
double landmark_disparity(const LandmarkSet& a, const LandmarkSet& b);

struct NeighborEntry {
    std::int64_t record_id = 0;
    int identity = 0;
    LandmarkSet landmarks;
};

class NeighborIndex {
public:
    explicit NeighborIndex(std::vector<NeighborEntry> entries, double epsilon = 1e-6);

    std::span<const NeighborEntry> entries() const noexcept { return entries_; }
    double epsilon() const noexcept { return epsilon_; }
    // Position of record_id in entries(); throws InvalidArgument when absent.
    std::size_t position(std::int64_t record_id) const;

private:
    std::vector<NeighborEntry> entries_;
    double epsilon_;
};

// ||l_i - l_j||_inf / (delta(y_i - y_j) + eps) for one candidate.
double neighbor_objective(const NeighborEntry& query, const NeighborEntry& candidate, double epsilon);

// Cross-identity geometric neighbour of `query`. Same-identity entries are
// excluded outright; ties go to the lowest record id. When `pool` is given
// only those entry positions are candidates.
std::int64_t select_geometric_neighbor(std::int64_t query, const NeighborIndex& index,
                                       std::optional<std::span<const std::size_t>> pool = std::nullopt);

// Landmark file: "#K=<int>" header then "record_id,identity,u_1,v_1,...".
struct LandmarkRow {
    std::int64_t record_id = 0;
    int identity = 0;
    LandmarkSet landmarks;
};

void write_landmark_file(const std::filesystem::path& path, std::span<const LandmarkRow> rows);
std::vector<LandmarkRow> read_landmark_file(const std::filesystem::path& path);

}  // namespace dag
