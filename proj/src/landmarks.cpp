#include "landmarks.hpp"

#include "common.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dag {

LandmarkSet::LandmarkSet(std::vector<Point2> points) : points_(std::move(points)) {
    if (points_.size() < 3)
        throw Error(ErrorCode::InvalidArgument, "a landmark set needs K >= 3 points");
    for (const auto& p : points_)
        if (!std::isfinite(p.u) || !std::isfinite(p.v))
            throw Error(ErrorCode::InvalidArgument, "landmark coordinates must be finite");
}

LandmarkSet LandmarkSet::from_flat(std::span<const double> uv) {
    if (uv.size() % 2 != 0) throw Error(ErrorCode::InvalidArgument, "odd landmark coordinate count");
    std::vector<Point2> pts(uv.size() / 2);
    for (std::size_t j = 0; j < pts.size(); ++j) pts[j] = {uv[2 * j], uv[2 * j + 1]};
    return LandmarkSet(std::move(pts));
}

std::vector<double> LandmarkSet::flat() const {
    std::vector<double> out;
    out.reserve(2 * points_.size());
    for (const auto& p : points_) {
        out.push_back(p.u);
        out.push_back(p.v);
    }
    return out;
}

Point2 LandmarkSet::centroid() const noexcept {
    Point2 c;
    for (const auto& p : points_) {
        c.u += p.u;
        c.v += p.v;
    }
    const double n = static_cast<double>(points_.size());
    return {c.u / n, c.v / n};
}

namespace {

void require_same_k(const LandmarkSet& a, const LandmarkSet& b) {
    if (a.size() != b.size())
        throw Error(ErrorCode::InvalidArgument, "landmark sets differ in K (" + std::to_string(a.size()) +
                                                    " vs " + std::to_string(b.size()) + ")");
}

double centred_sq_norm(const LandmarkSet& ls) {
    const Point2 c = ls.centroid();
    double s = 0.0;
    for (const auto& p : ls.points()) s += (p.u - c.u) * (p.u - c.u) + (p.v - c.v) * (p.v - c.v);
    return s;
}

}  // namespace

double linf_distance(const LandmarkSet& a, const LandmarkSet& b) {
    require_same_k(a, b);
    double m = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        m = std::max(m, std::abs(a[j].u - b[j].u));
        m = std::max(m, std::abs(a[j].v - b[j].v));
    }
    return m;
}

double l2_distance(const LandmarkSet& a, const LandmarkSet& b) {
    require_same_k(a, b);
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double du = a[j].u - b[j].u;
        const double dv = a[j].v - b[j].v;
        s += du * du + dv * dv;
    }
    return std::sqrt(s);
}

Point2 Similarity::apply(Point2 p) const noexcept {
    const double c = scale * std::cos(rotation);
    const double s = scale * std::sin(rotation);
    return {c * p.u - s * p.v + tu, s * p.u + c * p.v + tv};
}

LandmarkSet Similarity::apply(const LandmarkSet& ls) const {
    std::vector<Point2> out;
    out.reserve(ls.size());
    for (const auto& p : ls.points()) out.push_back(apply(p));
    return LandmarkSet(std::move(out));
}

Similarity Similarity::inverse() const noexcept {
    Similarity inv;
    inv.scale = 1.0 / scale;
    inv.rotation = -rotation;
    const double c = inv.scale * std::cos(inv.rotation);
    const double s = inv.scale * std::sin(inv.rotation);
    inv.tu = -(c * tu - s * tv);
    inv.tv = -(s * tu + c * tv);
    return inv;
}

bool Similarity::is_identity(double tol) const noexcept {
    return std::abs(scale - 1.0) <= tol && std::abs(rotation) <= tol && std::abs(tu) <= tol &&
           std::abs(tv) <= tol;
}

Similarity fit_similarity(const LandmarkSet& from, const LandmarkSet& to) {
    require_same_k(from, to);
    const Point2 cf = from.centroid();
    const Point2 ct = to.centroid();
    double sxx = 0.0, dot = 0.0, cross = 0.0;
    for (std::size_t j = 0; j < from.size(); ++j) {
        const double xu = from[j].u - cf.u, xv = from[j].v - cf.v;
        const double yu = to[j].u - ct.u, yv = to[j].v - ct.v;
        sxx += xu * xu + xv * xv;
        dot += xu * yu + xv * yv;
        cross += xu * yv - xv * yu;
    }
    if (!(sxx > 1e-24))
        throw Error(ErrorCode::AlignmentDegenerate, "landmark set has zero spread; alignment undefined");
    const double a = dot / sxx;
    const double b = cross / sxx;
    Similarity t;
    t.scale = std::hypot(a, b);
    if (!(t.scale > 0.0))
        throw Error(ErrorCode::AlignmentDegenerate, "alignment target has zero spread");
    t.rotation = std::atan2(b, a);
    t.tu = ct.u - (a * cf.u - b * cf.v);
    t.tv = ct.v - (b * cf.u + a * cf.v);
    return t;
}

namespace {

LandmarkSet recentre(const LandmarkSet& ls, Point2 centre) {
    const Point2 c = ls.centroid();
    std::vector<Point2> out(ls.points().begin(), ls.points().end());
    for (auto& p : out) {
        p.u = p.u - c.u + centre.u;
        p.v = p.v - c.v + centre.v;
    }
    return LandmarkSet(std::move(out));
}

LandmarkSet rescale_about_centroid(const LandmarkSet& ls, double target_sq_norm) {
    const double cur = centred_sq_norm(ls);
    const double f = std::sqrt(target_sq_norm / cur);
    const Point2 c = ls.centroid();
    std::vector<Point2> out(ls.points().begin(), ls.points().end());
    for (auto& p : out) {
        p.u = c.u + f * (p.u - c.u);
        p.v = c.v + f * (p.v - c.v);
    }
    return LandmarkSet(std::move(out));
}

}  // namespace

CanonicalFrame build_canonical_frame(std::span<const LandmarkSet> shapes, int width, int height,
                                     int iterations) {
    if (shapes.empty()) throw Error(ErrorCode::InvalidArgument, "no shapes to build a reference from");
    if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "frame size must be positive");
    const Point2 centre{0.5 * width, 0.5 * height};
    double mean_size = 0.0;
    for (const auto& s : shapes) {
        require_same_k(s, shapes[0]);
        mean_size += centred_sq_norm(s);
    }
    mean_size /= static_cast<double>(shapes.size());

    LandmarkSet ref = rescale_about_centroid(recentre(shapes[0], centre), mean_size);
    const std::size_t k = ref.size();
    for (int it = 0; it < iterations; ++it) {
        std::vector<Point2> acc(k);
        for (const auto& s : shapes) {
            const LandmarkSet a = fit_similarity(s, ref).apply(s);
            for (std::size_t j = 0; j < k; ++j) {
                acc[j].u += a[j].u;
                acc[j].v += a[j].v;
            }
        }
        for (auto& p : acc) {
            p.u /= static_cast<double>(shapes.size());
            p.v /= static_cast<double>(shapes.size());
        }
        ref = recentre(rescale_about_centroid(LandmarkSet(std::move(acc)), mean_size), centre);
    }
    return CanonicalFrame{recentre(ref, centre), width, height};
}

Alignment align_landmarks(const LandmarkSet& ls, const CanonicalFrame& frame) {
    require_same_k(ls, frame.reference);
    Similarity t = fit_similarity(ls, frame.reference);
    return Alignment{t.apply(ls), t};
}

double landmark_disparity(const LandmarkSet& a, const LandmarkSet& b) {
    require_same_k(a, b);
    const double denom = std::sqrt(centred_sq_norm(a));
    if (!(denom > 0.0))
        throw Error(ErrorCode::DegenerateShape, "landmark disparity undefined: all points coincide");
    return l2_distance(a, b) / denom;
}

NeighborIndex::NeighborIndex(std::vector<NeighborEntry> entries, double epsilon)
    : entries_(std::move(entries)), epsilon_(epsilon) {
    if (!(epsilon_ > 0.0) || !(epsilon_ < 1.0))
        throw Error(ErrorCode::InvalidArgument, "neighbour epsilon must lie in (0, 1)");
    for (const auto& e : entries_) require_same_k(e.landmarks, entries_.front().landmarks);
}

std::size_t NeighborIndex::position(std::int64_t record_id) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
        if (entries_[i].record_id == record_id) return i;
    throw Error(ErrorCode::InvalidArgument, "record " + std::to_string(record_id) + " not in neighbour index");
}

double neighbor_objective(const NeighborEntry& query, const NeighborEntry& candidate, double epsilon) {
    const double delta = (query.identity - candidate.identity) != 0 ? 1.0 : 0.0;
    return linf_distance(query.landmarks, candidate.landmarks) / (delta + epsilon);
}

std::int64_t select_geometric_neighbor(std::int64_t query, const NeighborIndex& index,
                                       std::optional<std::span<const std::size_t>> pool) {
    const auto entries = index.entries();
    const NeighborEntry& q = entries[index.position(query)];
    double best = std::numeric_limits<double>::infinity();
    std::int64_t best_id = 0;
    bool found = false;
    auto consider = [&](const NeighborEntry& c) {
        if (c.record_id == query || c.identity == q.identity) return;
        const double obj = neighbor_objective(q, c, index.epsilon());
        if (!found || obj < best || (obj == best && c.record_id < best_id)) {
            best = obj;
            best_id = c.record_id;
            found = true;
        }
    };
    if (pool) {
        for (std::size_t pos : *pool) {
            if (pos >= entries.size()) throw Error(ErrorCode::InvalidArgument, "pool position out of range");
            consider(entries[pos]);
        }
    } else {
        for (const auto& c : entries) consider(c);
    }
    if (!found)
        throw Error(ErrorCode::NoNeighbor,
                    "no different-identity candidate for record " + std::to_string(query));
    return best_id;
}

void write_landmark_file(const std::filesystem::path& path, std::span<const LandmarkRow> rows) {
    std::string text;
    const std::size_t k = rows.empty() ? 0 : rows.front().landmarks.size();
    text += "#K=" + std::to_string(k) + "\n";
    for (const auto& r : rows) {
        if (r.landmarks.size() != k) throw Error(ErrorCode::InvalidArgument, "mixed K in landmark file");
        text += std::to_string(r.record_id) + "," + std::to_string(r.identity);
        for (const auto& p : r.landmarks.points()) text += "," + format_double(p.u) + "," + format_double(p.v);
        text += "\n";
    }
    write_text(path, text);
}

std::vector<LandmarkRow> read_landmark_file(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines[0].rfind("#K=", 0) != 0)
        throw Error(ErrorCode::InvalidArgument, path.string() + ": missing '#K=<int>' header");
    const auto k = static_cast<std::size_t>(parse_int(std::string_view(lines[0]).substr(3)));
    std::vector<LandmarkRow> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto cols = split_csv(lines[i]);
        if (cols.size() != 2 + 2 * k)
            throw Error(ErrorCode::InvalidArgument,
                        path.string() + ":" + std::to_string(i + 1) + ": expected " + std::to_string(2 + 2 * k) +
                            " columns");
        std::vector<double> uv(2 * k);
        for (std::size_t c = 0; c < uv.size(); ++c) uv[c] = parse_double(cols[2 + c]);
        rows.push_back({parse_int(cols[0]), static_cast<int>(parse_int(cols[1])), LandmarkSet::from_flat(uv)});
    }
    return rows;
}

}  // namespace dag
