#include "synthetic.hpp"

#include "common.hpp"
#include "rng.hpp"
#include "text_io.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace dag {

namespace {

constexpr double kTwoPi = 6.283185307179586;

// Layout constants, as fractions of the image width.
constexpr double kFaceRx = 0.34;
constexpr double kEyeWidth = 0.11;
constexpr double kEyeHalfHeight = 0.03;
constexpr double kNoseOffset = 0.04;
constexpr double kMouthOffset = 0.08;
constexpr double kNoseHalfWidth = 0.02;
constexpr double kMouthHalfWidth = 0.025;
constexpr double kPoseJitter = 0.025;
constexpr double kMouthJitter = 0.005;

constexpr double kBackground = -0.85;
constexpr double kTextureAmplitude = 0.12;

double coverage(double signed_distance) noexcept { return std::clamp(0.5 - signed_distance, 0.0, 1.0); }

double ellipse_sd(double x, double y, double cx, double cy, double a, double b) noexcept {
    const double rho = std::hypot((x - cx) / a, (y - cy) / b);
    return (rho - 1.0) * std::min(a, b);
}

double segment_distance(double x, double y, Point2 p, Point2 q) noexcept {
    const double du = q.u - p.u, dv = q.v - p.v;
    const double len2 = du * du + dv * dv;
    double t = len2 > 0.0 ? ((x - p.u) * du + (y - p.v) * dv) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(x - (p.u + t * du), y - (p.v + t * dv));
}

}  // namespace

RenderJitter sample_jitter(std::uint64_t jitter_seed, int width) {
    CounterRng rng{jitter_seed, 0x717e4ull};
    const double w = static_cast<double>(width);
    RenderJitter j;
    j.du = rng.uniform(-kPoseJitter, kPoseJitter) * w;
    j.dv = rng.uniform(-kPoseJitter, kPoseJitter) * w;
    j.mouth = rng.uniform(-kMouthJitter, kMouthJitter) * w;
    return j;
}

FacePlacement face_placement(const IdentitySpec& spec, const RenderJitter& jitter, int width) {
    const double w = static_cast<double>(width);
    const double cx = 0.5 * w + jitter.du;
    const double cy = 0.5 * w + jitter.dv;
    const double eye_spacing = spec.geo[0] * w;
    const double eye_y = spec.geo[1] * w + jitter.dv;
    const double nose_len = spec.geo[2] * w;
    const double mouth_half = 0.5 * spec.geo[3] * w + jitter.mouth;
    const double rx = kFaceRx * w;
    const double ry = rx * spec.geo[4];
    const double eye_half = 0.5 * kEyeWidth * w;

    const double left_eye = cx - 0.5 * eye_spacing;
    const double right_eye = cx + 0.5 * eye_spacing;
    const double nose_top = eye_y + kNoseOffset * w;
    const double nose_tip = nose_top + nose_len;
    const double mouth_y = nose_tip + kMouthOffset * w;

    std::vector<Point2> pts = {
        {left_eye - eye_half, eye_y},  {left_eye + eye_half, eye_y},  {right_eye - eye_half, eye_y},
        {right_eye + eye_half, eye_y}, {cx, nose_top},                {cx, nose_tip},
        {cx - mouth_half, mouth_y},    {cx + mouth_half, mouth_y},    {cx - rx, cy},
        {cx + rx, cy},                 {cx, cy - ry},                 {cx, cy + ry},
    };
    return FacePlacement{LandmarkSet(std::move(pts)), {cx, cy}, rx, ry};
}

std::array<bool, kAttributes> derive_attributes(const std::array<double, kAppFactors>& app) noexcept {
    std::array<bool, kAttributes> a{};
    for (std::size_t b = 0; b < kAttributes; ++b) a[b] = app[b] >= kAttributeThreshold;
    return a;
}

IdentitySpec sample_identity(std::uint64_t seed, int identity) {
    CounterRng rng{seed, static_cast<std::uint64_t>(identity), 0x1d5ull};
    IdentitySpec s;
    s.identity = identity;
    for (std::size_t k = 0; k < kGeoFactors; ++k) s.geo[k] = rng.uniform(kGeoRanges[k].lo, kGeoRanges[k].hi);
    for (std::size_t k = 0; k < kAppFactors; ++k) s.app[k] = rng.uniform(kAppRanges[k].lo, kAppRanges[k].hi);
    s.attributes = derive_attributes(s.app);
    return s;
}

FaceRecord render_face(const IdentitySpec& spec, std::uint64_t jitter_seed, double noise_level, int width) {
    if (!(noise_level >= 0.0 && noise_level <= 0.1))
        throw Error(ErrorCode::InvalidArgument, "noise_level must lie in [0, 0.1]");
    if (width < 8) throw Error(ErrorCode::InvalidArgument, "render width must be at least 8");
    const double w = static_cast<double>(width);
    const FacePlacement fp = face_placement(spec, sample_jitter(jitter_seed, width), width);
    const LandmarkSet& lm = fp.landmarks;

    const double skin = -0.45 + 0.9 * spec.app[0];
    const double part = skin - (0.2 + 0.45 * spec.app[1]);
    const double freq = 2.0 + 4.0 * spec.app[2];
    const double phase = spec.app[3];
    const double eye_b = kEyeHalfHeight * w;

    CounterRng noise{jitter_seed, 0x90153ull};
    ImageBuffer img(width, width, 1);
    for (int row = 0; row < width; ++row) {
        for (int col = 0; col < width; ++col) {
            const double x = col + 0.5, y = row + 0.5;
            const double tex = std::sin(kTwoPi * (freq * (x + y) / (w * std::sqrt(2.0)) + phase));
            double value = kBackground;
            const double cf = coverage(ellipse_sd(x, y, fp.face_centre.u, fp.face_centre.v, fp.face_rx, fp.face_ry));
            value += cf * (skin + kTextureAmplitude * tex - value);
            for (int e = 0; e < 2; ++e) {
                const Point2 a = lm[2 * e], b = lm[2 * e + 1];
                const double ecx = 0.5 * (a.u + b.u), ecy = 0.5 * (a.v + b.v);
                const double ea = 0.5 * std::hypot(b.u - a.u, b.v - a.v);
                value += coverage(ellipse_sd(x, y, ecx, ecy, ea, eye_b)) * (part - value);
            }
            value += coverage(segment_distance(x, y, lm[4], lm[5]) - kNoseHalfWidth * w) * (part - value);
            value += coverage(segment_distance(x, y, lm[6], lm[7]) - kMouthHalfWidth * w) * (part - value);
            if (noise_level > 0.0) value += noise.uniform(-noise_level, noise_level);
            img.at(col, row) = std::clamp(value, -1.0, 1.0);
        }
    }
    FaceRecord rec;
    rec.identity = spec.identity;
    rec.image = std::move(img);
    rec.landmarks = lm;
    rec.spec = spec;
    return rec;
}

const char* split_name(Split s) noexcept { return s == Split::Train ? "train" : "test"; }

std::vector<std::size_t> Dataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < splits.size(); ++i)
        if (splits[i] == s) out.push_back(i);
    return out;
}

std::vector<Split> assign_splits(int n_identities, std::uint64_t seed) {
    std::vector<int> order(static_cast<std::size_t>(n_identities));
    for (int i = 0; i < n_identities; ++i) order[static_cast<std::size_t>(i)] = i;
    CounterRng rng{seed, 0x5b1175ull};
    rng.shuffle(order);
    const int n_train = std::clamp(static_cast<int>(std::lround(0.8 * n_identities)), 1, n_identities - 1);
    std::vector<Split> out(static_cast<std::size_t>(n_identities), Split::Test);
    for (int i = 0; i < n_train; ++i) out[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = Split::Train;
    return out;
}

namespace {

void validate(const DatasetParams& p) {
    if (p.n_identities < 2 || p.per_identity < 2)
        throw Error(ErrorCode::InvalidArgument, "datasets need at least 2 identities with 2 images each");
}

std::string record_filename(std::int64_t id) {
    std::string digits = std::to_string(id);
    return "r" + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits + ".pgm";
}

}  // namespace

Dataset generate_records(const DatasetParams& params) {
    validate(params);
    const auto id_split = assign_splits(params.n_identities, params.seed);
    Dataset ds;
    for (int id = 0; id < params.n_identities; ++id) {
        const IdentitySpec spec = sample_identity(params.seed, id);
        for (int j = 0; j < params.per_identity; ++j) {
            const std::int64_t rid = static_cast<std::int64_t>(id) * params.per_identity + j;
            FaceRecord rec = render_face(spec, mix_key({params.seed, static_cast<std::uint64_t>(rid), 0x7e4ull}),
                                         params.noise_level, params.image_size);
            rec.record_id = rid;
            rec.image = quantize_8bit(rec.image);
            ds.records.push_back(std::move(rec));
            ds.splits.push_back(id_split[static_cast<std::size_t>(id)]);
            ds.filenames.push_back(record_filename(rid));
        }
    }
    return ds;
}

namespace {

std::string manifest_header() {
    std::string h = "record_id,identity,split,filename";
    for (auto n : kGeoNames) h += std::string(",geo_") + n;
    for (auto n : kAppNames) h += std::string(",app_") + n;
    for (auto n : kAttributeNames) h += std::string(",attr_") + n;
    return h;
}

}  // namespace

Dataset generate_dataset(const DatasetParams& params, const std::filesystem::path& out_dir) {
    Dataset ds = generate_records(params);
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "images", ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + (out_dir / "images").string() + ": " + ec.message());

    std::string manifest = manifest_header() + "\n";
    std::vector<LandmarkRow> rows;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        const auto& r = ds.records[i];
        save_pnm(out_dir / "images" / ds.filenames[i], r.image);
        manifest += std::to_string(r.record_id) + "," + std::to_string(r.identity) + "," + split_name(ds.splits[i]) +
                    "," + ds.filenames[i];
        for (double g : r.spec->geo) manifest += "," + format_double(g);
        for (double a : r.spec->app) manifest += "," + format_double(a);
        for (bool b : r.spec->attributes) manifest += b ? ",1" : ",0";
        manifest += "\n";
        rows.push_back({r.record_id, r.identity, r.landmarks});
    }
    write_text(out_dir / "manifest.csv", manifest);
    write_landmark_file(out_dir / "landmarks.csv", rows);
    return ds;
}

Dataset load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "manifest.csv"))
        throw Error(ErrorCode::MissingInput, "no dataset manifest under " + dir.string());
    const auto lines = read_lines(dir / "manifest.csv");
    if (lines.empty() || lines[0] != manifest_header())
        throw Error(ErrorCode::InvalidArgument, (dir / "manifest.csv").string() + ": unexpected header");
    std::map<std::int64_t, LandmarkSet> landmarks;
    for (auto& row : read_landmark_file(dir / "landmarks.csv")) landmarks.emplace(row.record_id, row.landmarks);

    Dataset ds;
    const std::size_t ncols = 4 + kGeoFactors + kAppFactors + kAttributes;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto cols = split_csv(lines[i]);
        if (cols.size() != ncols)
            throw Error(ErrorCode::InvalidArgument, "manifest line " + std::to_string(i + 1) + ": wrong column count");
        FaceRecord rec;
        rec.record_id = parse_int(cols[0]);
        rec.identity = static_cast<int>(parse_int(cols[1]));
        IdentitySpec spec;
        spec.identity = rec.identity;
        for (std::size_t k = 0; k < kGeoFactors; ++k) spec.geo[k] = parse_double(cols[4 + k]);
        for (std::size_t k = 0; k < kAppFactors; ++k) spec.app[k] = parse_double(cols[4 + kGeoFactors + k]);
        for (std::size_t k = 0; k < kAttributes; ++k)
            spec.attributes[k] = parse_int(cols[4 + kGeoFactors + kAppFactors + k]) != 0;
        rec.spec = spec;
        const auto it = landmarks.find(rec.record_id);
        if (it == landmarks.end())
            throw Error(ErrorCode::MissingInput, "no landmarks for record " + std::to_string(rec.record_id));
        rec.landmarks = it->second;
        const std::string fname(cols[3]);
        rec.image = load_pnm(dir / "images" / fname);
        ds.records.push_back(std::move(rec));
        ds.splits.push_back(cols[2] == "train" ? Split::Train : Split::Test);
        ds.filenames.push_back(fname);
    }
    return ds;
}

}  // namespace dag
