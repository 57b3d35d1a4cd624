#pragma once

#include "face_record.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dag {

inline constexpr std::size_t kLandmarkCount = 12;

// Landmark order: 0-3 eye corners (left outer, left inner, right inner, right
// outer), 4 nose top, 5 nose tip, 6-7 mouth corners (left, right), 8-11 face
// outline (left, right, top, chin).
inline constexpr std::array<const char*, kGeoFactors> kGeoNames = {
    "eye_spacing", "eye_height", "nose_length", "mouth_width", "face_aspect"};
inline constexpr std::array<const char*, kAppFactors> kAppNames = {"base", "contrast", "tex_freq", "tex_phase"};
inline constexpr std::array<const char*, kAttributes> kAttributeNames = {"bright", "high_contrast", "fine_texture"};

struct FactorRange {
    double lo;
    double hi;
};
inline constexpr std::array<FactorRange, kGeoFactors> kGeoRanges = {
    {{0.26, 0.40}, {0.36, 0.46}, {0.12, 0.22}, {0.16, 0.30}, {1.10, 1.35}}};
inline constexpr std::array<FactorRange, kAppFactors> kAppRanges = {{{0, 1}, {0, 1}, {0, 1}, {0, 1}}};
inline constexpr double kAttributeThreshold = 0.5;

// Per-render pose and expression jitter, in pixels.
struct RenderJitter {
    double du = 0.0;
    double dv = 0.0;
    double mouth = 0.0;  // added to each mouth corner's horizontal offset
};

RenderJitter sample_jitter(std::uint64_t jitter_seed, int width);

// Part placement derived from geo_latent and jitter. The renderer draws
// exactly these primitives, so `landmarks` is the ground truth.
struct FacePlacement {
    LandmarkSet landmarks;
    Point2 face_centre;
    double face_rx = 0.0;
    double face_ry = 0.0;
};

FacePlacement face_placement(const IdentitySpec& spec, const RenderJitter& jitter, int width);

std::array<bool, kAttributes> derive_attributes(const std::array<double, kAppFactors>& app) noexcept;

IdentitySpec sample_identity(std::uint64_t seed, int identity);

// noise_level in [0, 0.1]; width x width grayscale output.
FaceRecord render_face(const IdentitySpec& spec, std::uint64_t jitter_seed, double noise_level, int width = 32);

enum class Split { Train, Test };
const char* split_name(Split s) noexcept;

struct DatasetParams {
    int n_identities = 40;
    int per_identity = 25;
    int image_size = 32;
    double noise_level = 0.02;
    std::uint64_t seed = 1;
};

struct Dataset {
    std::vector<FaceRecord> records;  // ordered by record id
    std::vector<Split> splits;        // parallel to records
    std::vector<std::string> filenames;

    std::vector<std::size_t> indices(Split s) const;
};

// Identities are shuffled and the first round(0.8 n) (at least one, at most
// n - 1) go to train.
std::vector<Split> assign_splits(int n_identities, std::uint64_t seed);

Dataset generate_records(const DatasetParams& params);

// Writes images/<file>.pgm, landmarks.csv and manifest.csv under out_dir.
Dataset generate_dataset(const DatasetParams& params, const std::filesystem::path& out_dir);

// Reads a dataset written by generate_dataset (images round-trip through 8 bit).
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace dag
