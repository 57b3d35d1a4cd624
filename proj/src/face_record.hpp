#pragma once

#include "image.hpp"
#include "landmarks.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace dag {

inline constexpr std::size_t kGeoFactors = 5;
inline constexpr std::size_t kAppFactors = 4;
inline constexpr std::size_t kAttributes = 3;

// Ground-truth generative factors of one synthetic identity.
//   geo: eye spacing, eye height, nose length, mouth width (fractions of the
//        image width) and face aspect (outline height / width).
//   app: base intensity, part contrast, texture frequency, texture phase, all
//        in [0, 1].
//   attributes: bright, high_contrast, fine_texture = app[0..2] >= threshold.
struct IdentitySpec {
    int identity = 0;
    std::array<double, kGeoFactors> geo{};
    std::array<double, kAppFactors> app{};
    std::array<bool, kAttributes> attributes{};

    friend bool operator==(const IdentitySpec&, const IdentitySpec&) = default;
};

struct Provenance {
    std::int64_t input_record = 0;     // i
    std::int64_t neighbor_record = 0;  // i'
};

struct FaceRecord {
    std::int64_t record_id = 0;
    int identity = 0;
    ImageBuffer image;
    LandmarkSet landmarks;
    std::optional<IdentitySpec> spec;
    std::optional<Provenance> provenance;
};

}  // namespace dag
