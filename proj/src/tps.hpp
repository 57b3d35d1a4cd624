#pragma once

#include "face_record.hpp"
#include "image.hpp"
#include "landmarks.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace dag {

// Radial basis U(r) = r^2 log r^2 written in terms of r^2, with U(0) = 0.
inline double tps_kernel_sq(double r2) noexcept { return r2 > 0.0 ? r2 * std::log(r2) : 0.0; }

// Thin-plate spline R^2 -> R^2:
//   T(p) = affine * (1, u, v)^T + sum_k warp_k * U(|p - source_k|)
class TpsTransform {
public:
    TpsTransform(LandmarkSet source, std::array<std::array<double, 3>, 2> affine,
                 std::vector<std::array<double, 2>> warp);

    const LandmarkSet& source() const noexcept { return source_; }
    // affine()[c] = (constant, u coefficient, v coefficient) of output coordinate c.
    const std::array<std::array<double, 3>, 2>& affine() const noexcept { return affine_; }
    const std::vector<std::array<double, 2>>& warp() const noexcept { return warp_; }

    Point2 operator()(Point2 p) const noexcept;

    // Max |sum w|, |sum w u|, |sum w v| over both output coordinates.
    double side_condition_residual() const noexcept;

private:
    LandmarkSet source_;
    std::array<std::array<double, 3>, 2> affine_;
    std::vector<std::array<double, 2>> warp_;
};

// Solves the bordered (K+3)x(K+3) system for both output coordinates.
// regularization is added to the kernel diagonal; 0 interpolates exactly.
// Throws SingularConfiguration for collinear or duplicated control points.
TpsTransform fit_tps(const LandmarkSet& source, const LandmarkSet& target, double regularization = 0.0);

inline Point2 eval_tps(const TpsTransform& t, Point2 p) noexcept { return t(p); }

// Output has the size of `img` and landmark configuration `target`: the
// inverse spline target -> source is evaluated at every output pixel centre
// and `img` is sampled bilinearly with edge clamping.
ImageBuffer warp_image(const ImageBuffer& img, const LandmarkSet& target, const LandmarkSet& source);

// Resamples an image through a similarity given in input -> output coordinates.
ImageBuffer warp_similarity(const ImageBuffer& img, const Similarity& forward);

// Aligns landmarks to the frame and resamples the image accordingly.
FaceRecord align_record(const FaceRecord& record, const CanonicalFrame& frame);

// x_hat_{i'}: record_iprime's appearance carried onto record_i's geometry,
// re-aligned to the frame. Keeps identity y_{i'} and records (i, i').
FaceRecord make_identical_face(const FaceRecord& record_i, const FaceRecord& record_iprime,
                               const CanonicalFrame& frame);

}  // namespace dag
