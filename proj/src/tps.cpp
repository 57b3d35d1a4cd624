#include "tps.hpp"

#include "common.hpp"

#include <Eigen/Dense>

namespace dag {

TpsTransform::TpsTransform(LandmarkSet source, std::array<std::array<double, 3>, 2> affine,
                           std::vector<std::array<double, 2>> warp)
    : source_(std::move(source)), affine_(affine), warp_(std::move(warp)) {
    if (warp_.size() != source_.size())
        throw Error(ErrorCode::InvalidArgument, "warp coefficient count must equal K");
}

Point2 TpsTransform::operator()(Point2 p) const noexcept {
    double u = affine_[0][0] + affine_[0][1] * p.u + affine_[0][2] * p.v;
    double v = affine_[1][0] + affine_[1][1] * p.u + affine_[1][2] * p.v;
    for (std::size_t k = 0; k < warp_.size(); ++k) {
        const double du = p.u - source_[k].u;
        const double dv = p.v - source_[k].v;
        const double basis = tps_kernel_sq(du * du + dv * dv);
        u += warp_[k][0] * basis;
        v += warp_[k][1] * basis;
    }
    return {u, v};
}

double TpsTransform::side_condition_residual() const noexcept {
    double worst = 0.0;
    for (int c = 0; c < 2; ++c) {
        double s = 0.0, su = 0.0, sv = 0.0;
        for (std::size_t k = 0; k < warp_.size(); ++k) {
            s += warp_[k][c];
            su += warp_[k][c] * source_[k].u;
            sv += warp_[k][c] * source_[k].v;
        }
        worst = std::max({worst, std::abs(s), std::abs(su), std::abs(sv)});
    }
    return worst;
}

TpsTransform fit_tps(const LandmarkSet& source, const LandmarkSet& target, double regularization) {
    if (source.size() != target.size())
        throw Error(ErrorCode::InvalidArgument, "TPS source and target differ in K");
    if (!(regularization >= 0.0)) throw Error(ErrorCode::InvalidArgument, "TPS regularization must be >= 0");
    const Eigen::Index k = static_cast<Eigen::Index>(source.size());
    const Eigen::Index n = k + 3;

    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < k; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            const double du = source[i].u - source[j].u;
            const double dv = source[i].v - source[j].v;
            system(i, j) = tps_kernel_sq(du * du + dv * dv);
        }
        system(i, i) += regularization;
        system(i, k) = system(k, i) = 1.0;
        system(i, k + 1) = system(k + 1, i) = source[i].u;
        system(i, k + 2) = system(k + 2, i) = source[i].v;
    }
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 2);
    for (Eigen::Index i = 0; i < k; ++i) {
        rhs(i, 0) = target[i].u;
        rhs(i, 1) = target[i].v;
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(system);
    lu.setThreshold(1e-12);
    if (lu.rank() < n)
        throw Error(ErrorCode::SingularConfiguration,
                    "TPS system is singular: control points are collinear or duplicated");
    Eigen::MatrixXd sol = lu.solve(rhs);
    // One round of iterative refinement tightens interpolation on larger K.
    sol += lu.solve(rhs - system * sol);

    std::array<std::array<double, 3>, 2> affine{};
    std::vector<std::array<double, 2>> warp(static_cast<std::size_t>(k));
    for (int c = 0; c < 2; ++c) {
        for (Eigen::Index i = 0; i < k; ++i) warp[static_cast<std::size_t>(i)][c] = sol(i, c);
        for (int a = 0; a < 3; ++a) affine[c][a] = sol(k + a, c);
    }
    return TpsTransform(source, affine, std::move(warp));
}

ImageBuffer warp_image(const ImageBuffer& img, const LandmarkSet& target, const LandmarkSet& source) {
    const TpsTransform inverse = fit_tps(target, source);
    ImageBuffer out(img.width(), img.height(), img.channels());
    for (int row = 0; row < img.height(); ++row) {
        for (int col = 0; col < img.width(); ++col) {
            const Point2 q = inverse({col + 0.5, row + 0.5});
            for (int ch = 0; ch < img.channels(); ++ch) out.at(col, row, ch) = sample_bilinear(img, q.u, q.v, ch);
        }
    }
    return out;
}

ImageBuffer warp_similarity(const ImageBuffer& img, const Similarity& forward) {
    const Similarity back = forward.inverse();
    ImageBuffer out(img.width(), img.height(), img.channels());
    for (int row = 0; row < img.height(); ++row) {
        for (int col = 0; col < img.width(); ++col) {
            const Point2 q = back.apply(Point2{col + 0.5, row + 0.5});
            for (int ch = 0; ch < img.channels(); ++ch) out.at(col, row, ch) = sample_bilinear(img, q.u, q.v, ch);
        }
    }
    return out;
}

FaceRecord align_record(const FaceRecord& record, const CanonicalFrame& frame) {
    const Alignment al = align_landmarks(record.landmarks, frame);
    FaceRecord out = record;
    out.image = warp_similarity(record.image, al.transform);
    out.landmarks = al.aligned;
    return out;
}

FaceRecord make_identical_face(const FaceRecord& record_i, const FaceRecord& record_iprime,
                               const CanonicalFrame& frame) {
    if (record_i.landmarks.size() != record_iprime.landmarks.size())
        throw Error(ErrorCode::InvalidArgument, "records differ in landmark count");
    FaceRecord warped;
    warped.record_id = record_iprime.record_id;
    warped.identity = record_iprime.identity;
    warped.spec = record_iprime.spec;
    warped.image = warp_image(record_iprime.image, record_i.landmarks, record_iprime.landmarks);
    warped.landmarks = record_i.landmarks;
    FaceRecord out = align_record(warped, frame);
    out.provenance = Provenance{record_i.record_id, record_iprime.record_id};
    return out;
}

}  // namespace dag
