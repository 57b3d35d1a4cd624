#pragma once

#include "image.hpp"
#include "losses.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dag {

struct LayerSpec {
    enum class Kind { Conv, Residual };
    Kind kind = Kind::Conv;
    int filters = 0;  // conv only; residual blocks keep the channel count
    int stride = 1;   // conv only

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Trunk spec strings look like "conv8s2,res,conv16s2,res".
std::vector<LayerSpec> parse_trunk(const std::string& text);
std::string format_trunk(const std::vector<LayerSpec>& trunk);

struct NetConfig {
    int width = 32;
    int height = 32;
    int channels = 1;
    std::vector<LayerSpec> trunk = parse_trunk("conv8s2,res,conv16s2,res");
    int d = 16;
    int d_prime = 32;
    int n_classes = 2;

    void validate() const;
    std::string canonical() const;
    std::uint64_t hash() const;
};

// One 3x3, pad-1 convolution followed by a PReLU with a single shared slope.
struct ConvUnit {
    int in_c, out_c, stride;
    int in_h, in_w, out_h, out_w;
    std::size_t weight, bias, slope;  // offsets into the flat parameter vector
};

struct TrunkStep {
    bool residual;
    int first;   // conv unit index
    int second;  // second conv of a residual block, else -1
};

// Flat parameter vector layout, in declaration order: trunk convs (weight
// [out][in][3][3], bias, slope), appearance head (weight [d][F], bias),
// geometry head, combiner f (weight [d'][2d], bias), class weights [C][d'].
struct NetLayout {
    explicit NetLayout(const NetConfig& cfg);

    NetConfig cfg;
    std::vector<ConvUnit> convs;
    std::vector<TrunkStep> steps;
    int final_c = 0, final_h = 0, final_w = 0;
    std::size_t chunk_features = 0;  // (final_c / 2) * final_h * final_w
    std::size_t app_weight = 0, app_bias = 0;
    std::size_t geo_weight = 0, geo_bias = 0;
    std::size_t comb_weight = 0, comb_bias = 0;
    std::size_t classifier = 0;
    std::size_t total = 0;
};

class NetParams {
public:
    explicit NetParams(const NetConfig& cfg);

    const NetConfig& config() const noexcept { return layout_.cfg; }
    const NetLayout& layout() const noexcept { return layout_; }
    std::span<const double> values() const noexcept { return values_; }
    // Every mutable access invalidates outstanding forward caches.
    std::span<double> mutable_values() noexcept {
        ++version_;
        return values_;
    }
    std::uint64_t version() const noexcept { return version_; }

    // Class weight matrix, one row per class.
    Eigen::MatrixXd classifier() const;

    friend bool operator==(const NetParams& a, const NetParams& b) { return a.values_ == b.values_; }

private:
    NetLayout layout_;
    std::vector<double> values_;
    std::uint64_t version_ = 0;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, slopes 0.25.
NetParams init_params(const NetConfig& cfg, std::uint64_t seed);

template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
struct ForwardCache {
    std::uint64_t config_hash = 0;
    std::uint64_t params_version = 0;
    std::vector<MatX<S>> conv_inputs;  // per conv unit: (in_c, in_h * in_w)
    std::vector<MatX<S>> conv_pre;     // per conv unit: pre-activation (out_c, out_h * out_w)
    VecX<S> features;                  // flattened final maps, appearance chunk first
    VecX<S> appearance, geometry, concat, combined;

    // Hash of the PReLU sign pattern; finite-difference checks use it to
    // detect perturbations that cross a kink.
    std::uint64_t sign_pattern() const;
};

// Typed kernels shared by the f64 training path and the f32 gradient check.
template <typename S>
ForwardCache<S> forward_typed(const NetLayout& layout, std::span<const S> values, const ImageBuffer& image);

// Accumulates into d_params (size layout.total); d_input is optional.
template <typename S>
void backward_typed(const NetLayout& layout, std::span<const S> values, const ForwardCache<S>& cache,
                    const VecX<S>& d_appearance, const VecX<S>& d_geometry, const VecX<S>& d_combined,
                    std::span<S> d_params, std::vector<S>* d_input);

struct Embeddings {
    Eigen::VectorXd appearance;
    Eigen::VectorXd geometry;
    Eigen::VectorXd combined;
};

struct ForwardResult {
    Embeddings embeddings;
    ForwardCache<double> cache;
};

ForwardResult forward(const NetParams& params, const ImageBuffer& image);

struct ParamGradients {
    std::vector<double> params;
    std::vector<double> input;
};

// Throws Cache when `cache` came from another configuration or from params
// that have been modified since.
ParamGradients backward(const NetParams& params, const ForwardCache<double>& cache,
                        const Eigen::VectorXd& d_appearance, const Eigen::VectorXd& d_geometry,
                        const Eigen::VectorXd& d_combined);

// Checkpoint: "DAGCKPT1", u32 version, u32 reserved, u64 config hash, u64
// count, then count little-endian f64 values.
void save_checkpoint(const std::filesystem::path& path, const NetParams& params);
NetParams load_checkpoint(const std::filesystem::path& path, const NetConfig& cfg);

enum class Precision { F32, F64 };

struct GradCheckReport {
    std::size_t parameters = 0;
    std::size_t checked = 0;
    std::size_t skipped_kinks = 0;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double tolerance = 0.0;
    bool passed = false;
};

struct GradCheckOptions {
    double tolerance = 1e-4;
    Precision precision = Precision::F64;
    int batch = 2;
    LossConfig loss = LossConfig::softmax();
    // Accuracy order of the central difference (2 or 4) and its step; 0 picks
    // order 4 with h = 1e-4 for f64 and order 2 with h = 1e-3 for f32.
    int order = 0;
    double step = 0.0;
    // Test hook: flips the sign of the analytic gradient of this coordinate.
    std::ptrdiff_t corrupt_index = -1;
};

// Central differences of total_loss over every parameter coordinate for a
// random triplet batch.
GradCheckReport grad_check(const NetConfig& cfg, std::uint64_t seed, const GradCheckOptions& opts = {});

// Relative error used by every gradient comparison in the project.
inline double gradient_rel_error(double analytic, double numeric) noexcept {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

}  // namespace dag
