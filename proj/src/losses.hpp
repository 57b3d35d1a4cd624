#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dag {

// Row i of a batch holds sample i.
using Batch = Eigen::MatrixXd;

enum class ScaleMode { Fixed, EmbeddingNorm };

struct LossConfig {
    int m1 = 1;
    double m2 = 0.0;
    ScaleMode scale_mode = ScaleMode::EmbeddingNorm;
    double s = 64.0;  // used when scale_mode == Fixed
    double alpha_g = 9.4;
    double lambda_a = 1.3;
    double lambda_g = 0.75;
    // Piecewise-monotonic psi(theta) in place of cos(m1 theta). Off by default.
    bool monotonic_psi = false;

    static LossConfig softmax();
    static LossConfig sphereface();
    // m1 = 1: the CosFace form. The m1 = 0 variant is reachable via m1.
    static LossConfig cosface();
    static LossConfig preset(const std::string& name);

    void validate() const;
};

struct CosineResult {
    double value = 0.0;
    Eigen::VectorXd grad_v1;
    Eigen::VectorXd grad_v2;
};

// Phi(v1, v2) = v1.v2 / (|v1| |v2|) with its gradient in both arguments.
CosineResult cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& v1,
                               const Eigen::Ref<const Eigen::VectorXd>& v2);

struct GeometryLossResult {
    double value = 0.0;
    Batch d_g_i;
    Batch d_g_hat;
    Batch d_g_prime;
    std::size_t active_hinges = 0;
};

// (1/N) sum_i [ -Phi(g_i, g_hat_i) + max(0, Phi(g_i, g_prime_i) - alpha_g phi_g_i) ]
// The hinge subgradient at the kink is taken from the active branch.
GeometryLossResult geometry_loss(const Batch& g_i, const Batch& g_hat, const Batch& g_prime,
                                 std::span<const double> phi_g, double alpha_g);

struct AppearanceLossResult {
    double value = 0.0;
    Batch d_a_prime;
    Batch d_a_hat;
};

// -(1/N) sum_i Phi(a_prime_i, a_hat_i)
AppearanceLossResult appearance_loss(const Batch& a_prime, const Batch& a_hat);

struct IdentificationResult {
    double value = 0.0;
    Batch d_z;
    Eigen::MatrixXd d_weights;  // same shape as the class weight matrix
    std::size_t correct = 0;    // samples whose largest cosine is the true class
};

// Angular-margin softmax over cosine logits. `weights` has one row per class.
// True-class logit s (cos(m1 theta) - m2), others s cos(theta); in
// embedding-norm mode s = |z_i| and is differentiated through.
IdentificationResult identification_loss(const Batch& z, std::span<const int> labels,
                                         const Eigen::MatrixXd& weights, const LossConfig& cfg);

// cos(m theta) as a polynomial in c = cos(theta), and its derivative in c.
double chebyshev_t(int m, double c) noexcept;
double chebyshev_t_derivative(int m, double c) noexcept;

struct EmbeddingBatch {
    Batch appearance;
    Batch geometry;
    Batch combined;
};

struct TotalLossResult {
    double value = 0.0;
    double id_input = 0.0;     // L_id on x_i
    double id_neighbor = 0.0;  // L_id on x_{i'}
    double id_mean = 0.0;
    double appearance = 0.0;
    double geometry = 0.0;
    EmbeddingBatch d_input;
    EmbeddingBatch d_neighbor;
    EmbeddingBatch d_warped;  // combined part is always zero
    Eigen::MatrixXd d_weights;
    std::size_t correct = 0;  // over both identification batches
};

// L_t = (L_id(x_i) + L_id(x_{i'})) / 2 + lambda_a L_a + lambda_g L_g.
TotalLossResult total_loss(const EmbeddingBatch& input, const EmbeddingBatch& neighbor, const EmbeddingBatch& warped,
                           std::span<const int> labels_input, std::span<const int> labels_neighbor,
                           std::span<const double> phi_g, const Eigen::MatrixXd& weights, const LossConfig& cfg);

}  // namespace dag
