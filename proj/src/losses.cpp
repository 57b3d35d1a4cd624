#include "losses.hpp"

#include "common.hpp"

#include <algorithm>
#include <cmath>

namespace dag {

LossConfig LossConfig::softmax() { return LossConfig{}; }

LossConfig LossConfig::sphereface() {
    LossConfig c;
    c.m1 = 4;
    return c;
}

LossConfig LossConfig::cosface() {
    LossConfig c;
    c.m1 = 1;
    c.m2 = 0.35;
    c.scale_mode = ScaleMode::Fixed;
    c.s = 64.0;
    return c;
}

LossConfig LossConfig::preset(const std::string& name) {
    if (name == "softmax") return softmax();
    if (name == "sphereface") return sphereface();
    if (name == "cosface") return cosface();
    throw Error(ErrorCode::Config, "unknown loss preset '" + name + "'");
}

void LossConfig::validate() const {
    if (m1 < 0) throw Error(ErrorCode::Config, "loss.m1 must be >= 0");
    if (!(m2 >= 0.0 && m2 < 1.0)) throw Error(ErrorCode::Config, "loss.m2 must lie in [0, 1)");
    if (scale_mode == ScaleMode::Fixed && !(s > 0.0)) throw Error(ErrorCode::Config, "loss.s must be > 0");
    if (!(alpha_g >= 0.0)) throw Error(ErrorCode::Config, "loss.alpha_g must be >= 0");
    if (!(lambda_a >= 0.0) || !(lambda_g >= 0.0)) throw Error(ErrorCode::Config, "loss weights must be >= 0");
}

CosineResult cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& v1,
                               const Eigen::Ref<const Eigen::VectorXd>& v2) {
    if (v1.size() != v2.size()) throw Error(ErrorCode::InvalidArgument, "cosine of vectors with different sizes");
    const double n1 = v1.norm();
    const double n2 = v2.norm();
    if (!(n1 > 0.0) || !(n2 > 0.0)) throw Error(ErrorCode::DegenerateVector, "cosine similarity of a zero vector");
    CosineResult r;
    r.value = v1.dot(v2) / (n1 * n2);
    r.grad_v1 = v2 / (n1 * n2) - r.value * v1 / (n1 * n1);
    r.grad_v2 = v1 / (n1 * n2) - r.value * v2 / (n2 * n2);
    return r;
}

namespace {

void require_rows(const Batch& a, const Batch& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(ErrorCode::InvalidArgument, std::string(what) + ": batch shapes differ");
}

}  // namespace

GeometryLossResult geometry_loss(const Batch& g_i, const Batch& g_hat, const Batch& g_prime,
                                 std::span<const double> phi_g, double alpha_g) {
    require_rows(g_i, g_hat, "geometry loss");
    require_rows(g_i, g_prime, "geometry loss");
    const Eigen::Index n = g_i.rows();
    if (n < 1 || static_cast<Eigen::Index>(phi_g.size()) != n)
        throw Error(ErrorCode::InvalidArgument, "geometry loss: batch size and phi_g count disagree");
    GeometryLossResult r;
    r.d_g_i = Batch::Zero(n, g_i.cols());
    r.d_g_hat = Batch::Zero(n, g_i.cols());
    r.d_g_prime = Batch::Zero(n, g_i.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(phi_g[static_cast<std::size_t>(i)] >= 0.0))
            throw Error(ErrorCode::InvalidArgument, "geometry loss: phi_g must be >= 0");
        const auto pull = cosine_similarity(g_i.row(i).transpose(), g_hat.row(i).transpose());
        r.value -= pull.value;
        r.d_g_i.row(i) -= inv_n * pull.grad_v1.transpose();
        r.d_g_hat.row(i) -= inv_n * pull.grad_v2.transpose();
        const auto push = cosine_similarity(g_i.row(i).transpose(), g_prime.row(i).transpose());
        const double hinge = push.value - alpha_g * phi_g[static_cast<std::size_t>(i)];
        if (hinge >= 0.0) {
            r.value += hinge;
            r.d_g_i.row(i) += inv_n * push.grad_v1.transpose();
            r.d_g_prime.row(i) += inv_n * push.grad_v2.transpose();
            ++r.active_hinges;
        }
    }
    r.value *= inv_n;
    return r;
}

AppearanceLossResult appearance_loss(const Batch& a_prime, const Batch& a_hat) {
    require_rows(a_prime, a_hat, "appearance loss");
    const Eigen::Index n = a_prime.rows();
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "appearance loss: empty batch");
    AppearanceLossResult r;
    r.d_a_prime = Batch::Zero(n, a_prime.cols());
    r.d_a_hat = Batch::Zero(n, a_prime.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto c = cosine_similarity(a_prime.row(i).transpose(), a_hat.row(i).transpose());
        r.value -= c.value;
        r.d_a_prime.row(i) = -inv_n * c.grad_v1.transpose();
        r.d_a_hat.row(i) = -inv_n * c.grad_v2.transpose();
    }
    r.value *= inv_n;
    return r;
}

double chebyshev_t(int m, double c) noexcept {
    if (m == 0) return 1.0;
    double prev = 1.0, cur = c;
    for (int k = 1; k < m; ++k) {
        const double next = 2.0 * c * cur - prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

double chebyshev_t_derivative(int m, double c) noexcept {
    // T_m' = m U_{m-1}
    if (m == 0) return 0.0;
    double prev = 1.0, cur = 2.0 * c;  // U_0, U_1
    if (m == 1) return 1.0;
    for (int k = 1; k < m - 1; ++k) {
        const double next = 2.0 * c * cur - prev;
        prev = cur;
        cur = next;
    }
    return m * cur;
}

namespace {

constexpr double kPi = 3.141592653589793;

struct Psi {
    double value;
    double derivative;  // d psi / d cos(theta)
};

Psi margin_psi(const LossConfig& cfg, double c) {
    if (!cfg.monotonic_psi || cfg.m1 <= 1) return {chebyshev_t(cfg.m1, c), chebyshev_t_derivative(cfg.m1, c)};
    const double cc = std::clamp(c, -1.0 + 1e-12, 1.0 - 1e-12);
    const double theta = std::acos(cc);
    const double k = std::floor(cfg.m1 * theta / kPi);
    const double sign = std::fmod(k, 2.0) == 0.0 ? 1.0 : -1.0;
    const double value = sign * std::cos(cfg.m1 * theta) - 2.0 * k;
    const double dtheta = -1.0 / std::sin(theta);
    return {value, sign * (-cfg.m1 * std::sin(cfg.m1 * theta)) * dtheta};
}

}  // namespace

IdentificationResult identification_loss(const Batch& z, std::span<const int> labels,
                                         const Eigen::MatrixXd& weights, const LossConfig& cfg) {
    const Eigen::Index n = z.rows();
    const Eigen::Index classes = weights.rows();
    if (n < 1 || static_cast<Eigen::Index>(labels.size()) != n)
        throw Error(ErrorCode::InvalidArgument, "identification loss: batch size and label count disagree");
    if (weights.cols() != z.cols())
        throw Error(ErrorCode::InvalidArgument, "identification loss: embedding and class weight widths differ");
    const Eigen::VectorXd w_norm = weights.rowwise().norm();
    for (Eigen::Index j = 0; j < classes; ++j)
        if (!(w_norm(j) > 0.0)) throw Error(ErrorCode::DegenerateVector, "class weight vector has zero norm");

    IdentificationResult r;
    r.d_z = Batch::Zero(n, z.cols());
    r.d_weights = Eigen::MatrixXd::Zero(classes, weights.cols());
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::VectorXd cosines(classes), logits(classes), dlogit(classes), dcos(classes);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= classes) throw Error(ErrorCode::InvalidArgument, "identification loss: label out of range");
        const auto zi = z.row(i).transpose();
        const double zn = zi.norm();
        if (!(zn > 0.0)) throw Error(ErrorCode::DegenerateVector, "embedding has zero norm");
        cosines = (weights * zi).array() / (w_norm.array() * zn);
        const double s = cfg.scale_mode == ScaleMode::Fixed ? cfg.s : zn;
        const Psi psi = margin_psi(cfg, cosines(y));
        logits = s * cosines;
        logits(y) = s * (psi.value - cfg.m2);

        Eigen::Index best = 0;
        cosines.maxCoeff(&best);
        if (best == y) ++r.correct;

        const double mx = logits.maxCoeff();
        const Eigen::ArrayXd ex = (logits.array() - mx).exp();
        const double sum = ex.sum();
        r.value += -(logits(y) - mx) + std::log(sum);

        dlogit = ex.matrix() / sum;
        dlogit(y) -= 1.0;
        dlogit *= inv_n;

        dcos = s * dlogit;
        dcos(y) = dlogit(y) * s * psi.derivative;
        double ds = dlogit(y) * (psi.value - cfg.m2);
        for (Eigen::Index j = 0; j < classes; ++j)
            if (j != y) ds += dlogit(j) * cosines(j);

        // d cos_j / d z = W_j / (|z||W_j|) - cos_j z / |z|^2
        Eigen::VectorXd gz = weights.transpose() * (dcos.array() / (w_norm.array() * zn)).matrix();
        gz -= (dcos.array() * cosines.array()).sum() / (zn * zn) * zi;
        if (cfg.scale_mode == ScaleMode::EmbeddingNorm) gz += ds / zn * zi;
        r.d_z.row(i) = gz.transpose();

        // d cos_j / d W_j = z / (|z||W_j|) - cos_j W_j / |W_j|^2
        for (Eigen::Index j = 0; j < classes; ++j) {
            r.d_weights.row(j) += dcos(j) * (zi.transpose() / (zn * w_norm(j)) -
                                             cosines(j) * weights.row(j) / (w_norm(j) * w_norm(j)));
        }
    }
    r.value *= inv_n;
    return r;
}

TotalLossResult total_loss(const EmbeddingBatch& input, const EmbeddingBatch& neighbor, const EmbeddingBatch& warped,
                           std::span<const int> labels_input, std::span<const int> labels_neighbor,
                           std::span<const double> phi_g, const Eigen::MatrixXd& weights, const LossConfig& cfg) {
    const auto id_i = identification_loss(input.combined, labels_input, weights, cfg);
    const auto id_p = identification_loss(neighbor.combined, labels_neighbor, weights, cfg);
    const auto app = appearance_loss(neighbor.appearance, warped.appearance);
    const auto geo = geometry_loss(input.geometry, warped.geometry, neighbor.geometry, phi_g, cfg.alpha_g);

    TotalLossResult r;
    r.id_input = id_i.value;
    r.id_neighbor = id_p.value;
    r.id_mean = 0.5 * (id_i.value + id_p.value);
    r.appearance = app.value;
    r.geometry = geo.value;
    r.value = r.id_mean + cfg.lambda_a * app.value + cfg.lambda_g * geo.value;
    r.correct = id_i.correct + id_p.correct;

    const Eigen::Index n = input.combined.rows();
    r.d_input.combined = 0.5 * id_i.d_z;
    r.d_input.geometry = cfg.lambda_g * geo.d_g_i;
    r.d_input.appearance = Batch::Zero(n, input.appearance.cols());
    r.d_neighbor.combined = 0.5 * id_p.d_z;
    r.d_neighbor.geometry = cfg.lambda_g * geo.d_g_prime;
    r.d_neighbor.appearance = cfg.lambda_a * app.d_a_prime;
    r.d_warped.combined = Batch::Zero(n, warped.combined.cols());
    r.d_warped.geometry = cfg.lambda_g * geo.d_g_hat;
    r.d_warped.appearance = cfg.lambda_a * app.d_a_hat;
    r.d_weights = 0.5 * (id_i.d_weights + id_p.d_weights);
    return r;
}

}  // namespace dag
