#include "common.hpp"
#include "losses.hpp"
#include "net.hpp"
#include "rng.hpp"

namespace dag {

namespace {

struct TripletBatch {
    std::vector<ImageBuffer> images;  // input, neighbour, warped interleaved per item
    std::vector<int> labels_input;
    std::vector<int> labels_neighbor;
    std::vector<double> phi_g;
};

struct Evaluation {
    double loss = 0.0;
    std::uint64_t pattern = 0;
};

template <typename S>
class LossProbe {
public:
    LossProbe(const NetLayout& layout, const TripletBatch& batch, const LossConfig& loss)
        : layout_(layout), batch_(batch), loss_(loss) {}

    Evaluation evaluate(std::span<const S> values, std::vector<S>* grad) const {
        const std::size_t n = batch_.labels_input.size();
        const int d = layout_.cfg.d, dp = layout_.cfg.d_prime;
        std::vector<ForwardCache<S>> caches;
        caches.reserve(3 * n);
        EmbeddingBatch emb[3];
        for (auto& e : emb) {
            e.appearance.resize(static_cast<Eigen::Index>(n), d);
            e.geometry.resize(static_cast<Eigen::Index>(n), d);
            e.combined.resize(static_cast<Eigen::Index>(n), dp);
        }
        Evaluation ev;
        ev.pattern = 0x84222325ull;
        for (std::size_t i = 0; i < n; ++i) {
            for (int role = 0; role < 3; ++role) {
                caches.push_back(forward_typed<S>(layout_, values, batch_.images[3 * i + static_cast<std::size_t>(role)]));
                const auto& c = caches.back();
                const auto row = static_cast<Eigen::Index>(i);
                emb[role].appearance.row(row) = c.appearance.template cast<double>().transpose();
                emb[role].geometry.row(row) = c.geometry.template cast<double>().transpose();
                emb[role].combined.row(row) = c.combined.template cast<double>().transpose();
                ev.pattern = splitmix64(ev.pattern ^ c.sign_pattern());
            }
        }
        Eigen::MatrixXd weights(layout_.cfg.n_classes, dp);
        for (Eigen::Index j = 0; j < weights.rows(); ++j)
            for (Eigen::Index k = 0; k < dp; ++k)
                weights(j, k) = static_cast<double>(values[layout_.classifier + static_cast<std::size_t>(j * dp + k)]);
        const auto r = total_loss(emb[0], emb[1], emb[2], batch_.labels_input, batch_.labels_neighbor, batch_.phi_g,
                                  weights, loss_);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const double hinge = cosine_similarity(emb[0].geometry.row(row).transpose(),
                                                   emb[1].geometry.row(row).transpose())
                                     .value -
                                 loss_.alpha_g * batch_.phi_g[i];
            ev.pattern = splitmix64(ev.pattern ^ (hinge >= 0.0 ? 0x51ull : 0x73ull));
        }
        ev.loss = r.value;
        if (grad) {
            grad->assign(layout_.total, S(0));
            const EmbeddingBatch* d_out[3] = {&r.d_input, &r.d_neighbor, &r.d_warped};
            for (std::size_t i = 0; i < n; ++i) {
                for (int role = 0; role < 3; ++role) {
                    const auto row = static_cast<Eigen::Index>(i);
                    const VecX<S> da = d_out[role]->appearance.row(row).transpose().template cast<S>();
                    const VecX<S> dg = d_out[role]->geometry.row(row).transpose().template cast<S>();
                    const VecX<S> dz = d_out[role]->combined.row(row).transpose().template cast<S>();
                    backward_typed<S>(layout_, values, caches[3 * i + static_cast<std::size_t>(role)], da, dg, dz,
                                      *grad, nullptr);
                }
            }
            for (Eigen::Index j = 0; j < weights.rows(); ++j)
                for (Eigen::Index k = 0; k < dp; ++k)
                    (*grad)[layout_.classifier + static_cast<std::size_t>(j * dp + k)] +=
                        static_cast<S>(r.d_weights(j, k));
        }
        return ev;
    }

private:
    const NetLayout& layout_;
    const TripletBatch& batch_;
    const LossConfig& loss_;
};

template <typename S>
GradCheckReport run_check(const NetLayout& layout, std::vector<S> values, const TripletBatch& batch,
                          const GradCheckOptions& opts) {
    const LossProbe<S> probe(layout, batch, opts.loss);
    std::vector<S> analytic;
    const Evaluation base = probe.evaluate(values, &analytic);
    if (opts.corrupt_index >= 0 && static_cast<std::size_t>(opts.corrupt_index) < analytic.size())
        analytic[static_cast<std::size_t>(opts.corrupt_index)] = -analytic[static_cast<std::size_t>(opts.corrupt_index)];

    const bool f64 = opts.precision == Precision::F64;
    const int order = opts.order > 0 ? opts.order : (f64 ? 4 : 2);
    if (order != 2 && order != 4) throw Error(ErrorCode::InvalidArgument, "finite-difference order must be 2 or 4");
    const double h = opts.step > 0.0 ? opts.step : (f64 ? 1e-4 : 1e-3);
    GradCheckReport rep;
    rep.parameters = values.size();
    rep.tolerance = opts.tolerance;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const S orig = values[k];
        bool kink = false;
        // Loss at orig + m h; returns the realized step so f32 rounding is accounted for.
        auto at = [&](double m, double* realized) {
            values[k] = static_cast<S>(static_cast<double>(orig) + m * h);
            *realized = static_cast<double>(values[k]) - static_cast<double>(orig);
            const Evaluation e = probe.evaluate(values, nullptr);
            kink = kink || e.pattern != base.pattern;
            return e.loss;
        };
        double sp = 0, sm = 0;
        const double fp = at(1.0, &sp), fm = at(-1.0, &sm);
        double numeric = (fp - fm) / (sp - sm);
        if (order == 4) {
            double sp2 = 0, sm2 = 0;
            const double fp2 = at(2.0, &sp2), fm2 = at(-2.0, &sm2);
            // Richardson combination of the h and 2h central differences.
            numeric = (4.0 * numeric - (fp2 - fm2) / (sp2 - sm2)) / 3.0;
        }
        values[k] = orig;
        if (kink) {
            ++rep.skipped_kinks;
            continue;
        }
        const double err = gradient_rel_error(static_cast<double>(analytic[k]), numeric);
        ++rep.checked;
        if (err > rep.max_rel_error) {
            rep.max_rel_error = err;
            rep.worst_index = k;
        }
    }
    rep.passed = rep.checked > 0 && rep.max_rel_error < opts.tolerance;
    return rep;
}

}  // namespace

GradCheckReport grad_check(const NetConfig& cfg, std::uint64_t seed, const GradCheckOptions& opts) {
    if (opts.batch < 1) throw Error(ErrorCode::InvalidArgument, "gradient check batch must be >= 1");
    NetParams params = init_params(cfg, seed);
    const NetLayout& layout = params.layout();
    {
        // Nonzero biases and distinct slopes so every parameter has a generic gradient.
        CounterRng rng{seed, 0x9c4ec4ull};
        auto v = params.mutable_values();
        for (const auto& u : layout.convs) {
            for (int o = 0; o < u.out_c; ++o) v[u.bias + static_cast<std::size_t>(o)] = rng.uniform(-0.1, 0.1);
            v[u.slope] = rng.uniform(0.1, 0.4);
        }
        for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.d); ++i) {
            v[layout.app_bias + i] = rng.uniform(-0.1, 0.1);
            v[layout.geo_bias + i] = rng.uniform(-0.1, 0.1);
        }
        for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.d_prime); ++i)
            v[layout.comb_bias + i] = rng.uniform(-0.1, 0.1);
    }

    CounterRng rng{seed, 0xba7c4ull};
    TripletBatch batch;
    for (int i = 0; i < opts.batch; ++i) {
        for (int role = 0; role < 3; ++role) {
            ImageBuffer img(cfg.width, cfg.height, cfg.channels);
            for (double& px : img.data()) px = rng.uniform(-1.0, 1.0);
            batch.images.push_back(std::move(img));
        }
        batch.labels_input.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(cfg.n_classes))));
        batch.labels_neighbor.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(cfg.n_classes))));
        batch.phi_g.push_back(rng.uniform(0.0, 0.15));
    }
    // Keep every hinge at least 1e-3 away from its kink.
    for (int i = 0; i < opts.batch; ++i) {
        const auto gi = forward(params, batch.images[3 * static_cast<std::size_t>(i)]).embeddings.geometry;
        const auto gp = forward(params, batch.images[3 * static_cast<std::size_t>(i) + 1]).embeddings.geometry;
        const double phi_cos = cosine_similarity(gi, gp).value;
        double& phi = batch.phi_g[static_cast<std::size_t>(i)];
        while (opts.loss.alpha_g > 0.0 && std::abs(phi_cos - opts.loss.alpha_g * phi) < 1e-3) phi += 2e-3 / opts.loss.alpha_g;
    }

    if (opts.precision == Precision::F64)
        return run_check<double>(layout, std::vector<double>(params.values().begin(), params.values().end()), batch,
                                 opts);
    std::vector<float> vf(params.values().size());
    for (std::size_t i = 0; i < vf.size(); ++i) vf[i] = static_cast<float>(params.values()[i]);
    return run_check<float>(layout, std::move(vf), batch, opts);
}

}  // namespace dag
