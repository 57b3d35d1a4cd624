#include "trainer.hpp"

#include "common.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "text_io.hpp"
#include "tps.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace dag {

void TrainConfig::validate() const {
    if (batch_size < 1) throw Error(ErrorCode::Config, "train.batch_size must be >= 1");
    if (epochs < 0) throw Error(ErrorCode::Config, "train.epochs must be >= 0");
    if (decay_interval_epochs < 1) throw Error(ErrorCode::Config, "train.decay_interval_epochs must be >= 1");
    if (!(lr_floor >= 0.0)) throw Error(ErrorCode::Config, "train.lr_floor must be >= 0");
    if (!(lr_init >= lr_floor)) throw Error(ErrorCode::Config, "train.lr_init must be >= train.lr_floor");
    if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw Error(ErrorCode::Config, "train.lr_decay must lie in (0, 1)");
    if (pool_size < 1) throw Error(ErrorCode::Config, "train.pool_size must be >= 1");
    if (!(grad_clip_norm >= 0.0)) throw Error(ErrorCode::Config, "train.grad_clip_norm must be >= 0");
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw Error(ErrorCode::InvalidArgument, "epoch must be >= 0");
    const double lr = cfg.lr_init * std::pow(cfg.lr_decay, epoch / cfg.decay_interval_epochs);
    return lr <= cfg.lr_floor ? cfg.lr_floor : lr;
}

TripletSet build_triplets(std::span<const FaceRecord> aligned, std::span<const std::size_t> members,
                          const CanonicalFrame& frame, int pool_size, std::uint64_t seed) {
    if (pool_size < 1) throw Error(ErrorCode::InvalidArgument, "pool_size must be >= 1");
    std::vector<NeighborEntry> entries;
    entries.reserve(members.size());
    for (std::size_t m : members) {
        if (m >= aligned.size()) throw Error(ErrorCode::InvalidArgument, "triplet member out of range");
        entries.push_back({aligned[m].record_id, aligned[m].identity, aligned[m].landmarks});
    }
    const NeighborIndex index(std::move(entries));
    const std::size_t n = members.size();

    struct Slot {
        std::optional<TripletItem> item;
        std::string warning;
    };
    std::vector<Slot> slots(n);
    parallel_for(n, [&](std::size_t q) {
        const FaceRecord& rec = aligned[members[q]];
        // Pool: up to pool_size other members, drawn without replacement.
        std::vector<std::size_t> others;
        others.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j)
            if (j != q) others.push_back(j);
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(pool_size), others.size());
        CounterRng rng{seed, 0x7091ull, static_cast<std::uint64_t>(rec.record_id)};
        for (std::size_t j = 0; j < take; ++j) std::swap(others[j], others[j + rng.index(others.size() - j)]);
        others.resize(take);
        std::sort(others.begin(), others.end());
        try {
            const std::int64_t nb = select_geometric_neighbor(rec.record_id, index, std::span<const std::size_t>(others));
            const FaceRecord& partner = aligned[members[index.position(nb)]];
            TripletItem item;
            item.input = rec;
            item.neighbor = partner;
            item.warped = make_identical_face(rec, partner, frame);
            item.phi_g = landmark_disparity(rec.landmarks, partner.landmarks);
            slots[q].item = std::move(item);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoNeighbor && e.code() != ErrorCode::SingularConfiguration) throw;
            slots[q].warning = fmt::format("record {} skipped: {}", rec.record_id, e.what());
        }
    });

    TripletSet out;
    for (auto& s : slots) {
        if (s.item) {
            out.items.push_back(std::move(*s.item));
        } else {
            ++out.skipped;
            out.warnings.push_back(std::move(s.warning));
        }
    }
    return out;
}

std::string epoch_log_header() { return "epoch,lr,loss_total,loss_id,loss_app,loss_geo,cos_geo,cos_app,train_acc"; }

std::string epoch_log_row(const EpochLog& e) {
    return fmt::format("{},{},{},{},{},{},{},{},{}", e.epoch, format_double(e.lr), format_double(e.loss_total),
                       format_double(e.loss_id), format_double(e.loss_app), format_double(e.loss_geo),
                       format_double(e.cos_geo), format_double(e.cos_app), format_double(e.train_acc));
}

ClassMap::ClassMap(std::span<const TripletItem> items) {
    for (const auto& t : items) {
        index_.emplace(t.input.identity, 0);
        index_.emplace(t.neighbor.identity, 0);
    }
    int next = 0;
    for (auto& [id, cls] : index_) cls = next++;
}

int ClassMap::operator()(int identity) const {
    const auto it = index_.find(identity);
    if (it == index_.end()) throw Error(ErrorCode::InvalidArgument, fmt::format("identity {} has no class", identity));
    return it->second;
}

namespace {

struct BatchStats {
    double weight = 0.0;
    double total = 0.0, id = 0.0, app = 0.0, geo = 0.0, cos_geo = 0.0, cos_app = 0.0;
    double correct = 0.0;

    void add(const TotalLossResult& r, std::size_t n, double cg, double ca) {
        const double w = static_cast<double>(n);
        weight += w;
        total += w * r.value;
        id += w * r.id_mean;
        app += w * r.appearance;
        geo += w * r.geometry;
        cos_geo += cg;
        cos_app += ca;
        correct += static_cast<double>(r.correct);
    }

    EpochLog finish(int epoch, double lr) const {
        EpochLog e;
        e.epoch = epoch;
        e.lr = lr;
        if (weight > 0.0) {
            e.loss_total = total / weight;
            e.loss_id = id / weight;
            e.loss_app = app / weight;
            e.loss_geo = geo / weight;
            e.cos_geo = cos_geo / weight;
            e.cos_app = cos_app / weight;
            e.train_acc = correct / (2.0 * weight);
        }
        return e;
    }
};

class BatchRunner {
public:
    BatchRunner(const NetLayout& layout, const LossConfig& loss, std::span<const TripletItem> triplets,
                const ClassMap& classes, int threads)
        : layout_(layout), loss_(loss), triplets_(triplets), threads_(threads) {
        labels_input_.reserve(triplets.size());
        labels_neighbor_.reserve(triplets.size());
        for (const auto& t : triplets) {
            labels_input_.push_back(classes(t.input.identity));
            labels_neighbor_.push_back(classes(t.neighbor.identity));
        }
    }

    // Forward pass and loss on one batch. With `grad` the summed parameter
    // gradient is written there as well.
    TotalLossResult run(std::span<const double> values, const Eigen::MatrixXd& weights,
                        std::span<const std::size_t> batch, std::vector<double>* grad, double& cos_geo,
                        double& cos_app, const std::optional<std::filesystem::path>& dump_dir) {
        const std::size_t n = batch.size();
        caches_.resize(3 * n);
        parallel_for(
            3 * n,
            [&](std::size_t k) {
                const TripletItem& t = triplets_[batch[k / 3]];
                const FaceRecord& rec = k % 3 == 0 ? t.input : (k % 3 == 1 ? t.neighbor : t.warped);
                caches_[k] = forward_typed<double>(layout_, values, rec.image);
            },
            threads_);

        EmbeddingBatch emb[3];
        for (auto& e : emb) {
            e.appearance.resize(static_cast<Eigen::Index>(n), layout_.cfg.d);
            e.geometry.resize(static_cast<Eigen::Index>(n), layout_.cfg.d);
            e.combined.resize(static_cast<Eigen::Index>(n), layout_.cfg.d_prime);
        }
        std::vector<int> li(n), ln(n);
        std::vector<double> phi(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            for (int role = 0; role < 3; ++role) {
                const auto& c = caches_[3 * i + static_cast<std::size_t>(role)];
                emb[role].appearance.row(row) = c.appearance.transpose();
                emb[role].geometry.row(row) = c.geometry.transpose();
                emb[role].combined.row(row) = c.combined.transpose();
            }
            li[i] = labels_input_[batch[i]];
            ln[i] = labels_neighbor_[batch[i]];
            phi[i] = triplets_[batch[i]].phi_g;
        }
        TotalLossResult r = total_loss(emb[0], emb[1], emb[2], li, ln, phi, weights, loss_);

        cos_geo = cos_app = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            cos_geo += cosine_similarity(emb[0].geometry.row(row).transpose(), emb[2].geometry.row(row).transpose()).value;
            cos_app +=
                cosine_similarity(emb[1].appearance.row(row).transpose(), emb[2].appearance.row(row).transpose()).value;
        }

        if (!std::isfinite(r.value)) fail(batch, r, dump_dir);
        if (!grad) return r;

        // Per-item buffers reduced in item order keep the sum independent of
        // the worker count.
        const std::size_t total = layout_.total;
        item_grads_.resize(n);
        const bool warped_active = r.d_warped.appearance.squaredNorm() + r.d_warped.geometry.squaredNorm() > 0.0;
        const EmbeddingBatch* d_out[3] = {&r.d_input, &r.d_neighbor, &r.d_warped};
        parallel_for(
            n,
            [&](std::size_t i) {
                auto& buf = item_grads_[i];
                buf.assign(total, 0.0);
                const auto row = static_cast<Eigen::Index>(i);
                for (int role = 0; role < 3; ++role) {
                    if (role == 2 && !warped_active) continue;
                    const Eigen::VectorXd da = d_out[role]->appearance.row(row).transpose();
                    const Eigen::VectorXd dg = d_out[role]->geometry.row(row).transpose();
                    const Eigen::VectorXd dz = d_out[role]->combined.row(row).transpose();
                    backward_typed<double>(layout_, values, caches_[3 * i + static_cast<std::size_t>(role)], da, dg,
                                           dz, buf, nullptr);
                }
            },
            threads_);
        grad->assign(total, 0.0);
        for (const auto& buf : item_grads_)
            for (std::size_t k = 0; k < total; ++k) (*grad)[k] += buf[k];
        const Eigen::Index dp = layout_.cfg.d_prime;
        for (Eigen::Index j = 0; j < r.d_weights.rows(); ++j)
            for (Eigen::Index k = 0; k < dp; ++k)
                (*grad)[layout_.classifier + static_cast<std::size_t>(j * dp + k)] += r.d_weights(j, k);
        for (double g : *grad)
            if (!std::isfinite(g)) fail(batch, r, dump_dir);
        return r;
    }

private:
    [[noreturn]] void fail(std::span<const std::size_t> batch, const TotalLossResult& r,
                           const std::optional<std::filesystem::path>& dump_dir) const {
        std::string dump = fmt::format("loss_total={} loss_id_input={} loss_id_neighbor={} loss_app={} loss_geo={}\n",
                                       r.value, r.id_input, r.id_neighbor, r.appearance, r.geometry);
        dump += "input_record,neighbor_record,phi_g\n";
        for (std::size_t b : batch) {
            const auto& t = triplets_[b];
            dump += fmt::format("{},{},{}\n", t.input.record_id, t.neighbor.record_id, format_double(t.phi_g));
        }
        std::string where;
        if (dump_dir) {
            std::filesystem::create_directories(*dump_dir);
            const auto path = *dump_dir / "nonfinite_batch.txt";
            write_text(path, dump);
            where = " (batch dumped to " + path.string() + ")";
        }
        throw Error(ErrorCode::NonFiniteLoss, "non-finite loss or gradient during training" + where);
    }

    const NetLayout& layout_;
    const LossConfig& loss_;
    std::span<const TripletItem> triplets_;
    int threads_;
    std::vector<int> labels_input_, labels_neighbor_;
    std::vector<ForwardCache<double>> caches_;
    std::vector<std::vector<double>> item_grads_;
};

}  // namespace

TrainResult train(const TrainConfig& cfg, const LossConfig& loss, const NetConfig& net,
                  std::span<const TripletItem> triplets, const ClassMap& classes, const TrainOptions& opts) {
    cfg.validate();
    loss.validate();
    net.validate();
    if (net.n_classes != classes.size())
        throw Error(ErrorCode::Config, fmt::format("net.n_classes is {} but the triplets cover {} identities",
                                                   net.n_classes, classes.size()));
    if (triplets.empty()) throw Error(ErrorCode::InvalidArgument, "no triplets to train on");
    for (const auto& t : triplets) {
        if (t.input.image.width() != net.width || t.input.image.height() != net.height ||
            t.input.image.channels() != net.channels)
            throw Error(ErrorCode::Config, "image size does not match the network input");
    }

    TrainResult result{opts.init ? *opts.init : init_params(net, cfg.seed), NetParams(net), {}};
    if (result.params.config().hash() != net.hash())
        throw Error(ErrorCode::Config, "initial parameters belong to another network configuration");
    NetParams& params = result.params;
    const int threads = opts.threads > 0 ? opts.threads : worker_count();
    BatchRunner runner(params.layout(), loss, triplets, classes, threads);

    std::vector<std::size_t> order(triplets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

    // Row 0: the untrained model over the same batching, no updates.
    {
        BatchStats st;
        const Eigen::MatrixXd w = params.classifier();
        for (std::size_t b = 0; b < order.size(); b += bs) {
            const std::span<const std::size_t> batch(order.data() + b, std::min(bs, order.size() - b));
            double cg = 0.0, ca = 0.0;
            const auto r = runner.run(params.values(), w, batch, nullptr, cg, ca, opts.dump_dir);
            st.add(r, batch.size(), cg, ca);
        }
        result.log.push_back(st.finish(0, lr_schedule(0, cfg)));
        if (opts.on_epoch) opts.on_epoch(result.log.back());
    }
    result.best = params;
    double best_loss = result.log.back().loss_total;

    std::vector<double> grad;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);
        CounterRng rng{cfg.seed, 0x5b0ffull, static_cast<std::uint64_t>(epoch)};
        rng.shuffle(order);
        BatchStats st;
        for (std::size_t b = 0; b < order.size(); b += bs) {
            const std::span<const std::size_t> batch(order.data() + b, std::min(bs, order.size() - b));
            double cg = 0.0, ca = 0.0;
            const auto r = runner.run(params.values(), params.classifier(), batch, &grad, cg, ca, opts.dump_dir);
            st.add(r, batch.size(), cg, ca);
            double scale = 1.0;
            if (cfg.grad_clip_norm > 0.0) {
                double sq = 0.0;
                for (double g : grad) sq += g * g;
                const double norm = std::sqrt(sq);
                if (norm > cfg.grad_clip_norm) scale = cfg.grad_clip_norm / norm;
            }
            auto v = params.mutable_values();
            for (std::size_t k = 0; k < v.size(); ++k) v[k] -= lr * (scale * grad[k]);
        }
        result.log.push_back(st.finish(epoch + 1, lr));
        if (opts.on_epoch) opts.on_epoch(result.log.back());
        // "Best" is the end-of-epoch state of the epoch with the lowest mean training loss.
        if (result.log.back().loss_total < best_loss) {
            best_loss = result.log.back().loss_total;
            result.best = params;
        }
    }
    return result;
}

}  // namespace dag
