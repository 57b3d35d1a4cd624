#pragma once

#include "face_record.hpp"
#include "landmarks.hpp"
#include "losses.hpp"
#include "net.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dag {

struct TrainConfig {
    int batch_size = 32;
    double lr_init = 0.1;
    double lr_decay = 0.9;
    int decay_interval_epochs = 5;
    double lr_floor = 1e-6;
    int epochs = 60;
    std::uint64_t seed = 1;
    int pool_size = 1000;
    // Rescales the batch gradient to this global L2 norm when it is larger; 0
    // disables. Guards against the runaway growth of |z| that the
    // embedding-norm scale can trigger at lr 0.1.
    double grad_clip_norm = 5.0;

    void validate() const;
};

// lr_init * lr_decay^floor(epoch / interval), held at lr_floor once it gets there.
double lr_schedule(int epoch, const TrainConfig& cfg);

// (x_i, x_{i'}, x_hat_{i'}) plus the landmark disparity phi_g(l_i, l_{i'}).
struct TripletItem {
    FaceRecord input;
    FaceRecord neighbor;
    FaceRecord warped;
    double phi_g = 0.0;
};

struct TripletSet {
    std::vector<TripletItem> items;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

// Pairs every record in `members` (positions into `aligned`) with a geometric
// neighbour drawn from a pool of up to pool_size different-identity members,
// then builds the warped face. Records without a candidate are skipped.
TripletSet build_triplets(std::span<const FaceRecord> aligned, std::span<const std::size_t> members,
                          const CanonicalFrame& frame, int pool_size, std::uint64_t seed);

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double loss_total = 0.0;
    double loss_id = 0.0;
    double loss_app = 0.0;
    double loss_geo = 0.0;
    double cos_geo = 0.0;  // mean Phi(g(x_i), g(x_hat))
    double cos_app = 0.0;  // mean Phi(a(x_i'), a(x_hat))
    double train_acc = 0.0;
};

std::string epoch_log_header();
std::string epoch_log_row(const EpochLog& e);

// Maps identity labels to contiguous class indices.
class ClassMap {
public:
    ClassMap() = default;
    explicit ClassMap(std::span<const TripletItem> items);
    int operator()(int identity) const;
    int size() const noexcept { return static_cast<int>(index_.size()); }

private:
    std::map<int, int> index_;
};

struct TrainResult {
    NetParams params;
    NetParams best;
    std::vector<EpochLog> log;  // row 0 is the untrained model
};

struct TrainOptions {
    std::optional<NetParams> init;                 // defaults to init_params(net, train.seed)
    std::optional<std::filesystem::path> dump_dir;  // non-finite loss diagnostics go here
    int threads = 0;                                // 0: worker_count()
    std::function<void(const EpochLog&)> on_epoch;  // called after each log row
};

// Mini-batch SGD on the total loss. Class weights live in the parameter
// vector and follow the same schedule.
TrainResult train(const TrainConfig& cfg, const LossConfig& loss, const NetConfig& net,
                  std::span<const TripletItem> triplets, const ClassMap& classes, const TrainOptions& opts = {});

}  // namespace dag
