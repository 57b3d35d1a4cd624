#pragma once

#include "config.hpp"
#include "eval.hpp"
#include "synthetic.hpp"
#include "trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dag {

// Layout of <out_dir>/<config hash>/.
struct RunPaths {
    std::filesystem::path root;

    std::filesystem::path data() const { return root / "data"; }
    std::filesystem::path pairs() const { return root / "pairs"; }
    std::filesystem::path train() const { return root / "train"; }
    std::filesystem::path baseline() const { return root / "baseline"; }
    std::filesystem::path eval() const { return root / "eval"; }
    std::filesystem::path sweep() const { return root / "sweep"; }
    std::filesystem::path gradcheck() const { return root / "gradcheck"; }
};

// Dataset plus its canonical frame (GPA over train-split landmarks) and the
// similarity-aligned copy of every record.
struct PreparedData {
    Dataset dataset;
    CanonicalFrame frame;
    std::vector<FaceRecord> aligned;  // parallel to dataset.records
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

PreparedData prepare_data(Dataset dataset);

// Triplet cache: triplets_<split>.csv (provenance, phi_g, full-precision
// x_hat landmarks), warped_<split>.bin (f64 images) and viewable PGMs.
void save_triplets(const std::filesystem::path& dir, const std::string& split, const TripletSet& set);
TripletSet load_triplets(const std::filesystem::path& dir, const std::string& split, const PreparedData& data);

NetConfig network_for(const RunConfig& cfg, int n_classes);
LossConfig baseline_loss(const LossConfig& loss);

TrainResult train_model(const RunConfig& cfg, const LossConfig& loss, std::uint64_t seed, int epochs,
                        const TripletSet& triplets, const TrainOptions& opts = {});

// Fresh identities (one aligned render each) for the latent and attribute
// probes; disjoint from every dataset identity.
struct ProbePopulation {
    std::vector<FaceRecord> records;
    Eigen::MatrixXd geo;         // rows: records, cols: geometry factors
    Eigen::MatrixXd app;         // appearance factors
    Eigen::MatrixXi attributes;  // 0/1
};

ProbePopulation make_probe_population(const RunConfig& cfg, const CanonicalFrame& frame);

struct RepresentationMetrics {
    Representation rep = Representation::Combined;
    double rank1 = 0.0;
    double verification_accuracy = 0.0;
    std::vector<double> tar;  // parallel to eval.far_targets
    RocCurve roc;
};

struct EvalReport {
    std::vector<RepresentationMetrics> reps;
    // R^2 of geometry / appearance factors from each embedding.
    ProbeReport geo_from_geometry, geo_from_appearance, app_from_geometry, app_from_appearance;
    double heldout_cos_geo = 0.0;  // mean Phi(g(x_i), g(x_hat)) over test triplets
    double heldout_cos_app = 0.0;  // mean Phi(a(x_i'), a(x_hat))
    AttributeProbeReport attributes;
    std::optional<AttributeProbeReport> baseline_attributes;
    PermutationBaseline permutation;
    std::size_t roc_genuine = 0, roc_impostor = 0;

    const RepresentationMetrics& metrics(Representation r) const;
};

EvalReport evaluate_model(const RunConfig& cfg, const NetParams& model, const NetParams* baseline,
                          const PreparedData& data, const TripletSet& test_triplets, const ProbePopulation& probes);

// Held-out verification accuracy of the combined embedding on the test split.
double heldout_verification_accuracy(const RunConfig& cfg, const NetParams& model, const PreparedData& data);

struct SweepCell {
    double lambda_a = 0.0;
    double lambda_g = 0.0;
    std::vector<std::uint64_t> seeds;
    std::vector<double> accuracy;  // per seed; NaN when that training failed
    std::vector<std::string> errors;
    std::string config_hash;

    double mean() const;  // over successful seeds; NaN if none
};

struct SweepResult {
    std::vector<double> lambda_a, lambda_g;
    std::vector<SweepCell> cells;  // row-major: lambda_a outer, lambda_g inner

    const SweepCell& at(std::size_t ia, std::size_t ig) const { return cells[ia * lambda_g.size() + ig]; }
};

SweepResult lambda_sweep(const RunConfig& cfg, const PreparedData& data, const TripletSet& train_triplets);

std::string sweep_csv(const SweepResult& r);
std::string sweep_heatmap(const SweepResult& r);
std::string training_log_csv(const std::vector<EpochLog>& log);
std::string training_curves_svg(const std::vector<EpochLog>& log, const std::string& title);
std::string metrics_csv(const RunConfig& cfg, const EvalReport& r);

// Commands behind the CLI. Each writes the resolved config to the run
// directory, holds a lock file while running, appends a timestamped line to
// run.log and returns a one-line summary.
std::string cmd_gen_data(const RunConfig& cfg);
std::string cmd_pair(const RunConfig& cfg);
std::string cmd_train(const RunConfig& cfg);
std::string cmd_eval(const RunConfig& cfg);
std::string cmd_sweep(const RunConfig& cfg);
// Throws Acceptance (after writing the report) when the check fails.
std::string cmd_gradcheck(const RunConfig& cfg);

std::string run_command(const std::string& name, const RunConfig& cfg);

}  // namespace dag
