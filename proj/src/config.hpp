#pragma once

#include "eval.hpp"
#include "losses.hpp"
#include "net.hpp"
#include "synthetic.hpp"
#include "trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dag {

struct PairSettings {
    int sheet_rows = 8;  // rows of the (x_i, x_i', x_hat) contact sheet
};

struct EvalSettings {
    std::vector<double> far_targets{1e-2, 1e-3};
    int verification_folds = 10;
    std::size_t impostor_pairs = 0;  // balanced accuracy sample; 0 means one per genuine pair
    int probe_identities = 600;      // fresh identities for the latent and attribute probes
    int probe_folds = 5;
    int knn_k = 6;
    int knn_probes = 4;
    AttributeProbeConfig attribute;
    int permutations = 20;
};

struct SweepSettings {
    std::vector<double> lambda_a{0.0, 1.3, 2.0};
    std::vector<double> lambda_g{0.0, 0.75, 2.0};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    int epochs = 20;
};

struct GradcheckSettings {
    NetConfig net;  // small network; defaults below in RunConfig
    int batch = 2;
    double tolerance = 1e-4;
    Precision precision = Precision::F64;
};

// Everything a run needs. Scalar keys are addressed as "section.key"; the
// top-level keys are "seed" and "out_dir".
struct RunConfig {
    RunConfig();

    std::uint64_t seed = 1;
    std::filesystem::path out_dir = "runs";
    DatasetParams dataset;
    NetConfig net;  // width/height follow dataset.image_size, n_classes the train split
    LossConfig loss;
    TrainConfig train;
    bool train_baseline = true;  // also train the lambda_a = lambda_g = 0 model
    PairSettings pair;
    EvalSettings eval;
    SweepSettings sweep;
    GradcheckSettings gradcheck;

    void validate() const;
    // Resolved configuration as YAML in a fixed key order; out_dir is omitted.
    std::string canonical() const;
    std::string hash() const;  // 16 hex digits of the canonical text's hash
    std::filesystem::path run_dir() const { return out_dir / hash(); }
};

// Applies mapping keys from YAML text, then each "section.key=value"
// override. loss.preset is applied before the other loss keys. Unknown keys
// and ill-typed values throw Config naming the key.
RunConfig parse_config(std::string_view yaml_text, const std::vector<std::string>& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Every accepted key, for documentation and tests.
std::vector<std::string> config_keys();

}  // namespace dag
