#include "config.hpp"

#include "common.hpp"
#include "text_io.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <functional>
#include <map>

namespace dag {

RunConfig::RunConfig() {
    gradcheck.net.width = 8;
    gradcheck.net.height = 8;
    gradcheck.net.trunk = parse_trunk("conv4s2,res,conv8s2,res");
    gradcheck.net.d = 4;
    gradcheck.net.d_prime = 8;
    gradcheck.net.n_classes = 3;
}

namespace {

[[noreturn]] void bad_value(const std::string& key, const std::string& why) {
    throw Error(ErrorCode::Config, fmt::format("config key '{}': {}", key, why));
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& key) {
    if (!n.IsScalar()) bad_value(key, "expected a scalar");
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        bad_value(key, fmt::format("cannot read '{}' as the expected type", n.Scalar()));
    }
}

int as_int(const YAML::Node& n, const std::string& key) { return scalar<int>(n, key); }
double as_double(const YAML::Node& n, const std::string& key) { return scalar<double>(n, key); }
std::uint64_t as_u64(const YAML::Node& n, const std::string& key) { return scalar<std::uint64_t>(n, key); }
bool as_bool(const YAML::Node& n, const std::string& key) { return scalar<bool>(n, key); }
std::string as_string(const YAML::Node& n, const std::string& key) { return scalar<std::string>(n, key); }

template <typename T>
std::vector<T> as_list(const YAML::Node& n, const std::string& key) {
    if (!n.IsSequence()) bad_value(key, "expected a list");
    std::vector<T> out;
    for (const auto& item : n) out.push_back(scalar<T>(item, key));
    if (out.empty()) bad_value(key, "list must not be empty");
    return out;
}

using Setter = std::function<void(RunConfig&, const YAML::Node&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        t["seed"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.seed = as_u64(n, k); };
        t["out_dir"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.out_dir = as_string(n, k); };

        t["dataset.n_identities"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.dataset.n_identities = as_int(n, k); };
        t["dataset.per_identity"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.dataset.per_identity = as_int(n, k); };
        t["dataset.image_size"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.dataset.image_size = as_int(n, k); };
        t["dataset.noise_level"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.dataset.noise_level = as_double(n, k); };
        t["dataset.seed"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.dataset.seed = as_u64(n, k); };

        t["net.trunk"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) {
            try {
                c.net.trunk = parse_trunk(as_string(n, k));
            } catch (const Error& e) {
                bad_value(k, e.what());
            }
        };
        t["net.d"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.net.d = as_int(n, k); };
        t["net.d_prime"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.net.d_prime = as_int(n, k); };

        t["loss.preset"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) {
            try {
                c.loss = LossConfig::preset(as_string(n, k));
            } catch (const Error& e) {
                bad_value(k, e.what());
            }
        };
        t["loss.m1"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.loss.m1 = as_int(n, k); };
        t["loss.m2"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.loss.m2 = as_double(n, k); };
        t["loss.s"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) {
            if (n.IsScalar() && n.Scalar() == "embedding-norm") {
                c.loss.scale_mode = ScaleMode::EmbeddingNorm;
            } else {
                c.loss.scale_mode = ScaleMode::Fixed;
                c.loss.s = as_double(n, k);
            }
        };
        t["loss.alpha_g"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.loss.alpha_g = as_double(n, k); };
        t["loss.lambda_a"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.loss.lambda_a = as_double(n, k); };
        t["loss.lambda_g"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.loss.lambda_g = as_double(n, k); };
        t["loss.monotonic_psi"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.loss.monotonic_psi = as_bool(n, k); };

        t["train.batch_size"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.train.batch_size = as_int(n, k); };
        t["train.lr_init"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.train.lr_init = as_double(n, k); };
        t["train.lr_decay"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.train.lr_decay = as_double(n, k); };
        t["train.decay_interval_epochs"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.train.decay_interval_epochs = as_int(n, k); };
        t["train.lr_floor"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.train.lr_floor = as_double(n, k); };
        t["train.epochs"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.train.epochs = as_int(n, k); };
        t["train.pool_size"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.train.pool_size = as_int(n, k); };
        t["train.grad_clip_norm"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.train.grad_clip_norm = as_double(n, k); };
        t["train.baseline"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.train_baseline = as_bool(n, k); };

        t["pair.sheet_rows"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.pair.sheet_rows = as_int(n, k); };

        t["eval.far_targets"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.far_targets = as_list<double>(n, k); };
        t["eval.verification_folds"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.verification_folds = as_int(n, k); };
        t["eval.impostor_pairs"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.impostor_pairs = static_cast<std::size_t>(as_u64(n, k)); };
        t["eval.probe_identities"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.probe_identities = as_int(n, k); };
        t["eval.probe_folds"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.probe_folds = as_int(n, k); };
        t["eval.knn_k"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.knn_k = as_int(n, k); };
        t["eval.knn_probes"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.knn_probes = as_int(n, k); };
        t["eval.attribute_lr"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.attribute.lr = as_double(n, k); };
        t["eval.attribute_lr_decay"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.attribute.lr_decay = as_double(n, k); };
        t["eval.attribute_decay_interval_epochs"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.attribute.decay_interval_epochs = as_int(n, k); };
        t["eval.attribute_epochs"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.attribute.epochs = as_int(n, k); };
        t["eval.permutations"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.eval.permutations = as_int(n, k); };

        t["sweep.lambda_a"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.sweep.lambda_a = as_list<double>(n, k); };
        t["sweep.lambda_g"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.sweep.lambda_g = as_list<double>(n, k); };
        t["sweep.seeds"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.sweep.seeds = as_list<std::uint64_t>(n, k); };
        t["sweep.epochs"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.sweep.epochs = as_int(n, k); };

        t["gradcheck.width"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.gradcheck.net.width = as_int(n, k); };
        t["gradcheck.height"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.gradcheck.net.height = as_int(n, k); };
        t["gradcheck.trunk"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) {
            try {
                c.gradcheck.net.trunk = parse_trunk(as_string(n, k));
            } catch (const Error& e) {
                bad_value(k, e.what());
            }
        };
        t["gradcheck.d"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.gradcheck.net.d = as_int(n, k); };
        t["gradcheck.d_prime"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.gradcheck.net.d_prime = as_int(n, k); };
        t["gradcheck.classes"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.gradcheck.net.n_classes = as_int(n, k); };
        t["gradcheck.batch"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.gradcheck.batch = as_int(n, k); };
        t["gradcheck.tolerance"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) { c.gradcheck.tolerance = as_double(n, k); };
        t["gradcheck.precision"] = [](RunConfig& c, const YAML::Node& n, const std::string& k) {
            const std::string p = as_string(n, k);
            if (p == "f64")
                c.gradcheck.precision = Precision::F64;
            else if (p == "f32")
                c.gradcheck.precision = Precision::F32;
            else
                bad_value(k, "expected f64 or f32");
        };
        return t;
    }();
    return table;
}

void collect(const YAML::Node& root, std::map<std::string, YAML::Node>& out) {
    if (!root || root.IsNull()) return;
    if (!root.IsMap()) throw Error(ErrorCode::Config, "config must be a mapping of sections");
    const auto& table = setters();
    for (const auto& entry : root) {
        const std::string top = entry.first.as<std::string>();
        if (table.count(top)) {
            out[top] = entry.second;
            continue;
        }
        const std::string prefix = top + ".";
        const bool is_section = table.lower_bound(prefix) != table.end() &&
                                table.lower_bound(prefix)->first.compare(0, prefix.size(), prefix) == 0;
        if (!is_section) throw Error(ErrorCode::Config, fmt::format("unknown config key '{}'", top));
        if (!entry.second.IsMap() && !entry.second.IsNull())
            throw Error(ErrorCode::Config, fmt::format("config section '{}' must be a mapping", top));
        for (const auto& sub : entry.second) {
            const std::string key = prefix + sub.first.as<std::string>();
            if (!table.count(key)) throw Error(ErrorCode::Config, fmt::format("unknown config key '{}'", key));
            out[key] = sub.second;
        }
    }
}

std::string list_text(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
    return s + "]";
}

std::string list_text(const std::vector<std::uint64_t>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s + "]";
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, v] : setters()) keys.push_back(k);
    return keys;
}

RunConfig parse_config(std::string_view yaml_text, const std::vector<std::string>& overrides) {
    std::map<std::string, YAML::Node> values;
    try {
        collect(YAML::Load(std::string(yaml_text)), values);
    } catch (const YAML::Exception& e) {
        throw Error(ErrorCode::Config, fmt::format("malformed config: {}", e.what()));
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw Error(ErrorCode::Config, fmt::format("override '{}' is not key=value", o));
        const std::string key = o.substr(0, eq);
        if (!setters().count(key)) throw Error(ErrorCode::Config, fmt::format("unknown config key '{}'", key));
        try {
            values[key] = YAML::Load(o.substr(eq + 1));
        } catch (const YAML::Exception& e) {
            throw Error(ErrorCode::Config, fmt::format("override '{}': {}", o, e.what()));
        }
    }
    RunConfig cfg;
    const auto& table = setters();
    if (const auto it = values.find("loss.preset"); it != values.end()) table.at(it->first)(cfg, it->second, it->first);
    for (const auto& [key, node] : values)
        if (key != "loss.preset") table.at(key)(cfg, node, key);
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::MissingInput, fmt::format("config file {} not found", path.string()));
    return parse_config(read_text(path), overrides);
}

void RunConfig::validate() const {
    if (dataset.n_identities < 2) throw Error(ErrorCode::Config, "dataset.n_identities must be >= 2");
    if (dataset.per_identity < 2) throw Error(ErrorCode::Config, "dataset.per_identity must be >= 2");
    if (dataset.image_size < 8) throw Error(ErrorCode::Config, "dataset.image_size must be >= 8");
    if (!(dataset.noise_level >= 0.0 && dataset.noise_level <= 0.1))
        throw Error(ErrorCode::Config, "dataset.noise_level must lie in [0, 0.1]");
    NetConfig n = net;
    n.width = n.height = dataset.image_size;
    n.channels = 1;
    n.validate();
    loss.validate();
    train.validate();
    if (pair.sheet_rows < 1) throw Error(ErrorCode::Config, "pair.sheet_rows must be >= 1");
    for (double f : eval.far_targets)
        if (!(f > 0.0 && f < 1.0)) throw Error(ErrorCode::Config, "eval.far_targets must lie in (0, 1)");
    if (eval.verification_folds < 2) throw Error(ErrorCode::Config, "eval.verification_folds must be >= 2");
    if (eval.probe_folds < 2) throw Error(ErrorCode::Config, "eval.probe_folds must be >= 2");
    if (eval.probe_identities < 2 * eval.probe_folds)
        throw Error(ErrorCode::Config, "eval.probe_identities must be at least twice eval.probe_folds");
    if (eval.knn_k < 1 || eval.knn_probes < 1) throw Error(ErrorCode::Config, "eval.knn_k and eval.knn_probes must be >= 1");
    if (!(eval.attribute.lr >= 0.0) || !(eval.attribute.lr_decay > 0.0 && eval.attribute.lr_decay <= 1.0) ||
        eval.attribute.decay_interval_epochs < 1 || eval.attribute.epochs < 0)
        throw Error(ErrorCode::Config, "invalid eval.attribute_* schedule");
    if (eval.permutations < 2) throw Error(ErrorCode::Config, "eval.permutations must be >= 2");
    for (double l : sweep.lambda_a)
        if (!(l >= 0.0)) throw Error(ErrorCode::Config, "sweep.lambda_a values must be >= 0");
    for (double l : sweep.lambda_g)
        if (!(l >= 0.0)) throw Error(ErrorCode::Config, "sweep.lambda_g values must be >= 0");
    if (sweep.epochs < 0) throw Error(ErrorCode::Config, "sweep.epochs must be >= 0");
    gradcheck.net.validate();
    if (gradcheck.net.n_classes < 2) throw Error(ErrorCode::Config, "gradcheck.classes must be >= 2");
    if (gradcheck.batch < 1) throw Error(ErrorCode::Config, "gradcheck.batch must be >= 1");
    if (!(gradcheck.tolerance > 0.0)) throw Error(ErrorCode::Config, "gradcheck.tolerance must be > 0");
}

std::string RunConfig::canonical() const {
    const auto d = format_double;
    std::string s;
    s += fmt::format("seed: {}\n", seed);
    s += fmt::format("dataset:\n  n_identities: {}\n  per_identity: {}\n  image_size: {}\n  noise_level: {}\n  seed: {}\n",
                     dataset.n_identities, dataset.per_identity, dataset.image_size, d(dataset.noise_level),
                     dataset.seed);
    s += fmt::format("net:\n  trunk: \"{}\"\n  d: {}\n  d_prime: {}\n", format_trunk(net.trunk), net.d, net.d_prime);
    s += fmt::format("loss:\n  m1: {}\n  m2: {}\n  s: {}\n  alpha_g: {}\n  lambda_a: {}\n  lambda_g: {}\n  monotonic_psi: {}\n",
                     loss.m1, d(loss.m2), loss.scale_mode == ScaleMode::EmbeddingNorm ? "embedding-norm" : d(loss.s),
                     d(loss.alpha_g), d(loss.lambda_a), d(loss.lambda_g), loss.monotonic_psi);
    s += fmt::format(
        "train:\n  batch_size: {}\n  lr_init: {}\n  lr_decay: {}\n  decay_interval_epochs: {}\n  lr_floor: {}\n"
        "  epochs: {}\n  pool_size: {}\n  grad_clip_norm: {}\n  baseline: {}\n",
        train.batch_size, d(train.lr_init), d(train.lr_decay), train.decay_interval_epochs, d(train.lr_floor),
        train.epochs, train.pool_size, d(train.grad_clip_norm), train_baseline);
    s += fmt::format("pair:\n  sheet_rows: {}\n", pair.sheet_rows);
    s += fmt::format(
        "eval:\n  far_targets: {}\n  verification_folds: {}\n  impostor_pairs: {}\n  probe_identities: {}\n"
        "  probe_folds: {}\n  knn_k: {}\n  knn_probes: {}\n  attribute_lr: {}\n  attribute_lr_decay: {}\n"
        "  attribute_decay_interval_epochs: {}\n  attribute_epochs: {}\n  permutations: {}\n",
        list_text(eval.far_targets), eval.verification_folds, eval.impostor_pairs, eval.probe_identities,
        eval.probe_folds, eval.knn_k, eval.knn_probes, d(eval.attribute.lr), d(eval.attribute.lr_decay),
        eval.attribute.decay_interval_epochs, eval.attribute.epochs, eval.permutations);
    s += fmt::format("sweep:\n  lambda_a: {}\n  lambda_g: {}\n  seeds: {}\n  epochs: {}\n", list_text(sweep.lambda_a),
                     list_text(sweep.lambda_g), list_text(sweep.seeds), sweep.epochs);
    s += fmt::format(
        "gradcheck:\n  width: {}\n  height: {}\n  trunk: \"{}\"\n  d: {}\n  d_prime: {}\n  classes: {}\n  batch: {}\n"
        "  tolerance: {}\n  precision: {}\n",
        gradcheck.net.width, gradcheck.net.height, format_trunk(gradcheck.net.trunk), gradcheck.net.d,
        gradcheck.net.d_prime, gradcheck.net.n_classes, gradcheck.batch, d(gradcheck.tolerance),
        gradcheck.precision == Precision::F64 ? "f64" : "f32");
    return s;
}

std::string RunConfig::hash() const { return hex64(fnv1a64(canonical())); }

}  // namespace dag
