#include "pipeline.hpp"

#include "common.hpp"
#include "parallel.hpp"
#include "plots.hpp"
#include "rng.hpp"
#include "text_io.hpp"
#include "tps.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>

namespace dag {

namespace fs = std::filesystem;

PreparedData prepare_data(Dataset dataset) {
    PreparedData p;
    p.train = dataset.indices(Split::Train);
    p.test = dataset.indices(Split::Test);
    if (p.train.empty() || p.test.empty()) throw Error(ErrorCode::InvalidArgument, "dataset needs train and test records");
    std::vector<LandmarkSet> shapes;
    shapes.reserve(p.train.size());
    for (std::size_t i : p.train) shapes.push_back(dataset.records[i].landmarks);
    const int w = dataset.records.front().image.width(), h = dataset.records.front().image.height();
    p.frame = build_canonical_frame(shapes, w, h);
    p.aligned.resize(dataset.records.size());
    parallel_for(dataset.records.size(), [&](std::size_t i) { p.aligned[i] = align_record(dataset.records[i], p.frame); });
    p.dataset = std::move(dataset);
    return p;
}

namespace {

static_assert(std::endian::native == std::endian::little, "image cache assumes a little-endian host");

constexpr char kBlobMagic[8] = {'D', 'A', 'G', 'I', 'M', 'G', '1', '\0'};

void save_image_blob(const fs::path& path, std::span<const ImageBuffer> images) {
    std::string out(kBlobMagic, sizeof kBlobMagic);
    auto put = [&](auto v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); };
    const ImageBuffer shape = images.empty() ? ImageBuffer{} : images.front();
    put(std::uint32_t{1});
    put(static_cast<std::uint32_t>(shape.width()));
    put(static_cast<std::uint32_t>(shape.height()));
    put(static_cast<std::uint32_t>(shape.channels()));
    put(static_cast<std::uint64_t>(images.size()));
    for (const auto& img : images) {
        if (img.width() != shape.width() || img.height() != shape.height() || img.channels() != shape.channels())
            throw Error(ErrorCode::InvalidArgument, "image cache needs equally sized images");
        out.append(reinterpret_cast<const char*>(img.data().data()), img.size() * sizeof(double));
    }
    write_text(path, out);
}

std::vector<ImageBuffer> load_image_blob(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MissingInput, "cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kBlobMagic, sizeof magic) != 0)
        throw Error(ErrorCode::Io, path.string() + ": not an image cache");
    auto get = [&](auto& v) {
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!in) throw Error(ErrorCode::Io, path.string() + ": truncated header");
    };
    std::uint32_t version = 0, w = 0, h = 0, c = 0;
    std::uint64_t count = 0;
    get(version), get(w), get(h), get(c), get(count);
    if (version != 1) throw Error(ErrorCode::Io, path.string() + ": unsupported cache version");
    std::vector<ImageBuffer> images;
    images.reserve(count);
    for (std::uint64_t k = 0; k < count; ++k) {
        ImageBuffer img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
        in.read(reinterpret_cast<char*>(img.data().data()), static_cast<std::streamsize>(img.size() * sizeof(double)));
        if (!in) throw Error(ErrorCode::Io, path.string() + ": truncated image data");
        images.push_back(std::move(img));
    }
    return images;
}

std::string triplet_header(std::size_t k) {
    std::string h = "input_record,neighbor_record,input_identity,neighbor_identity,phi_g,warped_file";
    for (std::size_t j = 1; j <= k; ++j) h += fmt::format(",hat_u{},hat_v{}", j, j);
    return h;
}

std::string warped_name(const TripletItem& t) {
    return fmt::format("x{:06d}_{:06d}.pgm", t.input.record_id, t.neighbor.record_id);
}

void write_config(const RunConfig& cfg, const RunPaths& paths) {
    write_text(paths.root / "config.yaml", cfg.canonical());
    write_text(paths.root / "config.hash", cfg.hash() + "\n");
}

// Exclusive marker for the duration of a command.
class RunLock {
public:
    explicit RunLock(const fs::path& root) : path_(root / ".lock") {
        fs::create_directories(root);
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f)
            throw Error(ErrorCode::Io,
                        fmt::format("{} exists: another command is using this run directory (delete it if stale)",
                                    path_.string()));
        std::fclose(f);
    }
    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    fs::path path_;
};

void append_run_log(const RunPaths& paths, const std::string& command, const std::string& summary) {
    std::ofstream log(paths.root / "run.log", std::ios::app);
    const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
    log << fmt::format("{:%Y-%m-%dT%H:%M:%SZ} {} {}\n", now, command, summary);
}

std::string report_stem(const RunConfig& cfg) { return fmt::format("{}-s{}", cfg.hash(), cfg.seed); }

void require_file(const fs::path& p, const std::string& hint) {
    if (!fs::exists(p)) throw Error(ErrorCode::MissingInput, fmt::format("{} not found; {}", p.string(), hint));
}

PreparedData load_prepared(const RunPaths& paths) {
    require_file(paths.data() / "manifest.csv", "run gen-data first");
    return prepare_data(load_dataset(paths.data()));
}

TripletSet load_split(const RunPaths& paths, const std::string& split, const PreparedData& data) {
    require_file(paths.pairs() / ("triplets_" + split + ".csv"), "run pair first");
    return load_triplets(paths.pairs(), split, data);
}

}  // namespace

void save_triplets(const fs::path& dir, const std::string& split, const TripletSet& set) {
    fs::create_directories(dir / split);
    const std::size_t k = set.items.empty() ? 0 : set.items.front().warped.landmarks.size();
    std::string csv = triplet_header(k) + "\n";
    std::vector<ImageBuffer> images;
    for (const auto& t : set.items) {
        const std::string name = warped_name(t);
        csv += fmt::format("{},{},{},{},{},{}/{}", t.input.record_id, t.neighbor.record_id, t.input.identity,
                           t.neighbor.identity, format_double(t.phi_g), split, name);
        for (const auto& p : t.warped.landmarks.points()) csv += "," + format_double(p.u) + "," + format_double(p.v);
        csv += "\n";
        save_pnm(dir / split / name, t.warped.image);
        images.push_back(t.warped.image);
    }
    write_text(dir / ("triplets_" + split + ".csv"), csv);
    save_image_blob(dir / ("warped_" + split + ".bin"), images);
    std::string skipped;
    for (const auto& w : set.warnings) skipped += w + "\n";
    write_text(dir / ("skipped_" + split + ".txt"), skipped);
}

TripletSet load_triplets(const fs::path& dir, const std::string& split, const PreparedData& data) {
    const auto lines = read_lines(dir / ("triplets_" + split + ".csv"));
    const auto images = load_image_blob(dir / ("warped_" + split + ".bin"));
    std::map<std::int64_t, std::size_t> by_id;
    for (std::size_t i = 0; i < data.aligned.size(); ++i) by_id.emplace(data.aligned[i].record_id, i);
    auto lookup = [&](std::int64_t id) -> const FaceRecord& {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(ErrorCode::MissingInput, fmt::format("triplet cache names unknown record {}", id));
        return data.aligned[it->second];
    };
    TripletSet set;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto cols = split_csv(lines[i]);
        if (cols.size() < 6 || (cols.size() - 6) % 2 != 0)
            throw Error(ErrorCode::Io, fmt::format("triplet cache line {} is malformed", i + 1));
        const std::size_t item = set.items.size();
        if (item >= images.size()) throw Error(ErrorCode::Io, "triplet cache has fewer images than rows");
        TripletItem t;
        t.input = lookup(parse_int(cols[0]));
        t.neighbor = lookup(parse_int(cols[1]));
        t.phi_g = parse_double(cols[4]);
        std::vector<double> flat;
        for (std::size_t c = 6; c < cols.size(); ++c) flat.push_back(parse_double(cols[c]));
        t.warped.record_id = t.neighbor.record_id;
        t.warped.identity = t.neighbor.identity;
        t.warped.spec = t.neighbor.spec;
        t.warped.image = images[item];
        t.warped.landmarks = LandmarkSet::from_flat(flat);
        t.warped.provenance = Provenance{t.input.record_id, t.neighbor.record_id};
        set.items.push_back(std::move(t));
    }
    if (set.items.size() != images.size()) throw Error(ErrorCode::Io, "triplet cache rows and images disagree");
    if (fs::exists(dir / ("skipped_" + split + ".txt")))
        for (auto& l : read_lines(dir / ("skipped_" + split + ".txt")))
            if (!l.empty()) set.warnings.push_back(l);
    set.skipped = set.warnings.size();
    return set;
}

NetConfig network_for(const RunConfig& cfg, int n_classes) {
    NetConfig n = cfg.net;
    n.width = n.height = cfg.dataset.image_size;
    n.channels = 1;
    n.n_classes = n_classes;
    return n;
}

LossConfig baseline_loss(const LossConfig& loss) {
    LossConfig b = loss;
    b.lambda_a = 0.0;
    b.lambda_g = 0.0;
    return b;
}

TrainResult train_model(const RunConfig& cfg, const LossConfig& loss, std::uint64_t seed, int epochs,
                        const TripletSet& triplets, const TrainOptions& opts) {
    const ClassMap classes(triplets.items);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    tc.epochs = epochs;
    return train(tc, loss, network_for(cfg, classes.size()), triplets.items, classes, opts);
}

ProbePopulation make_probe_population(const RunConfig& cfg, const CanonicalFrame& frame) {
    const int n = cfg.eval.probe_identities;
    ProbePopulation pop;
    pop.records.resize(static_cast<std::size_t>(n));
    pop.geo.resize(n, static_cast<Eigen::Index>(kGeoFactors));
    pop.app.resize(n, static_cast<Eigen::Index>(kAppFactors));
    pop.attributes.resize(n, static_cast<Eigen::Index>(kAttributes));
    // Identity numbers far above any dataset identity keep the population disjoint.
    constexpr int kFirstProbeIdentity = 1000000;
    for (int i = 0; i < n; ++i) {
        const int id = kFirstProbeIdentity + i;
        const IdentitySpec spec = sample_identity(cfg.dataset.seed, id);
        FaceRecord rec = render_face(spec, mix_key({cfg.dataset.seed, static_cast<std::uint64_t>(id), 0x9b0eull}),
                                     cfg.dataset.noise_level, cfg.dataset.image_size);
        rec.record_id = id;
        rec.image = quantize_8bit(rec.image);
        pop.records[static_cast<std::size_t>(i)] = align_record(rec, frame);
        for (std::size_t k = 0; k < kGeoFactors; ++k) pop.geo(i, static_cast<Eigen::Index>(k)) = spec.geo[k];
        for (std::size_t k = 0; k < kAppFactors; ++k) pop.app(i, static_cast<Eigen::Index>(k)) = spec.app[k];
        for (std::size_t k = 0; k < kAttributes; ++k)
            pop.attributes(i, static_cast<Eigen::Index>(k)) = spec.attributes[k] ? 1 : 0;
    }
    return pop;
}

const RepresentationMetrics& EvalReport::metrics(Representation r) const {
    for (const auto& m : reps)
        if (m.rep == r) return m;
    throw Error(ErrorCode::InvalidArgument, "representation missing from report");
}

namespace {

std::vector<FaceRecord> gather_records(const PreparedData& data, std::span<const std::size_t> idx) {
    std::vector<FaceRecord> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(data.aligned[i]);
    return out;
}

std::vector<int> labels_of(std::span<const FaceRecord> recs) {
    std::vector<int> out;
    for (const auto& r : recs) out.push_back(r.identity);
    return out;
}

std::size_t count_genuine(std::span<const int> labels) {
    std::map<int, std::size_t> counts;
    for (int l : labels) ++counts[l];
    std::size_t g = 0;
    for (const auto& [l, c] : counts) g += c * (c - 1) / 2;
    return g;
}

double balanced_accuracy(const RunConfig& cfg, const Batch& emb, std::span<const int> labels) {
    const std::size_t impostors = cfg.eval.impostor_pairs > 0 ? cfg.eval.impostor_pairs : count_genuine(labels);
    const PairSet pairs = verification_pairs(labels, impostors, cfg.seed);
    return verification_accuracy(pair_scores(emb, pairs), pairs.genuine, cfg.eval.verification_folds, cfg.seed);
}

Batch concat_features(const EmbeddingBatch& e) {
    Batch x(e.appearance.rows(), e.appearance.cols() + e.geometry.cols());
    x << e.appearance, e.geometry;
    return x;
}

}  // namespace

EvalReport evaluate_model(const RunConfig& cfg, const NetParams& model, const NetParams* baseline,
                          const PreparedData& data, const TripletSet& test_triplets, const ProbePopulation& probes) {
    EvalReport rep;
    const auto test = gather_records(data, data.test);
    const auto labels = labels_of(test);
    const EmbeddingBatch emb = embed_records(model, test);
    const GallerySplit gs = first_occurrence_gallery(labels);
    std::vector<int> gl, pl;
    for (std::size_t i : gs.gallery) gl.push_back(labels[i]);
    for (std::size_t i : gs.probes) pl.push_back(labels[i]);
    const PairSet all_pairs = verification_pairs(labels, 0, cfg.seed);
    for (Representation r : kRepresentations) {
        RepresentationMetrics m;
        m.rep = r;
        const Batch& e = select(emb, r);
        m.rank1 = rank1_identification(gather_rows(e, gs.gallery), gl, gather_rows(e, gs.probes), pl);
        m.roc = verification_roc(pair_scores(e, all_pairs), all_pairs.genuine);
        for (double f : cfg.eval.far_targets) m.tar.push_back(m.roc.tar_at(f));
        m.verification_accuracy = balanced_accuracy(cfg, e, labels);
        rep.roc_genuine = m.roc.genuine;
        rep.roc_impostor = m.roc.impostor;
        rep.reps.push_back(std::move(m));
    }

    if (!test_triplets.items.empty()) {
        std::vector<FaceRecord> xi, xp, xh;
        for (const auto& t : test_triplets.items) {
            xi.push_back(t.input);
            xp.push_back(t.neighbor);
            xh.push_back(t.warped);
        }
        const auto ei = embed_records(model, xi), ep = embed_records(model, xp), eh = embed_records(model, xh);
        for (Eigen::Index i = 0; i < ei.geometry.rows(); ++i) {
            rep.heldout_cos_geo += cosine_similarity(ei.geometry.row(i).transpose(), eh.geometry.row(i).transpose()).value;
            rep.heldout_cos_app +=
                cosine_similarity(ep.appearance.row(i).transpose(), eh.appearance.row(i).transpose()).value;
        }
        rep.heldout_cos_geo /= static_cast<double>(ei.geometry.rows());
        rep.heldout_cos_app /= static_cast<double>(ei.geometry.rows());
    }

    const EmbeddingBatch pe = embed_records(model, probes.records);
    rep.geo_from_geometry = disentanglement_probe(pe.geometry, probes.geo, cfg.eval.probe_folds, cfg.seed);
    rep.geo_from_appearance = disentanglement_probe(pe.appearance, probes.geo, cfg.eval.probe_folds, cfg.seed);
    rep.app_from_geometry = disentanglement_probe(pe.geometry, probes.app, cfg.eval.probe_folds, cfg.seed);
    rep.app_from_appearance = disentanglement_probe(pe.appearance, probes.app, cfg.eval.probe_folds, cfg.seed);

    // Attribute probe: first half of the population trains, second half tests.
    const Eigen::Index n = static_cast<Eigen::Index>(probes.records.size()), half = n / 2;
    AttributeProbeConfig ac = cfg.eval.attribute;
    ac.seed = cfg.seed;
    auto run_probe = [&](const EmbeddingBatch& e) {
        const Batch x = concat_features(e);
        return attribute_probe(x.topRows(half), probes.attributes.topRows(half), x.bottomRows(n - half),
                               probes.attributes.bottomRows(n - half), ac);
    };
    rep.attributes = run_probe(pe);
    {
        const Batch x = concat_features(pe);
        rep.permutation = attribute_permutation_baseline(x.topRows(half), probes.attributes.topRows(half),
                                                         x.bottomRows(n - half), probes.attributes.bottomRows(n - half),
                                                         ac, cfg.eval.permutations);
    }
    if (baseline) rep.baseline_attributes = run_probe(embed_records(*baseline, probes.records));
    return rep;
}

double heldout_verification_accuracy(const RunConfig& cfg, const NetParams& model, const PreparedData& data) {
    const auto test = gather_records(data, data.test);
    const auto labels = labels_of(test);
    return balanced_accuracy(cfg, embed_records(model, test).combined, labels);
}

double SweepCell::mean() const {
    double s = 0.0;
    int n = 0;
    for (double a : accuracy)
        if (std::isfinite(a)) s += a, ++n;
    return n > 0 ? s / n : std::numeric_limits<double>::quiet_NaN();
}

SweepResult lambda_sweep(const RunConfig& cfg, const PreparedData& data, const TripletSet& train_triplets) {
    SweepResult out;
    out.lambda_a = cfg.sweep.lambda_a;
    out.lambda_g = cfg.sweep.lambda_g;
    for (double la : cfg.sweep.lambda_a) {
        for (double lg : cfg.sweep.lambda_g) {
            SweepCell cell;
            cell.lambda_a = la;
            cell.lambda_g = lg;
            RunConfig cell_cfg = cfg;
            cell_cfg.loss.lambda_a = la;
            cell_cfg.loss.lambda_g = lg;
            cell_cfg.train.epochs = cfg.sweep.epochs;
            cell.config_hash = cell_cfg.hash();
            for (std::uint64_t seed : cfg.sweep.seeds) {
                cell.seeds.push_back(seed);
                try {
                    const auto res = train_model(cell_cfg, cell_cfg.loss, seed, cfg.sweep.epochs, train_triplets);
                    cell.accuracy.push_back(heldout_verification_accuracy(cfg, res.params, data));
                    cell.errors.emplace_back();
                } catch (const Error& e) {
                    cell.accuracy.push_back(std::numeric_limits<double>::quiet_NaN());
                    cell.errors.push_back(fmt::format("{}: {}", error_code_name(e.code()), e.what()));
                }
            }
            out.cells.push_back(std::move(cell));
        }
    }
    return out;
}

std::string sweep_csv(const SweepResult& r) {
    std::string s = "lambda_a,lambda_g,mean_accuracy,seeds,accuracies,status,config_hash\n";
    for (const auto& c : r.cells) {
        std::string seeds, accs, status;
        for (std::size_t k = 0; k < c.seeds.size(); ++k) {
            seeds += (k ? ";" : "") + std::to_string(c.seeds[k]);
            accs += (k ? ";" : "") + format_double(c.accuracy[k]);
            if (!c.errors[k].empty()) status += (status.empty() ? "" : ";") + fmt::format("seed {} failed", c.seeds[k]);
        }
        s += fmt::format("{},{},{},{},{},{},{}\n", format_double(c.lambda_a), format_double(c.lambda_g),
                         format_double(c.mean()), seeds, accs, status.empty() ? "ok" : status, c.config_hash);
    }
    return s;
}

std::string sweep_heatmap(const SweepResult& r) {
    std::vector<std::string> rows, cols;
    for (double a : r.lambda_a) rows.push_back(format_double(a));
    for (double g : r.lambda_g) cols.push_back(format_double(g));
    std::vector<std::vector<double>> v(r.lambda_a.size(), std::vector<double>(r.lambda_g.size()));
    for (std::size_t i = 0; i < r.lambda_a.size(); ++i)
        for (std::size_t j = 0; j < r.lambda_g.size(); ++j) v[i][j] = r.at(i, j).mean();
    return svg_heatmap("Held-out verification accuracy", "lambda_a", "lambda_g", rows, cols, v);
}

std::string training_log_csv(const std::vector<EpochLog>& log) {
    std::string s = epoch_log_header() + "\n";
    for (const auto& e : log) s += epoch_log_row(e) + "\n";
    return s;
}

std::string training_curves_svg(const std::vector<EpochLog>& log, const std::string& title) {
    Series id{"L_id", {}, {}}, app{"L_a", {}, {}}, geo{"L_g", {}, {}}, cg{"mean Phi_g", {}, {}}, ca{"mean Phi_a", {}, {}},
        acc{"train acc", {}, {}};
    for (const auto& e : log) {
        const double x = e.epoch;
        id.x.push_back(x), id.y.push_back(e.loss_id);
        app.x.push_back(x), app.y.push_back(e.loss_app);
        geo.x.push_back(x), geo.y.push_back(e.loss_geo);
        cg.x.push_back(x), cg.y.push_back(e.cos_geo);
        ca.x.push_back(x), ca.y.push_back(e.cos_app);
        acc.x.push_back(x), acc.y.push_back(e.train_acc);
    }
    return svg_line_chart(title, "epoch", "value", {id, app, geo, cg, ca, acc});
}

std::string metrics_csv(const RunConfig& cfg, const EvalReport& r) {
    std::string s = "metric,representation,value\n";
    auto row = [&](const std::string& metric, const std::string& rep, const std::string& value) {
        s += metric + "," + rep + "," + value + "\n";
    };
    row("config_hash", "-", cfg.hash());
    row("seed", "-", std::to_string(cfg.seed));
    row("roc_genuine_pairs", "-", std::to_string(r.roc_genuine));
    row("roc_impostor_pairs", "-", std::to_string(r.roc_impostor));
    for (const auto& m : r.reps) {
        const std::string name = representation_name(m.rep);
        row("rank1", name, format_double(m.rank1));
        row("verification_accuracy", name, format_double(m.verification_accuracy));
        for (std::size_t k = 0; k < m.tar.size(); ++k)
            row(fmt::format("tar_at_far_{}", format_double(cfg.eval.far_targets[k])), name, format_double(m.tar[k]));
    }
    row("heldout_cos_geo", "geometry", format_double(r.heldout_cos_geo));
    row("heldout_cos_app", "appearance", format_double(r.heldout_cos_app));
    auto probe = [&](const std::string& target, const std::string& rep, const ProbeReport& p, auto names) {
        row("r2_" + target + "_mean", rep, format_double(p.mean_test()));
        row("r2_" + target + "_train_mean", rep, format_double(p.mean_train()));
        for (std::size_t k = 0; k < p.r2_test.size(); ++k)
            row(fmt::format("r2_{}_{}", target, names[k]), rep, format_double(p.r2_test[k]));
        row("r2_" + target + "_ridge_fallback", rep, p.ridge_fallback ? "1" : "0");
    };
    probe("geo", "geometry", r.geo_from_geometry, kGeoNames);
    probe("geo", "appearance", r.geo_from_appearance, kGeoNames);
    probe("app", "geometry", r.app_from_geometry, kAppNames);
    probe("app", "appearance", r.app_from_appearance, kAppNames);
    auto attrs = [&](const std::string& model, const AttributeProbeReport& a) {
        for (std::size_t k = 0; k < a.accuracy.size(); ++k)
            row(fmt::format("attribute_{}", kAttributeNames[k]), model,
                a.skipped[k] ? std::string("skipped") : format_double(a.accuracy[k]));
        row("attribute_mean", model, format_double(a.mean));
    };
    attrs("dag", r.attributes);
    if (r.baseline_attributes) attrs("baseline", *r.baseline_attributes);
    row("attribute_permutation_mean", "dag", format_double(r.permutation.mean));
    row("attribute_permutation_std", "dag", format_double(r.permutation.stddev));
    return s;
}

// ---------------------------------------------------------------- commands

std::string cmd_gen_data(const RunConfig& cfg) {
    const RunPaths paths{cfg.run_dir()};
    RunLock lock(paths.root);
    write_config(cfg, paths);
    const Dataset ds = generate_dataset(cfg.dataset, paths.data());
    const auto tr = ds.indices(Split::Train).size(), te = ds.indices(Split::Test).size();
    const fs::path manifest = paths.data() / "manifest.csv";
    const std::string summary = fmt::format("gen-data: {} records ({} train, {} test) -> {} [{}]", ds.records.size(), tr,
                                            te, manifest.string(), file_hash(manifest));
    append_run_log(paths, "gen-data", summary);
    return summary;
}

std::string cmd_pair(const RunConfig& cfg) {
    const RunPaths paths{cfg.run_dir()};
    RunLock lock(paths.root);
    write_config(cfg, paths);
    const PreparedData data = load_prepared(paths);
    const TripletSet train_set = build_triplets(data.aligned, data.train, data.frame, cfg.train.pool_size, cfg.seed);
    const TripletSet test_set = build_triplets(data.aligned, data.test, data.frame, cfg.train.pool_size, cfg.seed);
    save_triplets(paths.pairs(), "train", train_set);
    save_triplets(paths.pairs(), "test", test_set);

    // Landmark audit of every cached x_hat against l_i.
    double worst = 0.0;
    std::size_t within = 0, total = 0;
    for (const auto* set : {&train_set, &test_set}) {
        for (const auto& t : set->items) {
            const double e = linf_distance(t.warped.landmarks, t.input.landmarks);
            worst = std::max(worst, e);
            within += e <= 1e-6 ? 1 : 0;
            ++total;
        }
    }
    write_text(paths.pairs() / "audit.txt", fmt::format("triplets {}\nwithin_1e-6 {}\nmax_linf {}\n", total, within,
                                                        format_double(worst)));

    // Rows of (x_i, x_i', x_hat_i').
    std::vector<ImageBuffer> tiles;
    const std::size_t rows = std::min<std::size_t>(static_cast<std::size_t>(cfg.pair.sheet_rows), train_set.items.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const auto& t = train_set.items[r * train_set.items.size() / rows];
        tiles.push_back(t.input.image);
        tiles.push_back(t.neighbor.image);
        tiles.push_back(t.warped.image);
    }
    if (!tiles.empty()) save_pnm(paths.pairs() / "sheet.pgm", contact_sheet(tiles, 3, 2));

    const std::string summary =
        fmt::format("pair: {} train + {} test triplets, {} skipped, landmark audit {}/{} within 1e-6 -> {}",
                    train_set.items.size(), test_set.items.size(), train_set.skipped + test_set.skipped, within, total,
                    (paths.pairs() / "triplets_train.csv").string());
    append_run_log(paths, "pair", summary);
    return summary;
}

std::string cmd_train(const RunConfig& cfg) {
    const RunPaths paths{cfg.run_dir()};
    RunLock lock(paths.root);
    write_config(cfg, paths);
    const PreparedData data = load_prepared(paths);
    const TripletSet train_set = load_split(paths, "train", data);

    auto run = [&](const fs::path& dir, const LossConfig& loss, const std::string& title) {
        fs::create_directories(dir);
        TrainOptions opts;
        opts.dump_dir = dir;
        const TrainResult res = train_model(cfg, loss, cfg.seed, cfg.train.epochs, train_set, opts);
        save_checkpoint(dir / "checkpoint.bin", res.params);
        save_checkpoint(dir / "best.bin", res.best);
        write_text(dir / "log.csv", training_log_csv(res.log));
        write_text(dir / "curves.svg", training_curves_svg(res.log, title));
        return res;
    };
    const TrainResult dag = run(paths.train(), cfg.loss, "Training (DAG)");
    if (cfg.train_baseline) run(paths.baseline(), baseline_loss(cfg.loss), "Training (baseline)");
    const EpochLog& last = dag.log.back();
    const std::string summary = fmt::format(
        "train: {} epochs, L_t {} -> {}, train acc {}, mean Phi_g {}, mean Phi_a {}{} -> {}", cfg.train.epochs,
        fmt::format("{:.4f}", dag.log.front().loss_total), fmt::format("{:.4f}", last.loss_total),
        fmt::format("{:.4f}", last.train_acc), fmt::format("{:.4f}", last.cos_geo), fmt::format("{:.4f}", last.cos_app),
        cfg.train_baseline ? ", baseline trained" : "", (paths.train() / "checkpoint.bin").string());
    append_run_log(paths, "train", summary);
    return summary;
}

std::string cmd_eval(const RunConfig& cfg) {
    const RunPaths paths{cfg.run_dir()};
    RunLock lock(paths.root);
    write_config(cfg, paths);
    require_file(paths.train() / "checkpoint.bin", "run train first");
    if (cfg.train_baseline) require_file(paths.baseline() / "checkpoint.bin", "run train first");
    const PreparedData data = load_prepared(paths);
    const TripletSet train_set = load_split(paths, "train", data);
    const TripletSet test_set = load_split(paths, "test", data);
    const NetConfig net = network_for(cfg, ClassMap(train_set.items).size());
    const NetParams model = load_checkpoint(paths.train() / "checkpoint.bin", net);
    std::optional<NetParams> baseline;
    if (cfg.train_baseline) baseline = load_checkpoint(paths.baseline() / "checkpoint.bin", net);
    const ProbePopulation probes = make_probe_population(cfg, data.frame);
    const EvalReport rep = evaluate_model(cfg, model, baseline ? &*baseline : nullptr, data, test_set, probes);

    fs::create_directories(paths.eval());
    const std::string stem = report_stem(cfg);
    write_text(paths.eval() / ("metrics-" + stem + ".csv"), metrics_csv(cfg, rep));
    std::vector<Series> roc_series;
    for (const auto& m : rep.reps) {
        std::string csv = "threshold,far,tar\n";
        Series s{representation_name(m.rep), {}, {}};
        for (const auto& p : m.roc.points) {
            csv += format_double(p.threshold) + "," + format_double(p.far) + "," + format_double(p.tar) + "\n";
            s.x.push_back(p.far);
            s.y.push_back(p.tar);
        }
        write_text(paths.eval() / fmt::format("roc-{}-{}.csv", representation_name(m.rep), stem), csv);
        roc_series.push_back(std::move(s));
    }
    write_text(paths.eval() / ("roc-" + stem + ".svg"),
               svg_line_chart("Verification ROC (test split)", "FAR", "TAR", roc_series, true));

    // Nearest-neighbour retrieval in each embedding.
    const auto test = gather_records(data, data.test);
    const auto labels = labels_of(test);
    const EmbeddingBatch emb = embed_records(model, test);
    const GallerySplit gs = first_occurrence_gallery(labels);
    std::vector<std::size_t> probe_rows(gs.gallery.begin(),
                                        gs.gallery.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(
                                                                 static_cast<std::size_t>(cfg.eval.knn_probes), gs.gallery.size())));
    for (Representation r : kRepresentations) {
        bool truncated = false;
        const auto nn = nearest_neighbors(gather_rows(select(emb, r), probe_rows), select(emb, r), cfg.eval.knn_k, &truncated);
        std::string txt = "probe_record,rank,record,identity,similarity\n";
        std::vector<ImageBuffer> tiles;
        for (std::size_t p = 0; p < nn.size(); ++p) {
            tiles.push_back(test[probe_rows[p]].image);
            for (std::size_t k = 0; k < nn[p].size(); ++k) {
                const auto& hit = test[nn[p][k].index];
                txt += fmt::format("{},{},{},{},{}\n", test[probe_rows[p]].record_id, k + 1, hit.record_id, hit.identity,
                                   format_double(nn[p][k].similarity));
                tiles.push_back(hit.image);
            }
        }
        if (truncated) txt += "# k exceeded the gallery size and was truncated\n";
        write_text(paths.eval() / fmt::format("knn-{}-{}.csv", representation_name(r), stem), txt);
        save_pnm(paths.eval() / fmt::format("knn-{}-{}.pgm", representation_name(r), stem),
                 contact_sheet(tiles, static_cast<int>(nn.front().size()) + 1, 2));
    }

    const auto& comb = rep.metrics(Representation::Combined);
    const std::string summary = fmt::format(
        "eval: rank1 {:.4f}, verification acc {:.4f}, TAR@FAR={} {:.4f}, held-out Phi_g {:.4f} Phi_a {:.4f}, "
        "R2 geo g/a {:.3f}/{:.3f}, attribute acc {:.4f} -> {}",
        comb.rank1, comb.verification_accuracy, format_double(cfg.eval.far_targets.front()), comb.tar.front(),
        rep.heldout_cos_geo, rep.heldout_cos_app, rep.geo_from_geometry.mean_test(), rep.geo_from_appearance.mean_test(),
        rep.attributes.mean, (paths.eval() / ("metrics-" + stem + ".csv")).string());
    append_run_log(paths, "eval", summary);
    return summary;
}

std::string cmd_sweep(const RunConfig& cfg) {
    const RunPaths paths{cfg.run_dir()};
    RunLock lock(paths.root);
    write_config(cfg, paths);
    const PreparedData data = load_prepared(paths);
    const TripletSet train_set = load_split(paths, "train", data);
    const SweepResult res = lambda_sweep(cfg, data, train_set);
    fs::create_directories(paths.sweep());
    write_text(paths.sweep() / ("grid-" + report_stem(cfg) + ".csv"), sweep_csv(res));
    write_text(paths.sweep() / ("heatmap-" + report_stem(cfg) + ".svg"), sweep_heatmap(res));
    const SweepCell* best = nullptr;
    std::size_t failed = 0;
    for (const auto& c : res.cells) {
        for (const auto& e : c.errors) failed += e.empty() ? 0 : 1;
        if (std::isfinite(c.mean()) && (!best || c.mean() > best->mean())) best = &c;
    }
    const std::string summary =
        best ? fmt::format("sweep: {} cells x {} seeds, {} failed runs, best (lambda_a, lambda_g) = ({}, {}) acc {:.4f} -> {}",
                           res.cells.size(), cfg.sweep.seeds.size(), failed, format_double(best->lambda_a),
                           format_double(best->lambda_g), best->mean(),
                           (paths.sweep() / ("grid-" + report_stem(cfg) + ".csv")).string())
             : fmt::format("sweep: all {} runs failed", failed);
    append_run_log(paths, "sweep", summary);
    return summary;
}

std::string cmd_gradcheck(const RunConfig& cfg) {
    const RunPaths paths{cfg.run_dir()};
    RunLock lock(paths.root);
    write_config(cfg, paths);
    GradCheckOptions opts;
    opts.tolerance = cfg.gradcheck.tolerance;
    opts.precision = cfg.gradcheck.precision;
    opts.batch = cfg.gradcheck.batch;
    opts.loss = cfg.loss;
    const GradCheckReport rep = grad_check(cfg.gradcheck.net, cfg.seed, opts);
    fs::create_directories(paths.gradcheck());
    write_text(paths.gradcheck() / "report.txt",
               fmt::format("parameters {}\nchecked {}\nskipped_kinks {}\nmax_rel_error {}\nworst_index {}\ntolerance {}\n"
                           "precision {}\npassed {}\n",
                           rep.parameters, rep.checked, rep.skipped_kinks, format_double(rep.max_rel_error),
                           rep.worst_index, format_double(rep.tolerance),
                           cfg.gradcheck.precision == Precision::F64 ? "f64" : "f32", rep.passed ? 1 : 0));
    const std::string summary = fmt::format("gradcheck: {} of {} coordinates checked, max relative error {:.3e} ({} {}) -> {}",
                                            rep.checked, rep.parameters, rep.max_rel_error,
                                            rep.passed ? "below" : "ABOVE", format_double(rep.tolerance),
                                            (paths.gradcheck() / "report.txt").string());
    append_run_log(paths, "gradcheck", summary);
    if (!rep.passed) throw Error(ErrorCode::Acceptance, summary);
    return summary;
}

std::string run_command(const std::string& name, const RunConfig& cfg) {
    if (name == "gen-data") return cmd_gen_data(cfg);
    if (name == "pair") return cmd_pair(cfg);
    if (name == "train") return cmd_train(cfg);
    if (name == "eval") return cmd_eval(cfg);
    if (name == "sweep") return cmd_sweep(cfg);
    if (name == "gradcheck") return cmd_gradcheck(cfg);
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown command '{}'", name));
}

}  // namespace dag
