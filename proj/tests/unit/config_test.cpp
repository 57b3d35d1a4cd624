#include "config.hpp"

#include "common.hpp"
#include "test_util.hpp"
#include "text_io.hpp"

#include <gtest/gtest.h>


using namespace dag;
using dag::testing::TempDir;

namespace {

std::string config_error(const std::string& yaml, const std::vector<std::string>& overrides = {}) {
    try {
        parse_config(yaml, overrides);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::Config);
        return e.what();
    }
    ADD_FAILURE() << "expected a config error";
    return {};
}

}  // namespace

TEST(Config, EmptyTextGivesDefaults) {
    const RunConfig c = parse_config("");
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.dataset.n_identities, 40);
    EXPECT_DOUBLE_EQ(c.loss.lambda_a, 1.3);
    EXPECT_DOUBLE_EQ(c.loss.lambda_g, 0.75);
    EXPECT_DOUBLE_EQ(c.loss.alpha_g, 9.4);
    EXPECT_EQ(c.loss.scale_mode, ScaleMode::EmbeddingNorm);
    EXPECT_EQ(c.train.epochs, 60);
}

TEST(Config, CanonicalTextRoundTrips) {
    const RunConfig a = parse_config("dataset: {n_identities: 12}\nloss: {preset: cosface, lambda_g: 2}\n");
    const RunConfig b = parse_config(a.canonical());
    EXPECT_EQ(a.canonical(), b.canonical());
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(b.loss.m2, 0.35);
    EXPECT_EQ(b.loss.lambda_g, 2.0);
}

TEST(Config, UnknownKeysAreNamed) {
    EXPECT_NE(config_error("dataset: {n_identity: 3}\n").find("dataset.n_identity"), std::string::npos);
    EXPECT_NE(config_error("datasets: {}\n").find("datasets"), std::string::npos);
    EXPECT_NE(config_error("", {"train.epoch=3"}).find("train.epoch"), std::string::npos);
}

TEST(Config, IllTypedAndOutOfRangeValuesAreRejected) {
    EXPECT_NE(config_error("train: {epochs: many}\n").find("train.epochs"), std::string::npos);
    config_error("dataset: {noise_level: 0.5}\n");
    config_error("loss: {m2: 1.5}\n");
    config_error("", {"not-an-assignment"});
}

TEST(Config, OverridesWinOverFileValues) {
    const RunConfig c = parse_config("train: {epochs: 5}\n", {"train.epochs=7", "loss.s=16"});
    EXPECT_EQ(c.train.epochs, 7);
    EXPECT_EQ(c.loss.scale_mode, ScaleMode::Fixed);
    EXPECT_EQ(c.loss.s, 16.0);
}

TEST(Config, PresetAppliesBeforeOtherLossKeys) {
    // m2 is listed first but must survive the preset.
    const RunConfig c = parse_config("loss:\n  m2: 0.1\n  preset: cosface\n");
    EXPECT_DOUBLE_EQ(c.loss.m2, 0.1);
    EXPECT_EQ(c.loss.scale_mode, ScaleMode::Fixed);
}

TEST(Config, HashIgnoresOutDirButTracksEverythingElse) {
    const RunConfig a = parse_config("out_dir: /tmp/a\n"), b = parse_config("out_dir: /tmp/b\n");
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_NE(a.run_dir(), b.run_dir());
    EXPECT_EQ(a.hash().size(), 16u);
    EXPECT_NE(a.hash(), parse_config("", {"eval.knn_k=3"}).hash());
    EXPECT_NE(a.hash(), parse_config("seed: 2\n").hash());
}

TEST(Config, EveryKeyAppearsInTheCanonicalText) {
    const RunConfig base;
    const std::string canon = base.canonical();
    for (const auto& key : config_keys()) {
        if (key == "out_dir" || key == "loss.preset") continue;  // preset expands into the other loss keys
        // Each key appears in the canonical text so it participates in the hash.
        const auto dot = key.find('.');
        const std::string leaf = dot == std::string::npos ? key : key.substr(dot + 1);
        EXPECT_NE(canon.find(leaf + ":"), std::string::npos) << key;
    }
}

TEST(Config, LoadMissingFileIsMissingInput) {
    TempDir d("cfg");
    try {
        load_config(d.path() / "nope.yaml");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingInput);
    }
    write_text(d.path() / "c.yaml", "seed: 4\n");
    EXPECT_EQ(load_config(d.path() / "c.yaml").seed, 4u);
}
