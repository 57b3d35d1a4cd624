// Drives the dag executable end to end on tiny configurations.
#include "common.hpp"
#include "config.hpp"
#include "net.hpp"
#include "pipeline.hpp"
#include "test_util.hpp"
#include "text_io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <string>

using namespace dag;
using dag::testing::TempDir;

namespace {

int run_dag(const std::string& args) {
    const std::string cmd = std::string(DAG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tiny_config(const std::filesystem::path& out_dir) {
    return "seed: 2\nout_dir: " + out_dir.string() +
           "\n"
           "dataset: {n_identities: 10, per_identity: 3, image_size: 16}\n"
           "net: {trunk: \"conv4s2,res\", d: 3, d_prime: 4}\n"
           "train: {epochs: 1, batch_size: 4}\n"
           "eval: {probe_identities: 20, permutations: 2, attribute_epochs: 2}\n";
}

}  // namespace

TEST(Cli, UsageAndConfigErrors) {
    TempDir d("cli-usage");
    write_text(d.path() / "c.yaml", tiny_config(d.path() / "runs"));
    const std::string cfg = (d.path() / "c.yaml").string();
    EXPECT_EQ(run_dag(""), 2);
    EXPECT_EQ(run_dag("launch --config " + cfg), 2);
    EXPECT_EQ(run_dag("train"), 2);
    EXPECT_EQ(run_dag("train --config " + (d.path() / "none.yaml").string()), 3);
    EXPECT_EQ(run_dag("gen-data --config " + cfg + " --set train.epoch=3"), 2);
    EXPECT_EQ(run_dag("gen-data --config " + cfg + " --set dataset.noise_level=0.9"), 2);
}

TEST(Cli, MissingInputsExitThree) {
    TempDir d("cli-missing");
    write_text(d.path() / "c.yaml", tiny_config(d.path() / "runs"));
    const std::string cfg = (d.path() / "c.yaml").string();
    EXPECT_EQ(run_dag("pair --config " + cfg), 3);
    EXPECT_EQ(run_dag("train --config " + cfg), 3);
    EXPECT_EQ(run_dag("eval --config " + cfg), 3);
}

TEST(Cli, GradcheckExitCodes) {
    TempDir d("cli-gc");
    write_text(d.path() / "c.yaml", tiny_config(d.path() / "runs"));
    const std::string cfg = (d.path() / "c.yaml").string();
    EXPECT_EQ(run_dag("gradcheck --config " + cfg), 0);
    EXPECT_EQ(run_dag("gradcheck --config " + cfg + " --set gradcheck.tolerance=1e-14"), 4);
    const RunConfig rc = parse_config(tiny_config(d.path() / "runs"), {"gradcheck.tolerance=1e-14"});
    EXPECT_TRUE(std::filesystem::exists(rc.run_dir() / "gradcheck" / "report.txt"));
}

TEST(Cli, PipelineWithZeroEpochsKeepsTheInitialization) {
    TempDir d("cli-pipe");
    const std::string yaml = tiny_config(d.path() / "runs");
    write_text(d.path() / "c.yaml", yaml);
    const std::string cfg = (d.path() / "c.yaml").string();
    const std::string set = " --set train.epochs=0";
    ASSERT_EQ(run_dag("gen-data --config " + cfg + set), 0);
    ASSERT_EQ(run_dag("pair --config " + cfg + set), 0);
    ASSERT_EQ(run_dag("train --config " + cfg + set), 0);
    ASSERT_EQ(run_dag("eval --config " + cfg + set), 0);

    const RunConfig rc = parse_config(yaml, {"train.epochs=0"});
    const RunPaths paths{rc.run_dir()};
    for (const char* f : {"config.yaml", "config.hash", "run.log", "data/manifest.csv", "data/landmarks.csv",
                          "pairs/triplets_train.csv", "pairs/triplets_test.csv", "train/log.csv", "train/curves.svg",
                          "baseline/checkpoint.bin"})
        EXPECT_TRUE(std::filesystem::exists(paths.root / f)) << f;
    EXPECT_EQ(read_text(paths.root / "config.hash"), rc.hash() + "\n");
    EXPECT_EQ(read_lines(paths.root / "run.log").size(), 4u);

    // 8 train identities (80% of 10) become the classes.
    const NetConfig net = network_for(rc, 8);
    EXPECT_EQ(load_checkpoint(paths.train() / "checkpoint.bin", net), init_params(net, rc.seed));

    // Regenerating the data reproduces the manifest byte for byte.
    const std::string manifest = file_hash(paths.data() / "manifest.csv");
    ASSERT_EQ(run_dag("gen-data --config " + cfg + set), 0);
    EXPECT_EQ(file_hash(paths.data() / "manifest.csv"), manifest);
}

TEST(Cli, HeldLockIsReported) {
    TempDir d("cli-lock");
    const std::string yaml = tiny_config(d.path() / "runs");
    write_text(d.path() / "c.yaml", yaml);
    const RunConfig rc = parse_config(yaml);
    std::filesystem::create_directories(rc.run_dir());
    write_text(rc.run_dir() / ".lock", "");
    EXPECT_EQ(run_dag("gen-data --config " + (d.path() / "c.yaml").string()), 1);
}
