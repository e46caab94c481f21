#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <sys/wait.h>

#include "diffuseraw/io/npy.hpp"
#include "diffuseraw/raw/braw.hpp"
#include "diffuseraw/sim/dataset.hpp"

namespace fs = std::filesystem;
using namespace diffuseraw;

namespace {

const fs::path work = fs::temp_directory_path() / "diffuseraw_test_cli";

// Runs the CLI with `args`, capturing stderr into work/stderr.txt.
int run(const std::string& args) {
    const std::string cmd =
        std::string(DIFFUSERAW_CLI) + " " + args + " > " + (work / "stdout.txt").string() + " 2> " + (work / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        fs::remove_all(work);
        fs::create_directories(work);
    }
};

// Small and fast settings for the end-to-end run.
const std::string tiny_config = R"([paths]
dataset_dir = data/train
eval_dir = data/eval
checkpoint_dir = runs/train

[sim]
n_scenes = 8
eval_scenes = 2
width = 32
height = 32

[model]
ae_width = 8
unet_c0 = 8
unet_c1 = 16
unet_c2 = 16
time_dim = 8
emb_dim = 16

[train]
patch = 16
batch = 2
steps = 20
lr = 1e-3
warmup = 2
ae_steps = 10
ae_batch = 2
val_every = 10
val_size = 2
checkpoint_every = 0

[infer]
steps = 5
)";

} // namespace

TEST_F(Cli, UsageErrorsExitWithOne) {
    EXPECT_EQ(run(""), 1);
    EXPECT_EQ(run("frobnicate"), 1);
    EXPECT_EQ(run("preprocess"), 1);
    EXPECT_EQ(run("eval --bogus"), 1);
    EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, UnknownConfigKeyIsValidationError) {
    std::ofstream(work / "bad.ini") << "[train]\nlearning_rate = 1\n";
    EXPECT_EQ(run("-c " + (work / "bad.ini").string() + " simulate"), 2);
    const auto err = slurp(work / "stderr.txt");
    EXPECT_NE(err.find("error[validation]"), std::string::npos) << err;
    EXPECT_NE(err.find("train.learning_rate"), std::string::npos) << err;
    EXPECT_EQ(run("--set train.steps=-1 train"), 2);
}

TEST_F(Cli, MissingInputsAreValidationErrors) {
    EXPECT_EQ(run("preprocess " + (work / "none.braw").string() + " --alpha 100 -o " + (work / "x.npy").string()), 2);
    EXPECT_EQ(run("infer --manifest " + (work / "none.tsv").string() + " --out-dir " + work.string()), 2);
    EXPECT_EQ(run("isp " + (work / "none.braw").string()), 2);
}

TEST_F(Cli, PreprocessTwoByTwoRaw) {
    BayerImage img(2, 2, cfa_pattern::rggb, 512, 16383);
    img.data = {600, 700, 800, 900};
    save_braw(work / "tiny.braw", img);
    ASSERT_EQ(run("preprocess " + (work / "tiny.braw").string() + " --alpha 10 -o " + (work / "tiny.npy").string()), 0);
    auto arr = load_npy(work / "tiny.npy");
    EXPECT_EQ(arr.width, 2);
    EXPECT_EQ(arr.height, 2);
    EXPECT_EQ(arr.channels, 4);
    EXPECT_NEAR(arr.at(0, 0, 0), 10.0 * 88 / (16383 - 512), 1e-6);
    EXPECT_EQ(run("preprocess " + (work / "tiny.braw").string() + " --alpha 0 -o " + (work / "t.npy").string()), 2);
}

TEST_F(Cli, EndToEndSimulateTrainInferEval) {
    const auto cfg = work / "e2e" / "run.ini";
    fs::create_directories(cfg.parent_path());
    std::ofstream(cfg) << tiny_config;
    const std::string c = "-c " + cfg.string() + " ";
    const auto root = cfg.parent_path();

    ASSERT_EQ(run(c + "simulate"), 0) << slurp(work / "stderr.txt");
    auto m = sim::read_manifest(root / "data/train/manifest.tsv");
    EXPECT_EQ(m.records.size(), 16u);
    EXPECT_EQ(sim::read_manifest(root / "data/eval/manifest.tsv").records.size(), 4u);

    ASSERT_EQ(run(c + "train"), 0) << slurp(work / "stderr.txt");
    EXPECT_TRUE(fs::is_regular_file(root / "runs/train/model.drck"));
    EXPECT_TRUE(fs::is_regular_file(root / "runs/train/loss.log"));

    const auto eval_manifest = (root / "data/eval/manifest.tsv").string();
    ASSERT_EQ(run(c + "infer --manifest " + eval_manifest + " --out-dir " + (root / "out_a").string()), 0)
        << slurp(work / "stderr.txt");
    ASSERT_EQ(run(c + "infer --manifest " + eval_manifest + " --out-dir " + (root / "out_b").string()), 0);
    for (const auto& e : fs::directory_iterator(root / "out_a")) {
        EXPECT_EQ(slurp(e.path()), slurp(root / "out_b" / e.path().filename())) << e.path();
    }

    const auto single = (root / "data/eval/scene_0008_x300.braw").string();
    ASSERT_EQ(run(c + "infer " + single + " --alpha 300 -o " + (root / "one.ppm").string()), 0);
    EXPECT_EQ(slurp(root / "one.ppm"), slurp(root / "out_a" / "scene_0008_x300.ppm"));

    ASSERT_EQ(run(c + "eval --manifest " + eval_manifest + " --outputs " + (root / "out_a").string()), 0)
        << slurp(work / "stderr.txt");
    EXPECT_TRUE(fs::is_regular_file(root / "out_a" / "report.tsv"));
    EXPECT_NE(slurp(work / "stdout.txt").find("x300"), std::string::npos);

    ASSERT_EQ(run(c + "isp --manifest " + eval_manifest + " --out-dir " + (root / "isp").string()), 0);
    ASSERT_EQ(run(c + "eval --manifest " + eval_manifest + " --outputs " + (root / "isp").string()), 0);

    fs::remove(root / "out_a" / "scene_0008_x100.ppm");
    EXPECT_EQ(run(c + "eval --manifest " + eval_manifest + " --outputs " + (root / "out_a").string()), 3);
    EXPECT_NE(slurp(work / "stderr.txt").find("scene_0008_x100"), std::string::npos);
}
