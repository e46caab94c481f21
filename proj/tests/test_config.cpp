#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "diffuseraw/config/run_config.hpp"

namespace fs = std::filesystem;
using namespace diffuseraw;
using namespace diffuseraw::config;

TEST(Config, DefaultsAreValid) {
    auto c = parse_config("");
    EXPECT_EQ(c.paths.dataset_dir, fs::path("data/train"));
    EXPECT_EQ(c.infer.prompt, auto_prompt);
    EXPECT_EQ(c.infer.steps, 50);
    EXPECT_EQ(c.train.dropout.text_only, 0.05);
    EXPECT_EQ(c.train.dropout.both, 0.05);
    EXPECT_EQ(c.dataset.ratios, (std::vector<double>{100.0, 300.0}));
}

TEST(Config, ParsesSectionsCommentsAndLists) {
    auto c = parse_config(R"(
# leading comment
[sim]
n_scenes = 12   # trailing comment
ratios = 50, 250
pattern = gbrg
width = 64

[isp]
gamma = 2.4
ccm = 1,0,0, 0,1,0, 0,0,1

[train]
lr = 2e-4
ae_steps = 7

[infer]
s_I = 1.5
s_T = 2
prompt = a photo taken at night
)");
    EXPECT_EQ(c.dataset.n_scenes, 12);
    EXPECT_EQ(c.dataset.ratios, (std::vector<double>{50.0, 250.0}));
    EXPECT_EQ(c.dataset.pattern, cfa_pattern::gbrg);
    EXPECT_EQ(c.dataset.width, 64);
    EXPECT_FALSE(c.isp.srgb_gamma);
    EXPECT_EQ(c.isp.gamma, 2.4);
    EXPECT_EQ(c.isp.ccm, isp::identity_ccm);
    EXPECT_EQ(c.train.lr, 2e-4);
    EXPECT_EQ(c.train.autoencoder.steps, 7);
    EXPECT_EQ(c.infer.guidance.s_I, 1.5);
    EXPECT_EQ(c.infer.guidance.s_T, 2.0);
    EXPECT_EQ(c.infer.prompt, 1);
}

TEST(Config, OverridesReplaceFileValues) {
    auto c = parse_config("[train]\nsteps = 10\n", {"train.steps=20", "infer.prompt=3", "sim.seed=9"});
    EXPECT_EQ(c.train.steps, 20);
    EXPECT_EQ(c.infer.prompt, 3);
    EXPECT_EQ(c.dataset.seed, 9u);
}

TEST(Config, UnknownKeysAreValidationErrors) {
    EXPECT_THROW(parse_config("[train]\nstepz = 10\n"), validation_error);
    EXPECT_THROW(parse_config("", {"bogus.key=1"}), validation_error);
    try {
        parse_config("[model]\nwidth = 3\n");
        FAIL() << "expected validation_error";
    } catch (const validation_error& e) {
        EXPECT_NE(std::string(e.what()).find("model.width"), std::string::npos);
    }
}

TEST(Config, MalformedInputIsValidationError) {
    EXPECT_THROW(parse_config("[train\nsteps = 1\n"), validation_error);
    EXPECT_THROW(parse_config("[]\n"), validation_error);
    EXPECT_THROW(parse_config("[train]\nsteps\n"), validation_error);
    EXPECT_THROW(parse_config("[train]\nsteps = 1\nsteps = 2\n"), validation_error);
    EXPECT_THROW(parse_config("[train]\nsteps = ten\n"), validation_error);
    EXPECT_THROW(parse_config("[train]\nlr = nan\n"), validation_error);
    EXPECT_THROW(parse_config("[sim]\npattern = XYZW\n"), validation_error);
    EXPECT_THROW(parse_config("[isp]\nccm = 1,2,3\n"), validation_error);
    EXPECT_THROW(parse_config("", {"train.steps"}), validation_error);
}

TEST(Config, SemanticChecksAreValidationErrors) {
    EXPECT_THROW(parse_config("[sim]\nwidth = 33\n"), validation_error);
    EXPECT_THROW(parse_config("[sim]\nratios = 0.5\n"), validation_error);
    EXPECT_THROW(parse_config("[train]\npatch = 20\n"), validation_error);
    EXPECT_THROW(parse_config("[train]\ndropout_text = 0.7\ndropout_both = 0.7\n"), validation_error);
    EXPECT_THROW(parse_config("[infer]\nsteps = 0\n"), validation_error);
    EXPECT_THROW(parse_config("[infer]\nprompt = 17\n"), validation_error);
    EXPECT_THROW(parse_config("[isp]\nwb_r = -1\n"), validation_error);
    EXPECT_THROW(parse_config("[sim]\nblack_level = 20000\n"), validation_error);
}

TEST(Config, RelativePathsResolveAgainstConfigFile) {
    const auto dir = fs::temp_directory_path() / "diffuseraw_test_config";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "run.ini") << "[paths]\ndataset_dir = data\ncheckpoint_dir = /abs/ckpt\n";
    auto c = load_config(dir / "run.ini", {"paths.eval_dir=held"});
    EXPECT_EQ(c.paths.dataset_dir, dir / "data");
    EXPECT_EQ(c.paths.checkpoint_dir, fs::path("/abs/ckpt"));
    EXPECT_EQ(c.paths.eval_dir, fs::path("held"));
    EXPECT_THROW(load_config(dir / "missing.ini"), io_error);
    fs::remove_all(dir);
}
