// diffuseraw: dataset synthesis, RAW preprocessing, classical ISP rendering,
// diffusion training, inference and evaluation.
//
// Exit status: 0 ok, 1 usage, 2 validation, 3 runtime. Errors are printed as
// "error[<code>]: <message>" on stderr.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "diffuseraw/config/run_config.hpp"
#include "diffuseraw/diffusion/sampler.hpp"
#include "diffuseraw/diffusion/trainer.hpp"
#include "diffuseraw/error.hpp"
#include "diffuseraw/io/npy.hpp"
#include "diffuseraw/io/ppm.hpp"
#include "diffuseraw/isp/pipeline.hpp"
#include "diffuseraw/metrics/evaluate.hpp"
#include "diffuseraw/raw/braw.hpp"
#include "diffuseraw/raw/preprocess.hpp"
#include "diffuseraw/sim/dataset.hpp"

namespace fs = std::filesystem;
using namespace diffuseraw;

namespace {

enum exit_status { exit_ok = 0, exit_usage = 1, exit_validation = 2, exit_runtime = 3 };

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::is_regular_file(p)) throw validation_error(what + " not found: " + p.string());
}

void create_dir(const fs::path& p) {
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw io_error("cannot create " + p.string() + ": " + ec.message());
}

void cmd_simulate(const config::RunConfig& cfg) {
    auto m = sim::make_dataset(cfg.dataset, cfg.sensor, cfg.isp, cfg.paths.dataset_dir);
    std::cout << "wrote " << m.records.size() << " pairs to " << cfg.paths.dataset_dir.string() << "\n";
    if (cfg.eval_scenes > 0) {
        auto spec = cfg.dataset;
        spec.n_scenes = cfg.eval_scenes;
        spec.first_scene = cfg.dataset.first_scene + cfg.dataset.n_scenes;
        auto e = sim::make_dataset(spec, cfg.sensor, cfg.isp, cfg.paths.eval_dir);
        std::cout << "wrote " << e.records.size() << " held-out pairs to " << cfg.paths.eval_dir.string() << "\n";
    }
}

void cmd_preprocess(const fs::path& input, double alpha, const fs::path& output) {
    require_file(input, "RAW file");
    if (!(alpha > 0)) throw validation_error("--alpha must be positive");
    auto img = preprocess_raw(load_braw(input), alpha);
    save_npy(output, img);
    std::cout << "wrote " << img.shape_string() << " float32 array to " << output.string() << "\n";
}

// Traditional pipeline on one file, or on every pair of a manifest at its ratio.
void cmd_isp(const config::RunConfig& cfg, const fs::path& input, double alpha, const fs::path& output,
             const fs::path& manifest_path, const fs::path& out_dir) {
    if (!manifest_path.empty()) {
        require_file(manifest_path, "manifest");
        auto m = sim::read_manifest(manifest_path);
        create_dir(out_dir);
        for (const auto& r : m.records) {
            save_ppm(metrics::output_path(out_dir, r), isp::run_pipeline(load_braw(m.resolve(r.noisy)), cfg.isp, r.ratio));
        }
        std::cout << "rendered " << m.records.size() << " pairs to " << out_dir.string() << "\n";
        return;
    }
    require_file(input, "RAW file");
    if (!(alpha > 0)) throw validation_error("--alpha must be positive");
    save_ppm(output, isp::run_pipeline(load_braw(input), cfg.isp, alpha));
    std::cout << "wrote " << output.string() << "\n";
}

void cmd_train(const config::RunConfig& cfg) {
    const auto manifest_path = cfg.paths.dataset_dir / "manifest.tsv";
    require_file(manifest_path, "training manifest");
    auto ds = diffusion::load_pairs(sim::read_manifest(manifest_path));
    auto r = diffusion::train(ds, cfg.train, cfg.paths.checkpoint_dir,
                              [](const std::string& msg) { std::cout << msg << std::endl; });
    std::cout << "autoencoder mse " << r.autoencoder_loss << "; validation loss " << r.validation.front().second
              << " -> " << r.validation.back().second << "\n";
    std::cout << "wrote " << (cfg.paths.checkpoint_dir / "model.drck").string() << "\n";
}

void cmd_infer(const config::RunConfig& cfg, fs::path checkpoint, const fs::path& input, double alpha,
               const fs::path& output, const fs::path& manifest_path, const fs::path& out_dir) {
    if (checkpoint.empty()) checkpoint = cfg.paths.checkpoint_dir / "model.drck";
    require_file(checkpoint, "checkpoint");
    if (manifest_path.empty()) {
        require_file(input, "RAW file");
        if (!(alpha > 0)) throw validation_error("--alpha must be positive");
    } else {
        require_file(manifest_path, "manifest");
    }
    auto model = diffusion::LatentDiffusion<float>::load(checkpoint);
    auto opt = cfg.infer;
    auto run = [&](const fs::path& raw_path, double ratio, const fs::path& dst) {
        auto o = opt;
        if (o.prompt == config::auto_prompt) o.prompt = diffusion::prompt_for_ratio(ratio);
        save_ppm(dst, diffusion::sample(model, preprocess_raw(load_braw(raw_path), ratio), o));
    };
    if (manifest_path.empty()) {
        run(input, alpha, output);
        std::cout << "wrote " << output.string() << "\n";
        return;
    }
    auto m = sim::read_manifest(manifest_path);
    create_dir(out_dir);
    for (const auto& r : m.records) {
        run(m.resolve(r.noisy), r.ratio, metrics::output_path(out_dir, r));
        std::cout << "wrote " << metrics::output_path(out_dir, r).string() << std::endl;
    }
}

void cmd_eval(const fs::path& manifest_path, const fs::path& outputs, fs::path report_path) {
    require_file(manifest_path, "manifest");
    if (!fs::is_directory(outputs)) throw validation_error("outputs directory not found: " + outputs.string());
    auto report = metrics::evaluate(sim::read_manifest(manifest_path), outputs);
    if (report_path.empty()) report_path = outputs / "report.tsv";
    metrics::write_report(report_path, report);
    std::cout << metrics::format_summary(report);
    std::cout << "wrote " << report_path.string() << "\n";
}

int status_for(error_code c) {
    switch (c) {
    case error_code::validation:
    case error_code::parameter: return exit_validation;
    default: return exit_runtime;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Generative RAW image processing toolkit"};
    app.require_subcommand(1);

    fs::path config_path;
    std::vector<std::string> overrides;
    app.add_option("-c,--config", config_path, "Run configuration file");
    app.add_option("--set", overrides, "Override a config key (section.key=value)");

    fs::path input, output, manifest, out_dir, checkpoint, report;
    double alpha = 1.0;
    std::optional<double> s_I, s_T;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;

    auto* sim_cmd = app.add_subcommand("simulate", "Synthesize paired low-light training and held-out data");

    auto* pre_cmd = app.add_subcommand("preprocess", "Pack, normalize, amplify and upsample a .braw file to .npy");
    pre_cmd->add_option("input", input, "Input .braw file")->required();
    pre_cmd->add_option("--alpha", alpha, "Amplification factor")->required();
    pre_cmd->add_option("-o,--output", output, "Output .npy file")->required();

    auto* isp_cmd = app.add_subcommand("isp", "Render with the traditional pipeline");
    isp_cmd->add_option("input", input, "Input .braw file");
    isp_cmd->add_option("--alpha", alpha, "Exposure scale applied before white balance")->capture_default_str();
    isp_cmd->add_option("-o,--output", output, "Output PPM file");
    isp_cmd->add_option("--manifest", manifest, "Render every pair of a manifest at its ratio");
    isp_cmd->add_option("--out-dir", out_dir, "Output directory for --manifest");

    auto* train_cmd = app.add_subcommand("train", "Train the autoencoder and the conditional denoiser");

    auto* infer_cmd = app.add_subcommand("infer", "Sample processed images from short-exposure RAW");
    infer_cmd->add_option("input", input, "Input .braw file");
    infer_cmd->add_option("--alpha", alpha, "Amplification factor");
    infer_cmd->add_option("-o,--output", output, "Output PPM file");
    infer_cmd->add_option("--manifest", manifest, "Process every pair of a manifest at its ratio");
    infer_cmd->add_option("--out-dir", out_dir, "Output directory for --manifest");
    infer_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint (default <checkpoint_dir>/model.drck)");
    infer_cmd->add_option("--s-image", s_I, "Image guidance scale");
    infer_cmd->add_option("--s-text", s_T, "Text guidance scale");
    infer_cmd->add_option("--seed", seed, "Sampling seed");
    infer_cmd->add_option("--steps", steps, "Reverse diffusion steps");

    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of output images against manifest references");
    eval_cmd->add_option("--manifest", manifest, "Manifest with references")->required();
    eval_cmd->add_option("--outputs", out_dir, "Directory with <pair_id>.ppm outputs")->required();
    eval_cmd->add_option("--report", report, "Report path (default <outputs>/report.tsv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_usage;
    }

    try {
        auto cfg = config::load_config(config_path, overrides);
        if (s_I) cfg.infer.guidance.s_I = *s_I;
        if (s_T) cfg.infer.guidance.s_T = *s_T;
        if (seed) cfg.infer.seed = *seed;
        if (steps) cfg.infer.steps = *steps;
        cfg.validate();

        if (*sim_cmd) {
            cmd_simulate(cfg);
        } else if (*pre_cmd) {
            cmd_preprocess(input, alpha, output);
        } else if (*isp_cmd) {
            const bool batch = !manifest.empty() && !out_dir.empty() && input.empty();
            const bool single = manifest.empty() && out_dir.empty() && !input.empty() && !output.empty();
            if (!batch && !single) {
                throw validation_error("isp needs either <input> and --output, or --manifest and --out-dir");
            }
            cmd_isp(cfg, input, alpha, output, manifest, out_dir);
        } else if (*train_cmd) {
            cmd_train(cfg);
        } else if (*infer_cmd) {
            const bool batch = !manifest.empty() && !out_dir.empty() && input.empty();
            const bool single = manifest.empty() && out_dir.empty() && !input.empty() && !output.empty();
            if (!batch && !single) {
                throw validation_error("infer needs either <input>, --alpha and --output, or --manifest and --out-dir");
            }
            if (single && infer_cmd->count("--alpha") == 0) throw validation_error("infer needs --alpha for a single file");
            cmd_infer(cfg, checkpoint, input, alpha, output, batch ? manifest : fs::path{}, out_dir);
        } else if (*eval_cmd) {
            cmd_eval(manifest, out_dir, report);
        }
    } catch (const error& e) {
        std::cerr << "error[" << to_string(e.code()) << "]: " << e.what() << "\n";
        return status_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error[runtime]: " << e.what() << "\n";
        return exit_runtime;
    }
    return exit_ok;
}
