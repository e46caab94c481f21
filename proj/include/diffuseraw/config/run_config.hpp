#pragma once

// Run configuration: a flat key = value text file with [section] headers.
// '#' starts a comment. Keys are addressed as section.key; every key in the
// file must be known and overrides use the same section.key=value form.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "diffuseraw/diffusion/sampler.hpp"
#include "diffuseraw/diffusion/text.hpp"
#include "diffuseraw/diffusion/trainer.hpp"
#include "diffuseraw/error.hpp"
#include "diffuseraw/isp/pipeline.hpp"
#include "diffuseraw/raw/bayer.hpp"
#include "diffuseraw/sim/dataset.hpp"
#include "diffuseraw/sim/sensor.hpp"

namespace diffuseraw::config {

struct Paths {
    std::filesystem::path dataset_dir = "data/train";
    std::filesystem::path eval_dir = "data/eval";
    std::filesystem::path checkpoint_dir = "runs/train";
    std::filesystem::path output_dir = "runs/infer";
};

// infer.prompt value selecting the template that matches each input's ratio.
inline constexpr int auto_prompt = -1;

struct RunConfig {
    Paths paths;
    sim::DatasetSpec dataset;
    int eval_scenes = 8;
    sim::SensorNoiseParams sensor;
    isp::IspConfig isp;
    diffusion::TrainConfig train;
    diffusion::SampleOptions infer{.prompt = auto_prompt};

    void validate() const {
        if (dataset.n_scenes <= 0 || eval_scenes < 0) {
            throw validation_error("sim.n_scenes must be positive and sim.eval_scenes >= 0");
        }
        if (dataset.width <= 0 || dataset.height <= 0 || dataset.width % 2 || dataset.height % 2) {
            throw validation_error("sim.width and sim.height must be positive and even");
        }
        if (dataset.ratios.empty()) throw validation_error("sim.ratios must list at least one ratio");
        for (double r : dataset.ratios) {
            if (!(r >= 1.0) || !std::isfinite(r)) throw validation_error("sim.ratios entries must be >= 1");
        }
        if (infer.steps < 1 || infer.steps > 1000) throw validation_error("infer.steps must be in [1, 1000]");
        if (infer.prompt < auto_prompt || infer.prompt >= diffusion::vocabulary_size()) {
            throw validation_error("infer.prompt must be auto, a template text or an id in [0, " +
                                   std::to_string(diffusion::vocabulary_size() - 1) + "]");
        }
        try {
            sensor.validate();
            isp.validate();
            train.validate();
            infer.guidance.validate();
        } catch (const error& e) {
            throw validation_error(e.what());
        }
    }
};

struct ConfigEntry {
    std::string value;
    std::string origin;  // "file:line" or "--set <key>"
    bool from_file = true;
};

using ConfigEntries = std::map<std::string, ConfigEntry>;

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::pair<std::string, std::string> split_assignment(const std::string& line, const std::string& where) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw validation_error(where + ": expected key = value, got \"" + line + "\"");
    auto key = trim(std::string_view(line).substr(0, eq));
    auto value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw validation_error(where + ": empty key");
    return {key, value};
}

} // namespace detail

inline ConfigEntries parse_entries(std::istream& is, const std::string& origin) {
    ConfigEntries out;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::string where = origin + ":" + std::to_string(lineno);
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw validation_error(where + ": malformed section header");
            section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
            if (section.empty()) throw validation_error(where + ": empty section name");
            continue;
        }
        auto [key, value] = detail::split_assignment(line, where);
        const std::string full = section.empty() ? key : section + "." + key;
        if (out.count(full)) throw validation_error(where + ": duplicate key " + full);
        out[full] = {value, where};
    }
    return out;
}

// Applies "section.key=value" overrides on top of file entries.
inline void apply_overrides(ConfigEntries& entries, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        auto [key, value] = detail::split_assignment(o, "--set");
        entries[key] = {value, "--set " + key, false};
    }
}

namespace detail {

// Consumes known keys and reports any left over.
class Reader {
public:
    explicit Reader(ConfigEntries entries) : entries_(std::move(entries)) {}

    template <typename F>
    void read(const std::string& key, F&& assign) {
        auto it = entries_.find(key);
        if (it == entries_.end()) return;
        try {
            assign(it->second.value);
        } catch (const validation_error& e) {
            throw validation_error(it->second.origin + ": " + key + ": " + e.what());
        }
        entries_.erase(it);
    }

    bool from_file(const std::string& key) const {
        auto it = entries_.find(key);
        return it != entries_.end() && it->second.from_file;
    }

    void finish() const {
        if (!entries_.empty()) {
            const auto& [key, entry] = *entries_.begin();
            throw validation_error(entry.origin + ": unknown key " + key);
        }
    }

private:
    ConfigEntries entries_;
};

template <typename I>
I to_int(const std::string& s) {
    I v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw validation_error("expected an integer, got \"" + s + "\"");
    return v;
}

inline double to_double(const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) {
        throw validation_error("expected a finite number, got \"" + s + "\"");
    }
    return v;
}

inline std::vector<double> to_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
    return out;
}

} // namespace detail

inline RunConfig build_config(ConfigEntries entries, const std::filesystem::path& base_dir = {}) {
    using namespace detail;
    RunConfig c;
    Reader r(std::move(entries));
    auto path_key = [&](const std::string& key, std::filesystem::path& dst) {
        const bool relative_to_file = r.from_file(key) && !base_dir.empty();
        r.read(key, [&](const std::string& v) {
            if (v.empty()) throw validation_error("path must not be empty");
            std::filesystem::path p(v);
            dst = p.is_absolute() || !relative_to_file ? p : base_dir / p;
        });
    };
    auto int_key = [&](const std::string& key, int& dst) { r.read(key, [&](const std::string& v) { dst = to_int<int>(v); }); };
    auto dbl_key = [&](const std::string& key, double& dst) { r.read(key, [&](const std::string& v) { dst = to_double(v); }); };
    auto seed_key = [&](const std::string& key, std::uint64_t& dst) {
        r.read(key, [&](const std::string& v) { dst = to_int<std::uint64_t>(v); });
    };
    auto dn_key = [&](const std::string& key, std::uint16_t& dst) {
        r.read(key, [&](const std::string& v) { dst = to_int<std::uint16_t>(v); });
    };

    path_key("paths.dataset_dir", c.paths.dataset_dir);
    path_key("paths.eval_dir", c.paths.eval_dir);
    path_key("paths.checkpoint_dir", c.paths.checkpoint_dir);
    path_key("paths.output_dir", c.paths.output_dir);

    int_key("sim.n_scenes", c.dataset.n_scenes);
    int_key("sim.eval_scenes", c.eval_scenes);
    r.read("sim.ratios", [&](const std::string& v) { c.dataset.ratios = to_list(v); });
    int_key("sim.width", c.dataset.width);
    int_key("sim.height", c.dataset.height);
    r.read("sim.pattern", [&](const std::string& v) {
        std::string upper = v;
        std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char ch) { return std::toupper(ch); });
        auto p = parse_cfa_pattern(upper);
        if (!p) throw validation_error("expected RGGB, BGGR, GRBG or GBRG, got \"" + v + "\"");
        c.dataset.pattern = *p;
    });
    seed_key("sim.seed", c.dataset.seed);
    dbl_key("sim.full_well", c.sensor.full_well_photons);
    dbl_key("sim.read_noise", c.sensor.read_noise_dn);
    dn_key("sim.black_level", c.sensor.black_level);
    dn_key("sim.white_level", c.sensor.white_level);
    seed_key("sim.noise_seed", c.sensor.seed);
    dbl_key("sim.reference_exposure_s", c.sensor.reference_exposure_s);

    dbl_key("isp.wb_r", c.isp.wb_gains[0]);
    dbl_key("isp.wb_g", c.isp.wb_gains[1]);
    dbl_key("isp.wb_b", c.isp.wb_gains[2]);
    r.read("isp.ccm", [&](const std::string& v) {
        auto vals = to_list(v);
        if (vals.size() != 9) throw validation_error("expected 9 comma-separated values (row-major)");
        for (int i = 0; i < 9; ++i) c.isp.ccm[i / 3][i % 3] = vals[i];
    });
    r.read("isp.gamma", [&](const std::string& v) {
        if (v == "srgb") {
            c.isp.srgb_gamma = true;
        } else {
            c.isp.srgb_gamma = false;
            c.isp.gamma = to_double(v);
        }
    });

    auto& t = c.train;
    int_key("model.latent_channels", t.model.latent_channels);
    int_key("model.ae_width", t.model.ae_width);
    int_key("model.unet_c0", t.model.unet_c0);
    int_key("model.unet_c1", t.model.unet_c1);
    int_key("model.unet_c2", t.model.unet_c2);
    int_key("model.time_dim", t.model.time_dim);
    int_key("model.emb_dim", t.model.emb_dim);

    int_key("train.patch", t.patch);
    int_key("train.batch", t.batch);
    int_key("train.steps", t.steps);
    dbl_key("train.lr", t.lr);
    r.read("train.warmup", [&](const std::string& v) { t.warmup = to_int<long>(v); });
    dbl_key("train.weight_decay", t.weight_decay);
    int_key("train.checkpoint_every", t.checkpoint_every);
    int_key("train.val_every", t.val_every);
    int_key("train.val_size", t.val_size);
    seed_key("train.seed", t.seed);
    dbl_key("train.dropout_text", t.dropout.text_only);
    dbl_key("train.dropout_both", t.dropout.both);
    int_key("train.ae_steps", t.autoencoder.steps);
    int_key("train.ae_batch", t.autoencoder.batch);
    dbl_key("train.ae_lr", t.autoencoder.lr);
    r.read("train.ae_warmup", [&](const std::string& v) { t.autoencoder.warmup = to_int<long>(v); });

    dbl_key("infer.s_I", c.infer.guidance.s_I);
    dbl_key("infer.s_T", c.infer.guidance.s_T);
    int_key("infer.steps", c.infer.steps);
    seed_key("infer.seed", c.infer.seed);
    r.read("infer.prompt", [&](const std::string& v) {
        if (v == "auto") {
            c.infer.prompt = auto_prompt;
            return;
        }
        try {
            c.infer.prompt = diffusion::prompt_id(v);
        } catch (const error&) {
            c.infer.prompt = to_int<int>(v);
        }
    });

    r.finish();
    c.validate();
    return c;
}

// Reads `path` (when non-empty) and applies overrides. Relative paths in the
// file resolve against the file's directory, those in overrides against the
// working directory.
inline RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {}) {
    ConfigEntries entries;
    std::filesystem::path base;
    if (!path.empty()) {
        std::ifstream is(path);
        if (!is) throw io_error("cannot open config " + path.string());
        entries = parse_entries(is, path.string());
        base = path.parent_path();
    }
    apply_overrides(entries, overrides);
    return build_config(std::move(entries), base);
}

inline RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {}) {
    std::istringstream is(text);
    auto entries = parse_entries(is, "<config>");
    apply_overrides(entries, overrides);
    return build_config(std::move(entries));
}

} // namespace diffuseraw::config
