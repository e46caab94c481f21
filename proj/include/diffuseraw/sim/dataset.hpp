#pragma once

// Paired low-light dataset generation and the manifest format.
//
// Manifest: UTF-8 text, one record per line, tab separated:
//   noisy_path <TAB> reference_path <TAB> ratio <TAB> seed
// Lines starting with '#' are comments. Relative paths resolve against the
// manifest's directory.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"
#include "diffuseraw/io/ppm.hpp"
#include "diffuseraw/isp/pipeline.hpp"
#include "diffuseraw/raw/braw.hpp"
#include "diffuseraw/sim/scene.hpp"
#include "diffuseraw/sim/sensor.hpp"

namespace diffuseraw::sim {

struct ManifestRecord {
    std::string noisy;      // as written in the manifest
    std::string reference;  // as written in the manifest
    double ratio = 1.0;
    std::uint64_t seed = 0;

    // Identifier used for per-pair outputs: the noisy file's stem.
    std::string pair_id() const { return std::filesystem::path(noisy).stem().string(); }
};

struct Manifest {
    std::filesystem::path base_dir;
    std::vector<ManifestRecord> records;

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }
};

inline constexpr const char* manifest_header = "# noisy\treference\tratio\tseed";

inline std::string format_ratio(double r) {
    std::ostringstream os;
    os.precision(17);
    os << r;
    return os.str();
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os << manifest_header << "\n";
    for (const auto& r : m.records) {
        os << r.noisy << '\t' << r.reference << '\t' << format_ratio(r.ratio) << '\t' << r.seed << '\n';
    }
    if (!os) throw io_error("write failed: " + path.string());
}

inline Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open manifest " + path.string());
    Manifest m;
    m.base_dir = path.parent_path();
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, '\t')) fields.push_back(f);
        if (fields.size() != 4) {
            throw format_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected 4 tab-separated fields, got " + std::to_string(fields.size()));
        }
        ManifestRecord r;
        r.noisy = fields[0];
        r.reference = fields[1];
        try {
            r.ratio = std::stod(fields[2]);
            r.seed = std::stoull(fields[3]);
        } catch (const std::exception&) {
            throw format_error(path.string() + ":" + std::to_string(lineno) + ": malformed number");
        }
        if (!(r.ratio > 0.0)) {
            throw format_error(path.string() + ":" + std::to_string(lineno) + ": ratio must be positive");
        }
        m.records.push_back(std::move(r));
    }
    return m;
}

struct DatasetSpec {
    int n_scenes = 8;
    std::vector<double> ratios{100.0, 300.0};
    int width = 128;
    int height = 128;
    cfa_pattern pattern = cfa_pattern::rggb;
    std::uint64_t seed = 1;
    // Offset added to scene indices; lets a held-out split share a base seed.
    int first_scene = 0;
};

inline std::string scene_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%04d", index);
    return buf;
}

inline std::string ratio_tag(double ratio) {
    std::ostringstream os;
    os << "x" << ratio;
    return os.str();
}

// Writes <scene>_ref.ppm and <scene>_x<ratio>.braw for every scene/ratio plus
// manifest.tsv in out_dir. Returns the manifest.
inline Manifest make_dataset(const DatasetSpec& spec, const SensorNoiseParams& params,
                             const isp::IspConfig& isp_cfg, const std::filesystem::path& out_dir) {
    if (spec.ratios.empty()) throw parameter_error("make_dataset: ratios must not be empty");
    if (spec.n_scenes <= 0) throw parameter_error("make_dataset: n_scenes must be positive");
    for (double r : spec.ratios) {
        if (!(r >= 1.0)) throw parameter_error("make_dataset: ratios must be >= 1, got " + format_ratio(r));
    }
    params.validate();
    isp_cfg.validate();

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw io_error("cannot create " + out_dir.string() + ": " + ec.message());

    Manifest m;
    m.base_dir = out_dir;
    for (int i = 0; i < spec.n_scenes; ++i) {
        const int index = spec.first_scene + i;
        const std::uint64_t scene_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(index));
        auto scene = synthesize_scene(spec.width, spec.height, scene_seed);
        auto rates = mosaic_scene(scene, spec.pattern);

        const std::string name = scene_name(index);
        const std::string ref_name = name + "_ref.ppm";
        save_ppm(out_dir / ref_name, isp::run_pipeline(expose_clean(rates, params), isp_cfg, 1.0));

        for (std::size_t k = 0; k < spec.ratios.size(); ++k) {
            const double ratio = spec.ratios[k];
            const std::uint64_t noise_seed =
                derive_seed(scene_seed ^ params.seed, static_cast<std::uint64_t>(std::llround(ratio * 1000.0)));
            auto noisy = expose(rates, 1.0 / ratio, params, noise_seed);
            const std::string noisy_name = name + "_" + ratio_tag(ratio) + ".braw";
            save_braw(out_dir / noisy_name, noisy);
            m.records.push_back({noisy_name, ref_name, ratio, noise_seed});
        }
    }
    write_manifest(out_dir / "manifest.tsv", m);
    return m;
}

} // namespace diffuseraw::sim
