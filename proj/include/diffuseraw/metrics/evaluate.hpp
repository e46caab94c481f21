#pragma once

// Per-pair PSNR/SSIM against manifest references, aggregated by ratio.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "diffuseraw/error.hpp"
#include "diffuseraw/io/ppm.hpp"
#include "diffuseraw/metrics/quality.hpp"
#include "diffuseraw/sim/dataset.hpp"

namespace diffuseraw::metrics {

struct EvalRecord {
    std::string pair_id;
    double ratio = 1.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct EvalAggregate {
    int count = 0;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    std::map<double, EvalAggregate> by_ratio;

    void add(EvalRecord r) { records.push_back(std::move(r)); }

    // Recomputes the per-ratio arithmetic means from the records.
    void aggregate() {
        by_ratio.clear();
        for (const auto& r : records) {
            auto& a = by_ratio[r.ratio];
            ++a.count;
            a.mean_psnr += r.psnr_db;
            a.mean_ssim += r.ssim;
        }
        for (auto& [ratio, a] : by_ratio) {
            a.mean_psnr /= a.count;
            a.mean_ssim /= a.count;
        }
    }

    const EvalAggregate& at_ratio(double ratio) const {
        auto it = by_ratio.find(ratio);
        if (it == by_ratio.end()) throw validation_error("report has no pairs at ratio " + sim::format_ratio(ratio));
        return it->second;
    }
};

// Output image for a pair: <outputs_dir>/<pair_id>.ppm
inline std::filesystem::path output_path(const std::filesystem::path& outputs_dir, const sim::ManifestRecord& r) {
    return outputs_dir / (r.pair_id() + ".ppm");
}

inline EvalReport evaluate(const sim::Manifest& manifest, const std::filesystem::path& outputs_dir) {
    if (manifest.records.empty()) throw validation_error("manifest has no pairs");
    EvalReport report;
    for (const auto& rec : manifest.records) {
        const auto out_path = output_path(outputs_dir, rec);
        if (!std::filesystem::exists(out_path)) {
            throw io_error("missing output for pair " + rec.pair_id() + ": " + out_path.string());
        }
        const auto out = load_ppm(out_path);
        const auto ref = load_ppm(manifest.resolve(rec.reference));
        if (!out.same_shape(ref)) {
            throw dimension_error("pair " + rec.pair_id() + ": output " + out.shape_string() + " vs reference " +
                                  ref.shape_string());
        }
        report.add({rec.pair_id(), rec.ratio, psnr(out, ref), ssim(out, ref)});
    }
    report.aggregate();
    return report;
}

inline void write_report(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    os << "# pair_id\tratio\tpsnr_db\tssim\n";
    os.precision(10);
    for (const auto& r : report.records) {
        os << r.pair_id << '\t' << sim::format_ratio(r.ratio) << '\t' << r.psnr_db << '\t' << r.ssim << '\n';
    }
    for (const auto& [ratio, a] : report.by_ratio) {
        os << "# mean\tx" << sim::format_ratio(ratio) << "\tn=" << a.count << '\t' << a.mean_psnr << '\t' << a.mean_ssim
           << '\n';
    }
    if (!os) throw io_error("write failed: " + path.string());
}

inline std::string format_summary(const EvalReport& report) {
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof line, "%-8s %6s %10s %8s\n", "ratio", "pairs", "PSNR(dB)", "SSIM");
    os << line;
    for (const auto& [ratio, a] : report.by_ratio) {
        std::snprintf(line, sizeof line, "x%-7g %6d %10.3f %8.4f\n", ratio, a.count, a.mean_psnr, a.mean_ssim);
        os << line;
    }
    return os.str();
}

} // namespace diffuseraw::metrics
