#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvrecon/csv.hpp"
#include "rvrecon/errors.hpp"
#include "rvrecon/timeseries.hpp"

namespace rvrecon {

inline const std::vector<std::string>& bold_header() {
    static const std::vector<std::string> header = [] {
        std::vector<std::string> h;
        for (std::size_t i = 0; i < kNumRois; ++i) h.push_back("roi_" + std::to_string(i));
        return h;
    }();
    return header;
}

inline const std::vector<std::string>& motion_header() {
    static const std::vector<std::string> header = {"trans_x_mm", "trans_y_mm", "trans_z_mm",
                                                    "rot_x_deg",  "rot_y_deg",  "rot_z_deg"};
    return header;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open file");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": invalid JSON: " + e.what());
    }
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << j.dump(2) << '\n';
}

inline RespiratoryTrace read_resp_csv(const std::filesystem::path& path, double fs_hz) {
    const auto table = csv::read_numeric(path);
    static const std::vector<std::string> header = {"resp"};
    csv::expect_header(table, header, path.string());
    RespiratoryTrace trace{table.data.storage(), fs_hz};
    if (trace.samples.empty()) throw DataError(path.string() + ": no samples");
    return trace;
}

struct ScanMeta {
    std::string scan_id;
    double tr_s = 0.0;
    int pe_axis = 0;
    std::optional<double> resp_fs_hz;
};

inline ScanMeta read_meta(const std::filesystem::path& path) {
    const auto j = read_json_file(path);
    ScanMeta meta;
    try {
        meta.scan_id = j.at("scan_id").get<std::string>();
        meta.tr_s = j.at("tr_s").get<double>();
        meta.pe_axis = j.at("pe_axis").get<int>();
        if (j.contains("resp_fs_hz") && !j.at("resp_fs_hz").is_null()) {
            meta.resp_fs_hz = j.at("resp_fs_hz").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    if (!(meta.tr_s > 0.0)) throw DataError(path.string() + ": tr_s must be > 0");
    if (meta.pe_axis < 0 || meta.pe_axis > 5) throw DataError(path.string() + ": pe_axis must be in 0..5");
    return meta;
}

inline ScanRecord read_scan(const std::filesystem::path& bold_path, const std::filesystem::path& motion_path,
                            const std::filesystem::path& meta_path,
                            const std::optional<std::filesystem::path>& resp_path = std::nullopt) {
    const auto meta = read_meta(meta_path);
    auto bold = csv::read_numeric(bold_path);
    csv::expect_header(bold, bold_header(), bold_path.string());
    auto motion = csv::read_numeric(motion_path);
    csv::expect_header(motion, motion_header(), motion_path.string());
    if (bold.data.rows() != motion.data.rows()) {
        throw SchemaError(bold_path.string() + " has " + std::to_string(bold.data.rows()) + " rows but " +
                          motion_path.string() + " has " + std::to_string(motion.data.rows()));
    }

    ScanRecord scan;
    scan.scan_id = meta.scan_id;
    scan.bold = std::move(bold.data);
    scan.motion = std::move(motion.data);
    scan.tr_s = meta.tr_s;
    scan.pe_axis = meta.pe_axis;
    if (resp_path) {
        if (!meta.resp_fs_hz) throw SchemaError(meta_path.string() + ": resp_fs_hz required when resp is given");
        scan.resp = read_resp_csv(*resp_path, *meta.resp_fs_hz);
    }
    scan.validate();
    return scan;
}

// Reads bold.csv, motion.csv, meta.json and (if present) resp.csv from a
// scan directory.
inline ScanRecord read_scan_dir(const std::filesystem::path& dir) {
    std::optional<std::filesystem::path> resp;
    if (std::filesystem::exists(dir / "resp.csv")) resp = dir / "resp.csv";
    return read_scan(dir / "bold.csv", dir / "motion.csv", dir / "meta.json", resp);
}

inline void write_scan_dir(const std::filesystem::path& dir, const ScanRecord& scan) {
    scan.validate();
    std::filesystem::create_directories(dir);
    csv::write_numeric(dir / "bold.csv", bold_header(), scan.bold);
    csv::write_numeric(dir / "motion.csv", motion_header(), scan.motion);
    nlohmann::json meta = {
        {"scan_id", scan.scan_id},
        {"tr_s", scan.tr_s},
        {"pe_axis", scan.pe_axis},
        {"motion_units", {"mm", "mm", "mm", "deg", "deg", "deg"}},
    };
    if (scan.resp) {
        meta["resp_fs_hz"] = scan.resp->fs_hz;
        static const std::vector<std::string> header = {"resp"};
        csv::write_numeric(dir / "resp.csv", header, Matrix(scan.resp->samples.size(), 1, scan.resp->samples));
    }
    write_json_file(dir / "meta.json", meta);
}

inline void write_rv_csv(const std::filesystem::path& path, const RvSeries& rv) {
    static const std::vector<std::string> header = {"volume", "rv"};
    Matrix m(rv.size(), 2);
    for (std::size_t t = 0; t < rv.size(); ++t) {
        m(t, 0) = static_cast<double>(t + 1);
        m(t, 1) = rv.values[t];
    }
    csv::write_numeric(path, header, m);
}

}  // namespace rvrecon
