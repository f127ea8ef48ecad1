#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rvrecon/errors.hpp"
#include "rvrecon/matrix.hpp"

namespace rvrecon {

inline constexpr std::size_t kNumRois = 90;
inline constexpr std::size_t kNumMotion = 6;
// Half-width of the RV standard-deviation window, seconds.
inline constexpr double kRvHalfWindowS = 3.0;

// Raw respiratory belt waveform, arbitrary units, uniformly sampled from t=0.
struct RespiratoryTrace {
    std::vector<double> samples;
    double fs_hz = 0.0;

    double end_time_s() const { return static_cast<double>(samples.size() - 1) / fs_hz; }

    void validate() const {
        if (!(fs_hz > 0.0) || !std::isfinite(fs_hz)) throw DataError("respiratory trace: fs must be > 0");
        if (samples.empty()) throw DataError("respiratory trace: no samples");
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (!std::isfinite(samples[i])) {
                throw DataError("respiratory trace: non-finite sample at index " + std::to_string(i));
            }
        }
    }

    friend bool operator==(const RespiratoryTrace&, const RespiratoryTrace&) = default;
};

// One fMRI run: ROI-averaged BOLD [T x 90], motion [T x 6] (translations in
// mm, then rotations in degrees), and an optional respiratory trace.
struct ScanRecord {
    std::string scan_id;
    Matrix bold;
    Matrix motion;
    double tr_s = 0.0;
    int pe_axis = 0;
    std::optional<RespiratoryTrace> resp;

    std::size_t n_volumes() const noexcept { return bold.rows(); }

    void validate() const {
        if (bold.rows() < 1) throw SchemaError(scan_id + ": scan has no volumes");
        if (bold.cols() != kNumRois) {
            throw SchemaError(scan_id + ": expected " + std::to_string(kNumRois) + " BOLD columns, got " +
                              std::to_string(bold.cols()));
        }
        if (motion.cols() != kNumMotion) {
            throw SchemaError(scan_id + ": expected 6 motion columns, got " + std::to_string(motion.cols()));
        }
        if (bold.rows() != motion.rows()) {
            throw SchemaError(scan_id + ": BOLD has " + std::to_string(bold.rows()) + " rows but motion has " +
                              std::to_string(motion.rows()));
        }
        if (!(tr_s > 0.0) || !std::isfinite(tr_s)) throw DataError(scan_id + ": tr_s must be > 0");
        if (pe_axis < 0 || pe_axis >= static_cast<int>(kNumMotion)) {
            throw DataError(scan_id + ": pe_axis must be in 0..5");
        }
        for (double v : bold.values()) {
            if (!std::isfinite(v)) throw DataError(scan_id + ": non-finite BOLD value");
        }
        for (double v : motion.values()) {
            if (!std::isfinite(v)) throw DataError(scan_id + ": non-finite motion value");
        }
        if (resp) resp->validate();
    }

    friend bool operator==(const ScanRecord&, const ScanRecord&) = default;
};

// Respiratory variation sampled once per volume.
struct RvSeries {
    std::vector<double> values;
    double tr_s = 0.0;

    std::size_t size() const noexcept { return values.size(); }
    friend bool operator==(const RvSeries&, const RvSeries&) = default;
};

// Population standard deviation, two-pass.
inline double population_std(std::span<const double> xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

// RV[t] is the population standard deviation of the trace over the 6 s
// window centred on the middle of volume t, clamped to the trace extent.
inline RvSeries extract_rv(const RespiratoryTrace& resp, double tr_s, std::size_t n_volumes) {
    resp.validate();
    if (!(tr_s > 0.0)) throw DataError("extract_rv: tr_s must be > 0");
    if (n_volumes < 1) throw DataError("extract_rv: n_volumes must be >= 1");

    // Absorbs rounding in t*fs so that samples sitting exactly on a window
    // edge are included.
    constexpr double kEdgeSlack = 1e-9;
    const double end = resp.end_time_s();
    const auto last = static_cast<double>(resp.samples.size() - 1);

    RvSeries rv;
    rv.tr_s = tr_s;
    rv.values.resize(n_volumes);
    for (std::size_t t = 0; t < n_volumes; ++t) {
        const double centre = (static_cast<double>(t) + 0.5) * tr_s;
        const double lo = std::max(centre - kRvHalfWindowS, 0.0);
        const double hi = std::min(centre + kRvHalfWindowS, end);
        const double first = std::max(std::ceil(lo * resp.fs_hz - kEdgeSlack), 0.0);
        const double stop = std::min(std::floor(hi * resp.fs_hz + kEdgeSlack), last);
        if (!(stop >= first + 1.0)) {
            throw DegenerateWindowError("extract_rv: window for volume " + std::to_string(t) +
                                        " holds fewer than 2 samples");
        }
        const auto i0 = static_cast<std::size_t>(first);
        const auto i1 = static_cast<std::size_t>(stop);
        rv.values[t] = population_std(std::span<const double>(resp.samples).subspan(i0, i1 - i0 + 1));
    }
    return rv;
}

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> std;
    // Columns whose values are all identical; these map to zeros.
    std::vector<bool> constant;
};

struct ZScored {
    Matrix data;
    ChannelStats stats;
};

// Column-wise z-score with the sample (n-1) standard deviation.
inline ZScored zscore_channels(const Matrix& m) {
    if (m.rows() < 2) throw ShapeError("zscore_channels: need at least 2 rows");
    const std::size_t n = m.rows();
    const std::size_t c = m.cols();
    ZScored out{Matrix(n, c), {std::vector<double>(c), std::vector<double>(c), std::vector<bool>(c)}};
    for (std::size_t j = 0; j < c; ++j) {
        double mean = 0.0;
        double lo = m(0, j);
        double hi = m(0, j);
        for (std::size_t i = 0; i < n; ++i) {
            mean += m(i, j);
            lo = std::min(lo, m(i, j));
            hi = std::max(hi, m(i, j));
        }
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) ss += (m(i, j) - mean) * (m(i, j) - mean);
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        out.stats.mean[j] = mean;
        out.stats.std[j] = sd;
        out.stats.constant[j] = (lo == hi);
        if (lo == hi) continue;
        for (std::size_t i = 0; i < n; ++i) out.data(i, j) = (m(i, j) - mean) / sd;
    }
    return out;
}

}  // namespace rvrecon
