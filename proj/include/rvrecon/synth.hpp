#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvrecon/errors.hpp"
#include "rvrecon/random.hpp"
#include "rvrecon/timeseries.hpp"

// Seeded generator of physiologically coupled scans. Draw order from the
// single Rng is fixed:
//   1. breathing-rate walk, one normal per respiratory sample
//   2. deep-breath schedule
//   3. breath-hold schedule
//   4. BOLD drift coefficients, two normals per ROI
//   5. BOLD noise, row-major [T x 90]
//   6. motion random walks, row-major [T x 6]
//   7. motion noise, row-major [T x 6]
// Any new random source must bump kSynthSchemaVersion.
namespace rvrecon::synth {

inline constexpr int kSynthSchemaVersion = 1;

// Per-ROI BOLD gains. Negative, so that the delayed dip after a deep breath
// darkens the gray plot.
inline std::vector<double> default_bold_coupling() {
    std::vector<double> g(kNumRois);
    for (std::size_t i = 0; i < kNumRois; ++i) g[i] = -(0.5 + 0.5 * static_cast<double>(i) / (kNumRois - 1));
    return g;
}

struct SynthConfig {
    std::size_t n_volumes = 1200;
    double tr_s = 0.72;
    double resp_fs_hz = 10.0;
    double base_rate_hz = 0.3;
    // Breathing-rate random walk: sd per respiratory sample (Hz) and the pull
    // back towards base_rate_hz per sample.
    double rate_walk_sd = 0.002;
    double rate_reversion = 0.01;
    // Deep-breath episodes: mean rate, spacing jitter (fraction of the mean
    // interval), and amplitude gain.
    double deep_breath_rate_per_min = 60.0 / 8.3;
    double deep_breath_jitter = 0.25;
    double deep_breath_gain = 2.5;
    // Chance that a breath hold starts within any given minute.
    double breath_hold_prob = 0.3;
    double bold_noise_sd = 30.0;
    double bold_drift_sd = 0.5;
    double motion_noise_sd = 0.02;
    double motion_walk_sd = 0.002;
    std::vector<double> coupling_bold = default_bold_coupling();
    double coupling_motion_pe = 0.3;
    int pe_axis = 0;
    std::uint64_t seed = 0;
    std::string scan_id = "synth";

    void validate() const {
        if (n_volumes < 1) throw ConfigError("synth: n_volumes must be >= 1");
        if (!(tr_s > 0.0) || !(resp_fs_hz > 0.0)) throw ConfigError("synth: tr_s and resp_fs_hz must be > 0");
        if (!(base_rate_hz > 0.0) || !(base_rate_hz < resp_fs_hz / 2.0)) {
            throw ConfigError("synth: base_rate_hz must be in (0, resp_fs_hz/2)");
        }
        for (double v : {rate_walk_sd, rate_reversion, deep_breath_rate_per_min, deep_breath_jitter,
                         breath_hold_prob, bold_noise_sd, bold_drift_sd, motion_noise_sd, motion_walk_sd}) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("synth: rates and sds must be >= 0");
        }
        if (deep_breath_jitter >= 1.0) throw ConfigError("synth: deep_breath_jitter must be < 1");
        if (!(deep_breath_gain >= 1.0)) throw ConfigError("synth: deep_breath_gain must be >= 1");
        if (coupling_bold.size() != kNumRois) throw ConfigError("synth: coupling_bold needs 90 gains");
        if (pe_axis < 0 || pe_axis > 5) throw ConfigError("synth: pe_axis must be in 0..5");
    }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = {{"n_volumes", c.n_volumes},
         {"tr_s", c.tr_s},
         {"resp_fs_hz", c.resp_fs_hz},
         {"base_rate_hz", c.base_rate_hz},
         {"rate_walk_sd", c.rate_walk_sd},
         {"rate_reversion", c.rate_reversion},
         {"deep_breath_rate_per_min", c.deep_breath_rate_per_min},
         {"deep_breath_jitter", c.deep_breath_jitter},
         {"deep_breath_gain", c.deep_breath_gain},
         {"breath_hold_prob", c.breath_hold_prob},
         {"bold_noise_sd", c.bold_noise_sd},
         {"bold_drift_sd", c.bold_drift_sd},
         {"motion_noise_sd", c.motion_noise_sd},
         {"motion_walk_sd", c.motion_walk_sd},
         {"coupling_bold", c.coupling_bold},
         {"coupling_motion_pe", c.coupling_motion_pe},
         {"pe_axis", c.pe_axis},
         {"seed", c.seed},
         {"scan_id", c.scan_id}};
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, SynthConfig& c) {
    const SynthConfig d;
    c.n_volumes = j.value("n_volumes", d.n_volumes);
    c.tr_s = j.value("tr_s", d.tr_s);
    c.resp_fs_hz = j.value("resp_fs_hz", d.resp_fs_hz);
    c.base_rate_hz = j.value("base_rate_hz", d.base_rate_hz);
    c.rate_walk_sd = j.value("rate_walk_sd", d.rate_walk_sd);
    c.rate_reversion = j.value("rate_reversion", d.rate_reversion);
    c.deep_breath_rate_per_min = j.value("deep_breath_rate_per_min", d.deep_breath_rate_per_min);
    c.deep_breath_jitter = j.value("deep_breath_jitter", d.deep_breath_jitter);
    c.deep_breath_gain = j.value("deep_breath_gain", d.deep_breath_gain);
    c.breath_hold_prob = j.value("breath_hold_prob", d.breath_hold_prob);
    c.bold_noise_sd = j.value("bold_noise_sd", d.bold_noise_sd);
    c.bold_drift_sd = j.value("bold_drift_sd", d.bold_drift_sd);
    c.motion_noise_sd = j.value("motion_noise_sd", d.motion_noise_sd);
    c.motion_walk_sd = j.value("motion_walk_sd", d.motion_walk_sd);
    c.coupling_bold = j.value("coupling_bold", d.coupling_bold);
    c.coupling_motion_pe = j.value("coupling_motion_pe", d.coupling_motion_pe);
    c.pe_axis = j.value("pe_axis", d.pe_axis);
    c.seed = j.value("seed", d.seed);
    c.scan_id = j.value("scan_id", d.scan_id);
}

// Respiration response function (Birn-style), t in seconds.
inline double rrf(double t) {
    if (t < 0.0) return 0.0;
    return 0.6 * std::pow(t, 2.1) * std::exp(-t / 1.6) - 0.0023 * std::pow(t, 3.54) * std::exp(-t / 4.25);
}

// RRF on the TR grid, t = 0, tr, 2tr, ... up to 60 s.
inline std::vector<double> rrf_kernel(double tr_s, double length_s = 60.0) {
    std::vector<double> k;
    for (std::size_t i = 0; static_cast<double>(i) * tr_s <= length_s; ++i) k.push_back(rrf(static_cast<double>(i) * tr_s));
    return k;
}

namespace detail {

struct Episode {
    double start_s;
    double duration_s;
};

// 1 on the plateau, raised-cosine ramps of `ramp_s` on each side.
inline double plateau(double t, const Episode& e, double ramp_s) {
    const double a = e.start_s;
    const double b = e.start_s + e.duration_s;
    if (t <= a - ramp_s || t >= b + ramp_s) return 0.0;
    if (t >= a && t <= b) return 1.0;
    const double d = t < a ? a - t : t - b;
    return 0.5 + 0.5 * std::cos(std::numbers::pi * d / ramp_s);
}

inline double max_plateau(double t, const std::vector<Episode>& episodes, double ramp_s) {
    double v = 0.0;
    for (const auto& e : episodes) v = std::max(v, plateau(t, e, ramp_s));
    return v;
}

inline RespiratoryTrace gen_resp(const SynthConfig& c, Rng& rng) {
    const double duration = static_cast<double>(c.n_volumes) * c.tr_s;
    const auto n = static_cast<std::size_t>(std::ceil(duration * c.resp_fs_hz)) + 1;

    // 1. rate walk
    std::vector<double> rate(n);
    const double lo = 0.5 * c.base_rate_hz;
    const double hi = std::min(1.5 * c.base_rate_hz, 0.45 * c.resp_fs_hz);
    double r = c.base_rate_hz;
    for (std::size_t i = 0; i < n; ++i) {
        rate[i] = r;
        r = std::clamp(r + c.rate_reversion * (c.base_rate_hz - r) + c.rate_walk_sd * rng.normal(), lo, hi);
    }

    // 2. deep breaths: renewal process with jittered spacing; each episode
    // lasts one to three breaths.
    std::vector<Episode> deep;
    if (c.deep_breath_rate_per_min > 0.0) {
        const double interval = 60.0 / c.deep_breath_rate_per_min;
        double t = rng.uniform() * interval;
        while (t < duration) {
            const double u = rng.uniform();
            const double breaths = u < 0.7 ? 1.0 : (u < 0.9 ? 2.0 : 3.0);
            deep.push_back({t, breaths / c.base_rate_hz});
            t += interval * (1.0 + c.deep_breath_jitter * rng.uniform(-1.0, 1.0));
        }
    }

    // 3. breath holds of 10-20 s
    std::vector<Episode> holds;
    for (double minute = 0.0; minute < duration; minute += 60.0) {
        const double u = rng.uniform();
        const double start = minute + 60.0 * rng.uniform();
        const double len = rng.uniform(10.0, 20.0);
        if (u < c.breath_hold_prob) holds.push_back({start, len});
    }

    RespiratoryTrace trace{std::vector<double>(n), c.resp_fs_hz};
    double phase = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / c.resp_fs_hz;
        const double deep_factor = 1.0 + (c.deep_breath_gain - 1.0) * max_plateau(t, deep, 0.5);
        const double hold_factor = 1.0 - 0.95 * max_plateau(t, holds, 1.0);
        trace.samples[i] = deep_factor * hold_factor * std::sin(2.0 * std::numbers::pi * phase);
        phase += rate[i] / c.resp_fs_hz;
    }
    return trace;
}

// Linear interpolation of the trace at time t, clamped to its extent.
inline double sample_at(const RespiratoryTrace& trace, double t) {
    const double x = std::clamp(t * trace.fs_hz, 0.0, static_cast<double>(trace.samples.size() - 1));
    const auto i = static_cast<std::size_t>(std::floor(x));
    if (i + 1 >= trace.samples.size()) return trace.samples.back();
    const double f = x - static_cast<double>(i);
    return (1.0 - f) * trace.samples[i] + f * trace.samples[i + 1];
}

}  // namespace detail

inline RespiratoryTrace gen_resp(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);
    return detail::gen_resp(config, rng);
}

// Respiratory component of the BOLD signal before per-ROI gain:
// (RV - mean RV) convolved causally with the RRF on the TR grid.
inline std::vector<double> bold_respiratory_drive(const RvSeries& rv) {
    const auto kernel = rrf_kernel(rv.tr_s);
    double mean = 0.0;
    for (double v : rv.values) mean += v;
    mean /= static_cast<double>(rv.size());
    std::vector<double> out(rv.size(), 0.0);
    for (std::size_t t = 0; t < rv.size(); ++t) {
        double s = 0.0;
        for (std::size_t k = 0; k < kernel.size() && k <= t; ++k) s += kernel[k] * (rv.values[t - k] - mean);
        out[t] = s;
    }
    return out;
}

inline ScanRecord gen_scan(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const std::size_t T = config.n_volumes;

    ScanRecord scan;
    scan.scan_id = config.scan_id;
    scan.tr_s = config.tr_s;
    scan.pe_axis = config.pe_axis;
    scan.resp = detail::gen_resp(config, rng);
    const RvSeries rv = extract_rv(*scan.resp, config.tr_s, T);

    // BOLD
    const auto drive = bold_respiratory_drive(rv);
    std::vector<double> drift1(kNumRois), drift2(kNumRois);
    for (std::size_t i = 0; i < kNumRois; ++i) {
        drift1[i] = config.bold_drift_sd * rng.normal();
        drift2[i] = config.bold_drift_sd * rng.normal();
    }
    scan.bold = Matrix(T, kNumRois);
    for (std::size_t t = 0; t < T; ++t) {
        const double x = T > 1 ? 2.0 * static_cast<double>(t) / static_cast<double>(T - 1) - 1.0 : 0.0;
        for (std::size_t i = 0; i < kNumRois; ++i) {
            const double drift = drift1[i] * x + drift2[i] * (x * x - 1.0 / 3.0);
            scan.bold(t, i) = config.coupling_bold[i] * drive[t] + drift + config.bold_noise_sd * rng.normal();
        }
    }

    // Motion: respiratory-rate pseudomotion plus a deep-breath excursion on
    // the phase-encode axis, 0.2x copies elsewhere, random walks and noise.
    double rv_mean = 0.0;
    for (double v : rv.values) rv_mean += v;
    rv_mean /= static_cast<double>(T);
    std::vector<double> resp_part(T);
    for (std::size_t t = 0; t < T; ++t) {
        const double resp_at_tr = detail::sample_at(*scan.resp, (static_cast<double>(t) + 0.5) * config.tr_s);
        resp_part[t] = config.coupling_motion_pe * resp_at_tr + 0.5 * config.coupling_motion_pe * (rv.values[t] - rv_mean);
    }
    scan.motion = Matrix(T, kNumMotion);
    std::vector<double> walk(kNumMotion, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < kNumMotion; ++j) {
            walk[j] += config.motion_walk_sd * rng.normal();
            scan.motion(t, j) = walk[j];
        }
    }
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < kNumMotion; ++j) {
            const double gain = static_cast<int>(j) == config.pe_axis ? 1.0 : 0.2;
            scan.motion(t, j) += gain * resp_part[t] + config.motion_noise_sd * rng.normal();
        }
    }
    return scan;
}

}  // namespace rvrecon::synth
