#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvrecon/csv.hpp"
#include "rvrecon/dataset.hpp"
#include "rvrecon/errors.hpp"
#include "rvrecon/metrics.hpp"
#include "rvrecon/neuralnet.hpp"
#include "rvrecon/random.hpp"
#include "rvrecon/scan_io.hpp"
#include "rvrecon/synth.hpp"
#include "rvrecon/timeseries.hpp"

namespace rvrecon {

inline constexpr const char* kVersion = "1.0.0";

struct ExperimentConfig {
    std::vector<std::filesystem::path> scan_dirs;
    std::size_t k_folds = 10;
    std::size_t window_len = 65;
    nn::TrainConfig train;
    // Only every n-th Method-2 window is used for training; prediction
    // always uses all windows.
    std::size_t train_stride = 1;
    std::vector<ChannelMode> modes = {ChannelMode::bold_only, ChannelMode::bold_plus_motion};
    bool normalize_targets = true;
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;
    // Layer list without the input shape; empty selects the reference architecture.
    nlohmann::json arch = nlohmann::json::array();

    void validate() const {
        if (k_folds < 2) throw ConfigError("k_folds must be >= 2");
        if (k_folds > scan_dirs.size()) {
            throw ConfigError("k_folds (" + std::to_string(k_folds) + ") exceeds the number of scans (" +
                              std::to_string(scan_dirs.size()) + ")");
        }
        if (modes.empty()) throw ConfigError("at least one channel mode is required");
        if (train_stride == 0) throw ConfigError("train_stride must be >= 1");
        WindowSpec{window_len, kNumRois}.validate();
        train.validate();
    }
};

inline nlohmann::json train_config_to_json(const nn::TrainConfig& t) {
    return {{"learning_rate", t.learning_rate}, {"beta1", t.beta1},           {"beta2", t.beta2},
            {"epsilon", t.epsilon},             {"batch_size", t.batch_size}, {"epochs", t.epochs}};
}

inline nn::TrainConfig train_config_from_json(const nlohmann::json& j) {
    nn::TrainConfig t;
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.beta1 = j.value("beta1", t.beta1);
    t.beta2 = j.value("beta2", t.beta2);
    t.epsilon = j.value("epsilon", t.epsilon);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.epochs = j.value("epochs", t.epochs);
    return t;
}

// Everything that defines the experiment. The output directory is left out
// so that the config hash does not depend on where results are written.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    std::vector<std::string> dirs;
    for (const auto& d : c.scan_dirs) dirs.push_back(d.generic_string());
    std::vector<std::string> modes;
    for (auto m : c.modes) modes.push_back(to_string(m));
    return {{"scans", dirs},
            {"k_folds", c.k_folds},
            {"window_len", c.window_len},
            {"train", train_config_to_json(c.train)},
            {"train_stride", c.train_stride},
            {"modes", modes},
            {"normalize_targets", c.normalize_targets},
            {"seed", c.seed},
            {"arch", c.arch}};
}

// Scan directories are subdirectories of `root` holding a meta.json, sorted by name.
inline std::vector<std::filesystem::path> discover_scans(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw ConfigError(root.string() + ": not a directory");
    std::vector<std::filesystem::path> dirs;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

// Relative paths are resolved against `base` (the config file's directory).
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
    ExperimentConfig c;
    try {
        auto resolve = [&](const std::string& p) {
            std::filesystem::path path(p);
            return path.is_absolute() || base.empty() ? path : base / path;
        };
        if (j.contains("scans")) {
            for (const auto& s : j.at("scans")) c.scan_dirs.push_back(resolve(s.get<std::string>()));
        }
        if (j.contains("scan_root")) {
            for (auto& d : discover_scans(resolve(j.at("scan_root").get<std::string>()))) c.scan_dirs.push_back(d);
        }
        c.k_folds = j.value("k_folds", c.k_folds);
        c.window_len = j.value("window_len", c.window_len);
        if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
        c.train_stride = j.value("train_stride", c.train_stride);
        if (j.contains("modes")) {
            c.modes.clear();
            for (const auto& m : j.at("modes")) c.modes.push_back(parse_channel_mode(m.get<std::string>()));
        }
        c.normalize_targets = j.value("normalize_targets", c.normalize_targets);
        c.seed = j.value("seed", c.seed);
        if (j.contains("output_dir")) c.output_dir = resolve(j.at("output_dir").get<std::string>());
        if (j.contains("arch")) c.arch = j.at("arch");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return config_from_json(read_json_file(path), path.parent_path());
}

// FNV-1a 64 over the compact JSON dump, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
    const std::string text = config_to_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::vector<nn::LayerSpec> resolve_arch(const ExperimentConfig& c, ChannelMode mode, Method method) {
    const WindowSpec spec = WindowSpec::for_mode(mode, c.window_len);
    const std::size_t out_dim = spec.target_dim(method);
    if (c.arch.empty()) return nn::reference_architecture(c.window_len, spec.n_channels, out_dim);
    // Custom layer lists may leave the first conv's in_channels and the last
    // dense's out_dim as 0; they are filled in per mode and method.
    auto layers = nn::arch_from_json(c.arch);
    if (auto* conv = std::get_if<nn::Conv1d>(&layers.front()); conv && conv->in_channels == 0) {
        conv->in_channels = spec.n_channels;
    }
    if (auto* dense = std::get_if<nn::Dense>(&layers.back()); dense && dense->out_dim == 0) dense->out_dim = out_dim;
    return layers;
}

// Seeded shuffle, then contiguous folds whose sizes differ by at most one.
inline std::vector<std::vector<std::string>> kfold_split(const std::vector<std::string>& ids, std::size_t k,
                                                         std::uint64_t seed) {
    if (k < 1) throw SplitError("kfold_split: k must be >= 1");
    if (k > ids.size()) {
        throw SplitError("kfold_split: k=" + std::to_string(k) + " exceeds " + std::to_string(ids.size()) + " ids");
    }
    std::vector<std::string> shuffled = ids;
    Rng rng(seed);
    rng.shuffle(std::span<std::string>(shuffled));
    std::vector<std::vector<std::string>> folds(k);
    const std::size_t base = ids.size() / k;
    const std::size_t extra = ids.size() % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t n = base + (f < extra ? 1 : 0);
        folds[f].assign(shuffled.begin() + static_cast<std::ptrdiff_t>(pos),
                        shuffled.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
    }
    return folds;
}

// A scan with its ground-truth RV, loaded once and shared across modes.
struct ScanData {
    ScanRecord scan;
    RvSeries rv_true;
};

inline ScanData make_scan_data(ScanRecord scan) {
    if (!scan.resp) throw DataError(scan.scan_id + ": respiratory trace required for training and evaluation");
    auto rv = extract_rv(*scan.resp, scan.tr_s, scan.n_volumes());
    return {std::move(scan), std::move(rv)};
}

struct TargetNorm {
    double mean = 0.0;
    double std = 1.0;
    double apply(double v) const { return (v - mean) / std; }
};

// Mean and population sd of RV pooled over the given scans.
inline TargetNorm fit_target_norm(const std::vector<const ScanData*>& scans) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto* s : scans) {
        for (double v : s->rv_true.values) sum += v;
        n += s->rv_true.size();
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (const auto* s : scans) {
        for (double v : s->rv_true.values) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    return {mean, sd > 0.0 ? sd : 1.0};
}

// The three per-segment models for one channel mode.
struct MethodModels {
    std::array<nn::ModelCheckpoint, 3> models;

    const nn::ModelCheckpoint& operator[](Method m) const { return models[method_number(m) - 1]; }
    ChannelMode mode() const { return models[0].channel_mode; }
    std::size_t window_len() const { return models[0].model.input_shape().len; }
};

inline MethodModels train_models(const std::vector<const ScanData*>& train, const ExperimentConfig& config,
                                 ChannelMode mode, std::uint64_t seed) {
    if (train.empty()) throw ConfigError("train_models: no training scans");
    const WindowSpec spec = WindowSpec::for_mode(mode, config.window_len);
    const TargetNorm norm = config.normalize_targets ? fit_target_norm(train) : TargetNorm{};

    std::vector<std::shared_ptr<const Matrix>> channels;
    std::vector<RvSeries> targets;
    for (const auto* s : train) {
        channels.push_back(std::make_shared<const Matrix>(prepare_channels(s->scan, mode)));
        RvSeries z = s->rv_true;
        for (double& v : z.values) v = norm.apply(v);
        targets.push_back(std::move(z));
    }

    MethodModels out;
    for (Method method : {Method::start, Method::middle, Method::end}) {
        WindowedDataset data(spec.window_len, spec.n_channels, spec.target_dim(method), method);
        for (std::size_t i = 0; i < train.size(); ++i) {
            data.append(build_windows(channels[i], targets[i], spec, method, train[i]->scan.scan_id));
        }
        if (method == Method::middle && config.train_stride > 1) data = data.subsample(config.train_stride);
        nn::TrainConfig tc = config.train;
        tc.seed = seed;
        auto ckpt = nn::fit(data, resolve_arch(config, mode, method), tc);
        ckpt.norm = {"per_scan_zscore", norm.mean, norm.std};
        out.models[method_number(method) - 1] = std::move(ckpt);
    }
    return out;
}

// Full-length RV reconstruction (target units) from the three models.
inline RvSeries reconstruct(const MethodModels& models, const ScanRecord& scan) {
    const WindowSpec spec = WindowSpec::for_mode(models.mode(), models.window_len());
    auto channels = std::make_shared<const Matrix>(prepare_channels(scan, models.mode()));
    const std::size_t T = scan.n_volumes();
    const RvSeries placeholder{std::vector<double>(T, 0.0), scan.tr_s};
    std::array<std::vector<double>, 3> preds;
    for (Method method : {Method::start, Method::middle, Method::end}) {
        const auto windows = build_windows(channels, placeholder, spec, method, scan.scan_id);
        const Matrix y = nn::predict(models[method], windows);
        preds[method_number(method) - 1] = y.storage();
    }
    return stitch(preds[0], preds[1], preds[2], T, spec, scan.tr_s);
}

struct ScanResult {
    std::string scan_id;
    ChannelMode mode = ChannelMode::bold_plus_motion;
    std::size_t fold = 0;
    ScanMetrics metrics;
    RvSeries rv_true;
    RvSeries rv_pred;
};

// Trains on `train`, evaluates every test scan. Metrics are computed in the
// training set's normalised target space.
inline std::vector<ScanResult> run_fold(const std::vector<const ScanData*>& train,
                                        const std::vector<const ScanData*>& test, ChannelMode mode,
                                        const ExperimentConfig& config, std::uint64_t seed, std::size_t fold = 0) {
    if (train.empty() || test.empty()) throw ConfigError("run_fold: train and test sets must be non-empty");
    std::set<std::string> train_ids;
    for (const auto* s : train) train_ids.insert(s->scan.scan_id);
    for (const auto* s : test) {
        if (train_ids.count(s->scan.scan_id)) {
            throw SplitError("run_fold: scan " + s->scan.scan_id + " is in both train and test sets");
        }
    }
    const auto models = train_models(train, config, mode, seed);
    const TargetNorm norm{models[Method::middle].norm.target_mean, models[Method::middle].norm.target_std};

    std::vector<ScanResult> results;
    for (const auto* s : test) {
        ScanResult r;
        r.scan_id = s->scan.scan_id;
        r.mode = mode;
        r.fold = fold;
        r.rv_true = s->rv_true;
        r.rv_pred = reconstruct(models, s->scan);
        std::vector<double> pz(r.rv_pred.size()), tz(r.rv_true.size());
        for (std::size_t t = 0; t < pz.size(); ++t) {
            pz[t] = norm.apply(r.rv_pred.values[t]);
            tz[t] = norm.apply(r.rv_true.values[t]);
        }
        r.metrics = compute_metrics(r.scan_id, pz, tz);
        results.push_back(std::move(r));
    }
    return results;
}

struct MetricSummary {
    double mean = 0.0;
    double median = 0.0;
};

struct ModeSummary {
    MetricSummary mae, mse, pearson_r, dtw;
    std::size_t n_scans = 0;
};

inline constexpr std::array<const char*, 4> kMetricNames = {"mae", "mse", "pearson_r", "dtw"};

inline double metric_value(const ScanMetrics& m, std::string_view name) {
    if (name == "mae") return m.mae;
    if (name == "mse") return m.mse;
    if (name == "pearson_r") return m.pearson_r;
    return m.dtw;
}

inline MetricSummary summarize(std::vector<double> xs) {
    MetricSummary s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    s.median = n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
    return s;
}

inline ModeSummary summarize_mode(const std::vector<const ScanResult*>& rows) {
    auto collect = [&](std::string_view name) {
        std::vector<double> xs;
        for (const auto* r : rows) xs.push_back(metric_value(r->metrics, name));
        return summarize(std::move(xs));
    };
    return {collect("mae"), collect("mse"), collect("pearson_r"), collect("dtw"), rows.size()};
}

struct ExperimentReport {
    std::string config_hash;
    nlohmann::json config;
    std::vector<std::uint64_t> fold_seeds;
    std::vector<std::vector<std::string>> folds;
    // Ordered by mode (config order), then scan id.
    std::vector<ScanResult> results;
    std::map<std::string, ModeSummary> mode_summaries;
    // fold_summaries[fold][mode]
    std::vector<std::map<std::string, ModeSummary>> fold_summaries;
    // Empty unless both channel modes ran.
    std::map<std::string, FriedmanResult> friedman;
    bool z_units = true;

    std::vector<const ScanResult*> rows_for(ChannelMode mode) const {
        std::vector<const ScanResult*> out;
        for (const auto& r : results) {
            if (r.mode == mode) out.push_back(&r);
        }
        return out;
    }
};

inline nlohmann::json summary_to_json(const MetricSummary& s) { return {{"mean", s.mean}, {"median", s.median}}; }

inline nlohmann::json mode_summary_to_json(const ModeSummary& s) {
    return {{"n_scans", s.n_scans},
            {"mae", summary_to_json(s.mae)},
            {"mse", summary_to_json(s.mse)},
            {"pearson_r", summary_to_json(s.pearson_r)},
            {"dtw", summary_to_json(s.dtw)}};
}

inline nlohmann::json report_summary_json(const ExperimentReport& report) {
    nlohmann::json modes = nlohmann::json::object();
    for (const auto& [name, s] : report.mode_summaries) modes[name] = mode_summary_to_json(s);
    auto folds = nlohmann::json::array();
    for (std::size_t f = 0; f < report.fold_summaries.size(); ++f) {
        nlohmann::json fj = {{"fold", f}, {"seed", report.fold_seeds[f]}, {"test_scans", report.folds[f]}};
        for (const auto& [name, s] : report.fold_summaries[f]) fj["modes"][name] = mode_summary_to_json(s);
        folds.push_back(fj);
    }
    nlohmann::json friedman = nlohmann::json::object();
    for (const auto& [metric, fr] : report.friedman) {
        friedman[metric] = {{"chi2", fr.chi2},
                            {"dof", fr.dof},
                            {"p_value", fr.p_value},
                            {"rank_sums", fr.rank_sums},
                            {"treatments", {"bold_only", "bold_plus_motion"}},
                            {"lower_is_better", metric != "pearson_r"}};
    }
    return {{"config_hash", report.config_hash},
            {"config", report.config},
            {"metric_units", report.z_units ? "z (train-set target normalisation)" : "rv"},
            {"modes", modes},
            {"folds", folds},
            {"friedman", friedman},
            {"versions",
             {{"rvrecon", kVersion},
              {"checkpoint_schema", nn::kCheckpointSchemaVersion},
              {"synth_schema", synth::kSynthSchemaVersion}}}};
}

inline void write_report(const std::filesystem::path& dir, const ExperimentReport& report) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "report.csv", std::ios::binary);
        if (!out) throw DataError((dir / "report.csv").string() + ": cannot open for writing");
        out << "scan_id,mode,mae,mse,pearson_r,dtw\n";
        for (const auto& r : report.results) {
            out << r.scan_id << ',' << to_string(r.mode) << ',' << csv::format_real(r.metrics.mae) << ','
                << csv::format_real(r.metrics.mse) << ',' << csv::format_real(r.metrics.pearson_r) << ','
                << csv::format_real(r.metrics.dtw) << '\n';
        }
    }
    write_json_file(dir / "summary.json", report_summary_json(report));
    static const std::vector<std::string> header = {"volume", "rv_true", "rv_pred"};
    for (const auto& r : report.results) {
        const auto pdir = dir / "predictions" / to_string(r.mode);
        std::filesystem::create_directories(pdir);
        Matrix m(r.rv_true.size(), 3);
        for (std::size_t t = 0; t < r.rv_true.size(); ++t) {
            m(t, 0) = static_cast<double>(t + 1);
            m(t, 1) = r.rv_true.values[t];
            m(t, 2) = r.rv_pred.values[t];
        }
        csv::write_numeric(pdir / (r.scan_id + ".csv"), header, m);
    }
}

// Runs every fold in every mode on already-loaded scans. Fold f uses seed
// config.seed + f for every model it trains.
inline ExperimentReport run_experiment(const std::vector<ScanData>& scans, const ExperimentConfig& config) {
    if (config.k_folds < 2) throw ConfigError("k_folds must be >= 2");
    if (config.modes.empty()) throw ConfigError("at least one channel mode is required");
    std::map<std::string, const ScanData*> by_id;
    std::vector<std::string> ids;
    for (const auto& s : scans) {
        if (!by_id.emplace(s.scan.scan_id, &s).second) throw ConfigError("duplicate scan id " + s.scan.scan_id);
        ids.push_back(s.scan.scan_id);
    }

    ExperimentReport report;
    report.config = config_to_json(config);
    report.config_hash = config_hash(config);
    report.z_units = config.normalize_targets;
    report.folds = kfold_split(ids, config.k_folds, config.seed);

    std::map<std::string, std::size_t> seen;
    for (const auto& fold : report.folds) {
        for (const auto& id : fold) ++seen[id];
    }
    for (const auto& id : ids) {
        if (seen[id] != 1) throw SplitError("scan " + id + " is not in exactly one test fold");
    }

    for (ChannelMode mode : config.modes) {
        for (std::size_t f = 0; f < report.folds.size(); ++f) {
            const std::set<std::string> test_ids(report.folds[f].begin(), report.folds[f].end());
            std::vector<const ScanData*> train, test;
            for (const auto& id : ids) (test_ids.count(id) ? test : train).push_back(by_id.at(id));
            auto fold_results = run_fold(train, test, mode, config, config.seed + f, f);
            for (auto& r : fold_results) report.results.push_back(std::move(r));
        }
    }
    for (std::size_t f = 0; f < report.folds.size(); ++f) report.fold_seeds.push_back(config.seed + f);

    std::stable_sort(report.results.begin(), report.results.end(), [&](const ScanResult& a, const ScanResult& b) {
        auto rank = [&](ChannelMode m) {
            return std::find(config.modes.begin(), config.modes.end(), m) - config.modes.begin();
        };
        if (a.mode != b.mode) return rank(a.mode) < rank(b.mode);
        return a.scan_id < b.scan_id;
    });

    report.fold_summaries.resize(report.folds.size());
    for (ChannelMode mode : config.modes) {
        const auto rows = report.rows_for(mode);
        report.mode_summaries[to_string(mode)] = summarize_mode(rows);
        for (std::size_t f = 0; f < report.folds.size(); ++f) {
            std::vector<const ScanResult*> fold_rows;
            for (const auto* r : rows) {
                if (r->fold == f) fold_rows.push_back(r);
            }
            report.fold_summaries[f][to_string(mode)] = summarize_mode(fold_rows);
        }
    }

    const bool both = std::count(config.modes.begin(), config.modes.end(), ChannelMode::bold_only) &&
                      std::count(config.modes.begin(), config.modes.end(), ChannelMode::bold_plus_motion);
    if (both) {
        const auto a = report.rows_for(ChannelMode::bold_only);
        const auto b = report.rows_for(ChannelMode::bold_plus_motion);
        std::map<std::string, const ScanResult*> b_by_id;
        for (const auto* r : b) b_by_id[r->scan_id] = r;
        for (const char* metric : kMetricNames) {
            Matrix scores(a.size(), 2);
            for (std::size_t i = 0; i < a.size(); ++i) {
                scores(i, 0) = metric_value(a[i]->metrics, metric);
                scores(i, 1) = metric_value(b_by_id.at(a[i]->scan_id)->metrics, metric);
            }
            report.friedman[metric] = friedman_test(scores, std::string_view(metric) != "pearson_r");
        }
    }
    return report;
}

inline ExperimentReport run_experiment(const ExperimentConfig& config) {
    config.validate();
    std::vector<ScanData> scans;
    for (const auto& dir : config.scan_dirs) scans.push_back(make_scan_data(read_scan_dir(dir)));
    auto report = run_experiment(scans, config);
    if (!config.output_dir.empty()) write_report(config.output_dir, report);
    return report;
}

// Generates n scans with seeds base.seed + i and ids "<prefix>_000", ...
inline std::vector<ScanRecord> generate_corpus(const synth::SynthConfig& base, std::size_t n,
                                               const std::string& prefix = "synth") {
    std::vector<ScanRecord> scans;
    for (std::size_t i = 0; i < n; ++i) {
        synth::SynthConfig c = base;
        c.seed = base.seed + i;
        char id[32];
        std::snprintf(id, sizeof id, "%s_%03zu", prefix.c_str(), i);
        c.scan_id = id;
        scans.push_back(synth::gen_scan(c));
    }
    return scans;
}

}  // namespace rvrecon
