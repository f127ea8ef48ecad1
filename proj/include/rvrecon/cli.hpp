#pragma once

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rvrecon/pipeline.hpp"
#include "rvrecon/spectral.hpp"

namespace rvrecon::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

struct TrainOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::size_t> k_folds;
    std::optional<std::size_t> train_stride;

    void add_to(CLI::App& app, bool with_folds) {
        app.add_option("--seed", seed, "Override the config seed");
        app.add_option("--epochs", epochs, "Override train.epochs");
        app.add_option("--batch-size", batch_size, "Override train.batch_size");
        app.add_option("--lr", learning_rate, "Override train.learning_rate");
        app.add_option("--train-stride", train_stride, "Override train_stride");
        if (with_folds) app.add_option("--k-folds", k_folds, "Override k_folds");
    }

    void apply(ExperimentConfig& c) const {
        if (seed) c.seed = *seed;
        if (epochs) c.train.epochs = *epochs;
        if (batch_size) c.train.batch_size = *batch_size;
        if (learning_rate) c.train.learning_rate = *learning_rate;
        if (k_folds) c.k_folds = *k_folds;
        if (train_stride) c.train_stride = *train_stride;
    }
};

// Motion column by "pe", index 0..5 or header name.
inline std::size_t resolve_motion_column(const std::string& spec, int pe_axis) {
    if (spec == "pe") return static_cast<std::size_t>(pe_axis);
    std::size_t idx = 0;
    const auto [ptr, ec] = std::from_chars(spec.data(), spec.data() + spec.size(), idx);
    if (ec == std::errc{} && ptr == spec.data() + spec.size()) {
        if (idx >= kNumMotion) throw ConfigError("--column index must be in 0..5");
        return idx;
    }
    const auto& header = motion_header();
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == spec) return c;
    }
    throw ConfigError("unknown motion column '" + spec + "'");
}

inline std::size_t volumes_from_trace(const RespiratoryTrace& trace, double tr_s) {
    const double n = std::floor(trace.end_time_s() / tr_s + 1e-9);
    if (n < 1.0) throw DataError("respiratory trace is shorter than one TR");
    return static_cast<std::size_t>(n);
}

inline std::vector<double> read_column(const fs::path& path, const std::vector<std::string>& names) {
    const auto table = csv::read_numeric(path);
    for (const auto& name : names) {
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            if (table.header[c] == name) return table.data.column(c);
        }
    }
    std::string wanted;
    for (const auto& n : names) wanted += (wanted.empty() ? "" : " or ") + n;
    throw SchemaError(path.string() + ": missing column " + wanted);
}

inline MethodModels load_models(const fs::path& dir) {
    MethodModels models;
    for (int m = 1; m <= 3; ++m) {
        models.models[m - 1] = nn::load_checkpoint(dir / ("method" + std::to_string(m) + ".json"));
        if (models.models[m - 1].method != method_from_number(m)) {
            throw DataError((dir / ("method" + std::to_string(m) + ".json")).string() + ": wrong method");
        }
        if (models.models[m - 1].channel_mode != models.models[0].channel_mode) {
            throw ModeError(dir.string() + ": checkpoints disagree on channel mode");
        }
    }
    return models;
}

inline void print_summary(std::ostream& out, const ExperimentReport& report) {
    out << "config_hash " << report.config_hash << '\n';
    for (const auto& [mode, s] : report.mode_summaries) {
        out << mode << " n=" << s.n_scans << " mae=" << s.mae.mean << " mse=" << s.mse.mean
            << " pearson_r=" << s.pearson_r.mean << " dtw=" << s.dtw.mean << '\n';
    }
    for (const auto& [metric, f] : report.friedman) {
        out << "friedman " << metric << " chi2=" << f.chi2 << " p=" << f.p_value << '\n';
    }
}

}  // namespace detail

// Parses and dispatches; args excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"RV reconstruction from BOLD and head motion", "rvrecon"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // extract-rv
    fs::path er_resp, er_meta, er_out;
    std::optional<std::size_t> er_volumes;
    auto* extract = app.add_subcommand("extract-rv", "Respiratory variation from a respiratory trace");
    extract->add_option("--resp", er_resp, "resp.csv")->required();
    extract->add_option("--meta", er_meta, "meta.json with tr_s and resp_fs_hz")->required();
    extract->add_option("--out", er_out, "Output rv.csv")->required();
    extract->add_option("--n-volumes", er_volumes, "Number of volumes (default: trace duration / TR)");

    // synth
    fs::path sy_config, sy_out;
    std::size_t sy_n = 1;
    std::optional<std::uint64_t> sy_seed;
    std::optional<std::size_t> sy_volumes;
    auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic scans");
    synth_cmd->add_option("--config", sy_config, "synth.json");
    synth_cmd->add_option("--out", sy_out, "Output directory")->required();
    synth_cmd->add_option("--n-scans", sy_n, "Number of scans")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--seed", sy_seed, "Override the config seed");
    synth_cmd->add_option("--n-volumes", sy_volumes, "Override n_volumes");

    // psd
    fs::path ps_motion, ps_meta, ps_out;
    std::string ps_column = "pe";
    std::size_t ps_seg = 256;
    double ps_overlap = 0.5;
    std::vector<double> ps_band;
    auto* psd_cmd = app.add_subcommand("psd", "Welch PSD of one motion column");
    psd_cmd->add_option("--motion", ps_motion, "motion.csv")->required();
    psd_cmd->add_option("--meta", ps_meta, "meta.json")->required();
    psd_cmd->add_option("--column", ps_column, "pe, 0..5 or a header name")->capture_default_str();
    psd_cmd->add_option("--out", ps_out, "Output psd.csv")->required();
    psd_cmd->add_option("--seg-len", ps_seg, "Segment length in samples")->capture_default_str();
    psd_cmd->add_option("--overlap", ps_overlap, "Segment overlap in [0,1)")->capture_default_str();
    psd_cmd->add_option("--band", ps_band, "Print the dominant peak within LO HI Hz")->expected(2);

    // grayplot
    fs::path gp_bold, gp_out;
    auto* gray_cmd = app.add_subcommand("grayplot", "Gray plot of z-scored BOLD as PGM");
    gray_cmd->add_option("--bold", gp_bold, "bold.csv")->required();
    gray_cmd->add_option("--out", gp_out, "Output .pgm")->required();

    // train
    fs::path tr_config, tr_out;
    std::string tr_mode = "bold_plus_motion";
    detail::TrainOverrides tr_over;
    auto* train_cmd = app.add_subcommand("train", "Train the three models on every scan in a config");
    train_cmd->add_option("--config", tr_config, "exp.json")->required();
    train_cmd->add_option("--mode", tr_mode, "bold_only or bold_plus_motion")->capture_default_str();
    train_cmd->add_option("--out", tr_out, "Checkpoint directory")->required();
    tr_over.add_to(*train_cmd, false);

    // predict
    fs::path pr_ckpt, pr_scan, pr_out;
    auto* predict_cmd = app.add_subcommand("predict", "Reconstruct RV for one scan");
    predict_cmd->add_option("--ckpt", pr_ckpt, "Checkpoint directory")->required();
    predict_cmd->add_option("--scan", pr_scan, "Scan directory")->required();
    predict_cmd->add_option("--out", pr_out, "Output pred.csv")->required();

    // evaluate
    fs::path ev_pred, ev_truth, ev_out;
    std::string ev_id, ev_mode = "unknown";
    auto* eval_cmd = app.add_subcommand("evaluate", "Score a prediction against true RV");
    eval_cmd->add_option("--pred", ev_pred, "CSV with an rv_pred column")->required();
    eval_cmd->add_option("--truth", ev_truth, "CSV with an rv or rv_true column")->required();
    eval_cmd->add_option("--out", ev_out, "Output metrics.csv")->required();
    eval_cmd->add_option("--scan-id", ev_id, "scan_id column value (default: prediction file stem)");
    eval_cmd->add_option("--mode", ev_mode, "mode column value")->capture_default_str();

    // cv
    fs::path cv_config, cv_out;
    detail::TrainOverrides cv_over;
    auto* cv_cmd = app.add_subcommand("cv", "k-fold cross-validated comparison of channel modes");
    cv_cmd->add_option("--config", cv_config, "exp.json")->required();
    cv_cmd->add_option("--out", cv_out, "Results directory (default: config output_dir)");
    cv_over.add_to(*cv_cmd, true);

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        const CLI::App* target = &app;
        for (auto* sub : app.get_subcommands()) target = sub;
        out << target->help();
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (extract->parsed()) {
            const auto meta = read_meta(er_meta);
            if (!meta.resp_fs_hz) throw SchemaError(er_meta.string() + ": resp_fs_hz is required");
            const auto trace = read_resp_csv(er_resp, *meta.resp_fs_hz);
            const std::size_t n = er_volumes ? *er_volumes : detail::volumes_from_trace(trace, meta.tr_s);
            write_rv_csv(er_out, extract_rv(trace, meta.tr_s, n));
        } else if (synth_cmd->parsed()) {
            synth::SynthConfig config;
            if (!sy_config.empty()) {
                try {
                    config = read_json_file(sy_config).get<synth::SynthConfig>();
                } catch (const nlohmann::json::exception& e) {
                    throw ConfigError(sy_config.string() + ": " + e.what());
                }
            }
            if (sy_seed) config.seed = *sy_seed;
            if (sy_volumes) config.n_volumes = *sy_volumes;
            for (const auto& scan : generate_corpus(config, sy_n, config.scan_id)) {
                write_scan_dir(sy_out / scan.scan_id, scan);
                write_rv_csv(sy_out / scan.scan_id / "rv.csv", extract_rv(*scan.resp, scan.tr_s, scan.n_volumes()));
                out << (sy_out / scan.scan_id).string() << '\n';
            }
        } else if (psd_cmd->parsed()) {
            const auto meta = read_meta(ps_meta);
            const auto table = csv::read_numeric(ps_motion);
            csv::expect_header(table, motion_header(), ps_motion.string());
            const std::size_t col = detail::resolve_motion_column(ps_column, meta.pe_axis);
            const auto psd = welch_psd(table.data.column(col), 1.0 / meta.tr_s, ps_seg, ps_overlap);
            write_psd_csv(ps_out, psd);
            if (ps_band.size() == 2) {
                const auto peak = dominant_peak(psd, ps_band[0], ps_band[1]);
                out << "peak_hz " << csv::format_real(peak.freq_hz) << " power " << csv::format_real(peak.power)
                    << '\n';
            }
        } else if (gray_cmd->parsed()) {
            const auto table = csv::read_numeric(gp_bold);
            csv::expect_header(table, bold_header(), gp_bold.string());
            write_pgm(gp_out, grayplot(table.data));
        } else if (train_cmd->parsed()) {
            auto config = load_experiment_config(tr_config);
            tr_over.apply(config);
            const ChannelMode mode = parse_channel_mode(tr_mode);
            if (config.scan_dirs.empty()) throw ConfigError(tr_config.string() + ": no scans");
            std::vector<ScanData> scans;
            for (const auto& dir : config.scan_dirs) scans.push_back(make_scan_data(read_scan_dir(dir)));
            std::vector<const ScanData*> train;
            for (const auto& s : scans) train.push_back(&s);
            const auto models = train_models(train, config, mode, config.seed);
            fs::create_directories(tr_out);
            for (int m = 1; m <= 3; ++m) {
                nn::save_checkpoint(tr_out / ("method" + std::to_string(m) + ".json"), models.models[m - 1]);
            }
        } else if (predict_cmd->parsed()) {
            const auto models = detail::load_models(pr_ckpt);
            const auto scan = read_scan_dir(pr_scan);
            const auto rv = reconstruct(models, scan);
            static const std::vector<std::string> header = {"volume", "rv_pred"};
            Matrix m(rv.size(), 2);
            for (std::size_t t = 0; t < rv.size(); ++t) {
                m(t, 0) = static_cast<double>(t + 1);
                m(t, 1) = rv.values[t];
            }
            csv::write_numeric(pr_out, header, m);
        } else if (eval_cmd->parsed()) {
            const auto pred = detail::read_column(ev_pred, {"rv_pred"});
            const auto truth = detail::read_column(ev_truth, {"rv", "rv_true"});
            const std::string id = ev_id.empty() ? ev_pred.stem().string() : ev_id;
            const auto m = compute_metrics(id, pred, truth);
            std::ofstream file(ev_out, std::ios::binary);
            if (!file) throw DataError(ev_out.string() + ": cannot open for writing");
            file << "scan_id,mode,mae,mse,pearson_r,dtw\n"
                 << id << ',' << ev_mode << ',' << csv::format_real(m.mae) << ',' << csv::format_real(m.mse) << ','
                 << csv::format_real(m.pearson_r) << ',' << csv::format_real(m.dtw) << '\n';
        } else if (cv_cmd->parsed()) {
            auto config = load_experiment_config(cv_config);
            cv_over.apply(config);
            if (!cv_out.empty()) config.output_dir = cv_out;
            if (config.output_dir.empty()) throw ConfigError("cv: no output directory (use --out)");
            detail::print_summary(out, run_experiment(config));
        }
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitOk;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(std::move(args), out, err);
}

}  // namespace rvrecon::cli
