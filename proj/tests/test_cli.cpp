#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "rvrecon/cli.hpp"
#include "test_util.hpp"

using namespace rvrecon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(std::move(args), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliData : public ::testing::Test {
protected:
    void SetUp() override {
        write_json_file(dir.path() / "synth.json", {{"n_volumes", 90}, {"seed", 40}});
        const auto r = run_cli({"synth", "--config", (dir.path() / "synth.json").string(), "--out",
                                (dir.path() / "data").string(), "--n-scans", "4"});
        ASSERT_EQ(r.code, 0) << r.err;
        const nlohmann::json arch = nlohmann::json::array(
            {{{"kind", "conv1d"}, {"in_channels", 0}, {"out_channels", 4}, {"kernel_len", 5}},
             {{"kind", "relu"}},
             {{"kind", "maxpool1d"}, {"pool_len", 2}},
             {{"kind", "flatten"}},
             {{"kind", "dense"}, {"in_dim", 20}, {"out_dim", 0}}});
        write_json_file(dir.path() / "exp.json", {{"scan_root", "data"},
                                                  {"k_folds", 2},
                                                  {"window_len", 15},
                                                  {"train", {{"epochs", 2}}},
                                                  {"arch", arch},
                                                  {"seed", 1}});
    }

    fs::path p(const std::string& rel) const { return dir.path() / rel; }
    std::string s(const std::string& rel) const { return p(rel).string(); }

    test::TempDir dir;
};

}  // namespace

TEST(Cli, UnknownSubcommandIsUsageError) {
    const auto r = run_cli({"frobnicate"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, MissingSubcommandAndUnknownFlagAreUsageErrors) {
    EXPECT_EQ(run_cli({}).code, 2);
    EXPECT_EQ(run_cli({"grayplot", "--bold", "b.csv", "--out", "o.pgm", "--colour"}).code, 2);
    EXPECT_EQ(run_cli({"grayplot", "--bold", "b.csv"}).code, 2);
}

TEST(Cli, HelpOnEverySubcommand) {
    const std::map<std::string, std::vector<std::string>> flags = {
        {"extract-rv", {"--resp", "--meta", "--out", "--n-volumes"}},
        {"synth", {"--config", "--out", "--n-scans", "--seed"}},
        {"psd", {"--motion", "--meta", "--column", "--out", "--seg-len", "--overlap"}},
        {"grayplot", {"--bold", "--out"}},
        {"train", {"--config", "--mode", "--out", "--seed", "--epochs"}},
        {"predict", {"--ckpt", "--scan", "--out"}},
        {"evaluate", {"--pred", "--truth", "--out"}},
        {"cv", {"--config", "--out", "--seed", "--k-folds"}},
    };
    for (const auto& [cmd, expected] : flags) {
        const auto r = run_cli({cmd, "--help"});
        EXPECT_EQ(r.code, 0) << cmd;
        for (const auto& f : expected) EXPECT_NE(r.out.find(f), std::string::npos) << cmd << " " << f;
    }
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST_F(CliData, SynthWritesScanDirectories) {
    for (const char* id : {"synth_000", "synth_003"}) {
        EXPECT_TRUE(fs::exists(p("data") / id / "bold.csv"));
        EXPECT_TRUE(fs::exists(p("data") / id / "rv.csv"));
    }
    const auto scan = read_scan_dir(p("data/synth_002"));
    synth::SynthConfig c;
    c.n_volumes = 90;
    c.seed = 42;
    c.scan_id = "synth_002";
    EXPECT_TRUE(scan == synth::gen_scan(c));
}

TEST_F(CliData, SynthSeedFlagOverridesConfig) {
    ASSERT_EQ(run_cli({"synth", "--config", s("synth.json"), "--out", s("a"), "--seed", "7"}).code, 0);
    ASSERT_EQ(run_cli({"synth", "--config", s("synth.json"), "--out", s("b"), "--seed", "7"}).code, 0);
    EXPECT_EQ(slurp(p("a/synth_000/bold.csv")), slurp(p("b/synth_000/bold.csv")));
    EXPECT_NE(slurp(p("a/synth_000/bold.csv")), slurp(p("data/synth_000/bold.csv")));
}

TEST_F(CliData, ExtractRvMatchesLibrary) {
    const auto r = run_cli({"extract-rv", "--resp", s("data/synth_001/resp.csv"), "--meta",
                            s("data/synth_001/meta.json"), "--out", s("rv.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(p("rv.csv")), slurp(p("data/synth_001/rv.csv")));
    const auto table = csv::read_numeric(p("rv.csv"));
    EXPECT_EQ(table.header, (std::vector<std::string>{"volume", "rv"}));
    EXPECT_EQ(table.data.rows(), 90u);
}

TEST_F(CliData, ExtractRvBadRowIsDataErrorNamingFileAndRow) {
    {
        std::ofstream out(p("bad_resp.csv"));
        out << "resp\n0.1\n0.2\n0.3\nbreath\n0.5\n";
    }
    const auto r = run_cli({"extract-rv", "--resp", s("bad_resp.csv"), "--meta", s("data/synth_000/meta.json"),
                            "--out", s("rv.csv")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("bad_resp.csv"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("row 5"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(p("rv.csv")));
}

TEST_F(CliData, PsdAndGrayplot) {
    auto r = run_cli({"psd", "--motion", s("data/synth_000/motion.csv"), "--meta", s("data/synth_000/meta.json"),
                      "--column", "pe", "--seg-len", "32", "--out", s("psd.csv"), "--band", "0.2", "0.4"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("peak_hz ", 0), 0u);
    const auto psd = csv::read_numeric(p("psd.csv"));
    EXPECT_EQ(psd.header, (std::vector<std::string>{"freq_hz", "power"}));
    EXPECT_EQ(psd.data.rows(), 17u);
    r = run_cli({"psd", "--motion", s("data/synth_000/motion.csv"), "--meta", s("data/synth_000/meta.json"),
                 "--column", "rot_z_deg", "--seg-len", "32", "--out", s("psd5.csv")});
    EXPECT_EQ(r.code, 0) << r.err;
    r = run_cli({"psd", "--motion", s("data/synth_000/motion.csv"), "--meta", s("data/synth_000/meta.json"),
                 "--column", "7", "--out", s("psd7.csv")});
    EXPECT_EQ(r.code, 1);

    r = run_cli({"grayplot", "--bold", s("data/synth_000/bold.csv"), "--out", s("g.pgm")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto pgm = slurp(p("g.pgm"));
    EXPECT_EQ(pgm.substr(0, 13), "P5\n90 90\n255\n");
    EXPECT_EQ(pgm.size(), 13u + 90u * 90u);
}

TEST_F(CliData, TrainPredictEvaluate) {
    auto r = run_cli({"train", "--config", s("exp.json"), "--mode", "bold_only", "--out", s("ckpt"), "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (int m = 1; m <= 3; ++m) EXPECT_TRUE(fs::exists(p("ckpt") / ("method" + std::to_string(m) + ".json")));
    r = run_cli({"train", "--config", s("exp.json"), "--mode", "bold_only", "--out", s("ckpt2"), "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(p("ckpt/method2.json")), slurp(p("ckpt2/method2.json")));
    EXPECT_EQ(nn::load_checkpoint(p("ckpt/method1.json")).seed, 3u);

    r = run_cli({"predict", "--ckpt", s("ckpt"), "--scan", s("data/synth_001"), "--out", s("pred.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto pred = csv::read_numeric(p("pred.csv"));
    EXPECT_EQ(pred.header, (std::vector<std::string>{"volume", "rv_pred"}));
    EXPECT_EQ(pred.data.rows(), 90u);

    r = run_cli({"evaluate", "--pred", s("pred.csv"), "--truth", s("data/synth_001/rv.csv"), "--out", s("m.csv"),
                 "--mode", "bold_only"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto text = slurp(p("m.csv"));
    EXPECT_EQ(text.substr(0, text.find('\n')), "scan_id,mode,mae,mse,pearson_r,dtw");
    EXPECT_EQ(text.substr(text.find('\n') + 1, 15), "pred,bold_only,");

    r = run_cli({"evaluate", "--pred", s("data/synth_001/rv.csv"), "--truth", s("data/synth_001/rv.csv"), "--out",
                 s("m2.csv")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("rv_pred"), std::string::npos);
}

TEST_F(CliData, PredictWithWrongModeCheckpointFails) {
    ASSERT_EQ(run_cli({"train", "--config", s("exp.json"), "--mode", "bold_plus_motion", "--out", s("ck")}).code, 0);
    auto j = read_json_file(p("ck/method2.json"));
    j["channel_mode"] = "bold_only";
    write_json_file(p("ck/method2.json"), j);
    const auto r = run_cli({"predict", "--ckpt", s("ck"), "--scan", s("data/synth_000"), "--out", s("x.csv")});
    EXPECT_EQ(r.code, 1);
}

TEST_F(CliData, CrossValidationWritesReport) {
    const auto r = run_cli({"cv", "--config", s("exp.json"), "--out", s("results")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(p("results/report.csv")));
    EXPECT_TRUE(fs::exists(p("results/summary.json")));
    EXPECT_TRUE(fs::exists(p("results/predictions/bold_plus_motion/synth_002.csv")));
    EXPECT_NE(r.out.find("config_hash"), std::string::npos);

    const auto r2 = run_cli({"cv", "--config", s("exp.json"), "--out", s("results2")});
    ASSERT_EQ(r2.code, 0);
    EXPECT_EQ(slurp(p("results/report.csv")), slurp(p("results2/report.csv")));
    EXPECT_EQ(slurp(p("results/summary.json")), slurp(p("results2/summary.json")));

    const auto summary = read_json_file(p("results/summary.json"));
    EXPECT_EQ(summary.at("config_hash").get<std::string>(), config_hash(load_experiment_config(p("exp.json"))));

    EXPECT_EQ(run_cli({"cv", "--config", s("exp.json"), "--out", s("r3"), "--k-folds", "9"}).code, 1);
}
