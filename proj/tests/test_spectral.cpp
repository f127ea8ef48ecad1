#include <gtest/gtest.h>

#include <complex>
#include <numbers>
#include <sstream>

#include "rvrecon/random.hpp"
#include "rvrecon/spectral.hpp"
#include "rvrecon/synth.hpp"

using namespace rvrecon;

namespace {

std::vector<double> sine(double freq, double fs, std::size_t n, double amp = 1.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(i) / fs);
    return x;
}

// Straight-from-the-definition Welch estimate: complex exponential sums per
// bin, averaged over segments, one-sided density scaling.
std::vector<double> welch_oracle(const std::vector<double>& x, double fs, std::size_t L, double overlap) {
    const std::size_t hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(L * (1.0 - overlap))));
    std::vector<double> w(L);
    for (std::size_t i = 0; i < L; ++i) w[i] = std::pow(std::sin(std::numbers::pi * i / L), 2.0);
    double u = 0.0;
    for (double v : w) u += v * v;
    std::vector<double> p(L / 2 + 1, 0.0);
    std::size_t segs = 0;
    for (std::size_t s = 0; s + L <= x.size(); s += hop, ++segs) {
        double mean = 0.0;
        for (std::size_t i = 0; i < L; ++i) mean += x[s + i];
        mean /= L;
        for (std::size_t k = 0; k <= L / 2; ++k) {
            std::complex<double> acc = 0.0;
            for (std::size_t i = 0; i < L; ++i) {
                acc += w[i] * (x[s + i] - mean) * std::polar(1.0, -2.0 * std::numbers::pi * k * i / L);
            }
            p[k] += std::norm(acc);
        }
    }
    for (std::size_t k = 0; k <= L / 2; ++k) {
        p[k] /= fs * u * segs;
        if (k != 0 && !(L % 2 == 0 && k == L / 2)) p[k] *= 2.0;
    }
    return p;
}

}  // namespace

TEST(Welch, MatchesDefinitionOracle) {
    Rng rng(8);
    for (std::size_t L : {8u, 16u, 33u, 64u}) {
        for (double overlap : {0.0, 0.5, 0.75}) {
            std::vector<double> x(300);
            for (double& v : x) v = rng.normal() + 0.3 * std::sin(0.4 * static_cast<double>(&v - x.data()));
            const auto psd = welch_psd(x, 2.5, L, overlap);
            const auto oracle = welch_oracle(x, 2.5, L, overlap);
            ASSERT_EQ(psd.power.size(), oracle.size());
            for (std::size_t k = 0; k < oracle.size(); ++k) {
                EXPECT_NEAR(psd.power[k], oracle[k], 1e-10 * (1.0 + oracle[k])) << "L=" << L << " k=" << k;
            }
        }
    }
}

TEST(Welch, FrequencyGridAndSizes) {
    const auto psd = welch_psd(sine(0.1, 1.0, 1000), 1.0, 256, 0.5);
    ASSERT_EQ(psd.freqs_hz.size(), 129u);
    ASSERT_EQ(psd.power.size(), 129u);
    for (std::size_t k = 0; k < psd.freqs_hz.size(); ++k) {
        EXPECT_DOUBLE_EQ(psd.freqs_hz[k], static_cast<double>(k) / 256.0);
        EXPECT_GE(psd.power[k], 0.0);
    }
    EXPECT_EQ(psd.n_segments, (1000 - 256) / 128 + 1);
}

TEST(Welch, ConstantSignalHasNoPower) {
    const auto psd = welch_psd(std::vector<double>(600, 42.0), 1.0);
    double total = 0.0;
    for (double p : psd.power) total += p;
    EXPECT_LE(total, 1e-20 * 42.0 * 42.0);
}

TEST(Welch, SinePeakWithinOneBin) {
    const double fs = 1.389;
    const auto psd = welch_psd(sine(0.3, fs, 1200), fs, 256);
    const auto peak = dominant_peak(psd, 0.0, fs / 2.0);
    EXPECT_LE(std::abs(peak.freq_hz - 0.3), psd.bin_width());
    const auto banded = dominant_peak(psd, 0.2, 0.4);
    EXPECT_LE(std::abs(banded.freq_hz - 0.3), psd.bin_width());
}

TEST(Welch, WhiteNoiseTotalPowerMatchesVariance) {
    Rng rng(2024);
    std::vector<double> x(20000);
    for (double& v : x) v = rng.normal(0.0, 1.7);
    const auto psd = welch_psd(x, 4.0, 256);
    double total = 0.0;
    for (double p : psd.power) total += p * psd.bin_width();
    EXPECT_NEAR(total, 1.7 * 1.7, 0.1 * 1.7 * 1.7);
}

TEST(Welch, ScalesQuadratically) {
    Rng rng(6);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> x(700);
        for (double& v : x) v = rng.normal();
        const double a = rng.uniform(-20.0, 20.0);
        std::vector<double> y = x;
        for (double& v : y) v *= a;
        const auto px = welch_psd(x, 1.0, 128);
        const auto py = welch_psd(y, 1.0, 128);
        for (std::size_t k = 0; k < px.power.size(); ++k) {
            EXPECT_NEAR(py.power[k], a * a * px.power[k], 1e-9 * a * a * px.power[k] + 1e-300);
        }
    }
}

TEST(Welch, RejectsBadArguments) {
    EXPECT_THROW(welch_psd(std::vector<double>(100), 1.0, 256), InsufficientDataError);
    EXPECT_ANY_THROW(welch_psd(std::vector<double>(100), 1.0, 4));
    EXPECT_ANY_THROW(welch_psd(std::vector<double>(100), 1.0, 16, 1.0));
}

TEST(Hann, PeriodicShape) {
    const auto w = hann_window(8);
    EXPECT_DOUBLE_EQ(w[0], 0.0);
    EXPECT_NEAR(w[4], 1.0, 1e-15);
    EXPECT_NEAR(w[2], 0.5, 1e-15);
    EXPECT_NEAR(w[1], w[7], 1e-15);
}

TEST(DominantPeak, SingleBinBandReturnsThatBin) {
    const auto psd = welch_psd(sine(0.05, 1.0, 512), 1.0, 64);
    const double f = psd.freqs_hz[7];
    const auto peak = dominant_peak(psd, f - 0.1 * psd.bin_width(), f + 0.1 * psd.bin_width());
    EXPECT_DOUBLE_EQ(peak.freq_hz, f);
    EXPECT_DOUBLE_EQ(peak.power, psd.power[7]);
}

TEST(DominantPeak, TiesGoToLowerFrequency) {
    PsdEstimate psd;
    psd.freqs_hz = {0.0, 0.1, 0.2, 0.3};
    psd.power = {1.0, 5.0, 5.0, 2.0};
    psd.fs_hz = 0.8;
    EXPECT_DOUBLE_EQ(dominant_peak(psd, 0.0, 0.4).freq_hz, 0.1);
}

TEST(DominantPeak, EmptyOrInvalidBandIsBandError) {
    const auto psd = welch_psd(sine(0.05, 1.0, 512), 1.0, 64);
    EXPECT_THROW(dominant_peak(psd, 0.3, 0.2), BandError);
    EXPECT_THROW(dominant_peak(psd, 0.001, 0.002), BandError);
    EXPECT_THROW(dominant_peak(psd, 0.1, 0.9), BandError);
}

TEST(DominantPeak, DeepBreathsPutPowerNearPointOneTwoHertz) {
    synth::SynthConfig c;
    c.breath_hold_prob = 0.0;
    c.motion_walk_sd = 0.0;
    c.rate_walk_sd = 0.0;
    PsdEstimate avg;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        c.seed = seed;
        const auto scan = synth::gen_scan(c);
        const auto psd = welch_psd(scan.motion.column(static_cast<std::size_t>(c.pe_axis)), 1.0 / c.tr_s);
        if (seed == 0) {
            avg = psd;
        } else {
            for (std::size_t k = 0; k < psd.power.size(); ++k) avg.power[k] += psd.power[k];
        }
    }
    EXPECT_NEAR(dominant_peak(avg, 0.05, 0.15).freq_hz, 60.0 / 8.3 / 60.0, 0.011);
}

TEST(Grayplot, LevelMapping) {
    EXPECT_EQ(gray_level(-3.0), 0);
    EXPECT_EQ(gray_level(3.0), 255);
    EXPECT_EQ(gray_level(0.0), 128);
    EXPECT_EQ(gray_level(-10.0), 0);
    EXPECT_EQ(gray_level(10.0), 255);
}

TEST(Grayplot, ConstantBoldIsMidGray) {
    const auto img = grayplot(Matrix(50, kNumRois, 7.0));
    EXPECT_EQ(img.width, 50u);
    EXPECT_EQ(img.height, kNumRois);
    ASSERT_EQ(img.pixels.size(), 50u * kNumRois);
    for (auto p : img.pixels) EXPECT_EQ(p, 128);
}

TEST(Grayplot, FullSizeDimensionsAndRowOrder) {
    Rng rng(1);
    Matrix bold(1200, kNumRois);
    for (double& v : bold.values()) v = rng.normal();
    for (std::size_t t = 0; t < 1200; ++t) bold(t, 0) = t < 600 ? -1.0 : 1.0;
    const auto img = grayplot(bold);
    EXPECT_EQ(img.width, 1200u);
    EXPECT_EQ(img.height, 90u);
    // roi_0 is the top row: first half below mean, second above.
    EXPECT_LT(img.at(0, 0), 128);
    EXPECT_GT(img.at(0, 1199), 128);
}

TEST(Grayplot, InvariantToPerRoiAffineMaps) {
    Rng rng(4);
    Matrix bold(80, kNumRois);
    for (double& v : bold.values()) v = rng.normal();
    Matrix scaled = bold;
    for (std::size_t c = 0; c < kNumRois; ++c) {
        const double a = rng.uniform(0.1, 100.0), b = rng.uniform(-1e3, 1e3);
        for (std::size_t t = 0; t < 80; ++t) scaled(t, c) = a * bold(t, c) + b;
    }
    const auto x = grayplot(bold), y = grayplot(scaled);
    std::size_t diffs = 0;
    for (std::size_t i = 0; i < x.pixels.size(); ++i) {
        EXPECT_LE(std::abs(int(x.pixels[i]) - int(y.pixels[i])), 1);
        diffs += x.pixels[i] != y.pixels[i];
    }
    // Only values within rounding distance of a .5 boundary may move.
    EXPECT_LT(diffs, x.pixels.size() / 100);
}

TEST(Grayplot, PgmBytes) {
    Matrix bold(3, kNumRois, 0.0);
    const auto img = grayplot(bold);
    std::ostringstream out;
    write_pgm(out, img);
    const std::string bytes = out.str();
    const std::string header = "P5\n3 90\n255\n";
    ASSERT_EQ(bytes.substr(0, header.size()), header);
    EXPECT_EQ(bytes.size(), header.size() + 3 * 90);
}
