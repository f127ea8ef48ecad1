#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rvrecon/csv.hpp"
#include "rvrecon/errors.hpp"
#include "rvrecon/timeseries.hpp"

namespace rvrecon {

struct WelchParams {
    std::size_t seg_len = 256;
    double overlap = 0.5;
};

// One-sided power spectral density (units^2 / Hz). Interior bins carry the
// doubled power of their negative-frequency twin, so sum(power) * df is the
// signal variance.
struct PsdEstimate {
    std::vector<double> freqs_hz;
    std::vector<double> power;
    double fs_hz = 0.0;
    std::size_t seg_len = 0;
    double overlap = 0.0;
    std::string window = "hann";
    std::size_t n_segments = 0;

    double bin_width() const { return fs_hz / static_cast<double>(seg_len); }
};

// Periodic Hann window.
inline std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

inline PsdEstimate welch_psd(std::span<const double> signal, double fs_hz, std::size_t seg_len = 256,
                             double overlap = 0.5) {
    if (seg_len < 8) throw InsufficientDataError("welch_psd: seg_len must be >= 8");
    if (!(overlap >= 0.0 && overlap < 1.0)) throw InsufficientDataError("welch_psd: overlap must be in [0, 1)");
    if (!(fs_hz > 0.0)) throw DataError("welch_psd: fs must be > 0");
    if (signal.size() < seg_len) {
        throw InsufficientDataError("welch_psd: signal has " + std::to_string(signal.size()) +
                                    " samples, segment length is " + std::to_string(seg_len));
    }
    const auto hop = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(static_cast<double>(seg_len) * (1.0 - overlap))));
    const std::size_t nbins = seg_len / 2 + 1;
    const auto window = hann_window(seg_len);
    double window_power = 0.0;
    for (double w : window) window_power += w * w;

    std::vector<double> cos_table(seg_len), sin_table(seg_len);
    for (std::size_t i = 0; i < seg_len; ++i) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(seg_len);
        cos_table[i] = std::cos(angle);
        sin_table[i] = std::sin(angle);
    }

    PsdEstimate psd;
    psd.fs_hz = fs_hz;
    psd.seg_len = seg_len;
    psd.overlap = overlap;
    psd.power.assign(nbins, 0.0);
    psd.freqs_hz.resize(nbins);
    for (std::size_t k = 0; k < nbins; ++k) {
        psd.freqs_hz[k] = static_cast<double>(k) * fs_hz / static_cast<double>(seg_len);
    }

    std::vector<double> seg(seg_len);
    for (std::size_t start = 0; start + seg_len <= signal.size(); start += hop) {
        double mean = 0.0;
        for (std::size_t i = 0; i < seg_len; ++i) mean += signal[start + i];
        mean /= static_cast<double>(seg_len);
        for (std::size_t i = 0; i < seg_len; ++i) seg[i] = (signal[start + i] - mean) * window[i];

        for (std::size_t k = 0; k < nbins; ++k) {
            double re = 0.0;
            double im = 0.0;
            std::size_t idx = 0;
            for (std::size_t i = 0; i < seg_len; ++i) {
                re += seg[i] * cos_table[idx];
                im -= seg[i] * sin_table[idx];
                idx += k;
                if (idx >= seg_len) idx -= seg_len;
            }
            psd.power[k] += re * re + im * im;
        }
        ++psd.n_segments;
    }

    const double scale = 1.0 / (fs_hz * window_power * static_cast<double>(psd.n_segments));
    for (std::size_t k = 0; k < nbins; ++k) {
        const bool nyquist = (seg_len % 2 == 0) && (k == nbins - 1);
        const double one_sided = (k == 0 || nyquist) ? 1.0 : 2.0;
        psd.power[k] *= scale * one_sided;
    }
    return psd;
}

struct SpectralPeak {
    double freq_hz = 0.0;
    double power = 0.0;
};

// Maximum-power bin with freq in [band_lo, band_hi]; ties go to the lower
// frequency.
inline SpectralPeak dominant_peak(const PsdEstimate& psd, double band_lo, double band_hi) {
    const double nyquist = psd.fs_hz / 2.0;
    if (!(band_lo < band_hi)) throw BandError("dominant_peak: band_lo must be < band_hi");
    if (band_lo < 0.0 || band_hi > nyquist * (1.0 + 1e-12)) {
        throw BandError("dominant_peak: band must lie within [0, fs/2]");
    }
    bool found = false;
    SpectralPeak best;
    for (std::size_t k = 0; k < psd.freqs_hz.size(); ++k) {
        const double f = psd.freqs_hz[k];
        if (f < band_lo || f > band_hi) continue;
        if (!found || psd.power[k] > best.power) best = {f, psd.power[k]};
        found = true;
    }
    if (!found) throw BandError("dominant_peak: no frequency bin inside the band");
    return best;
}

// Integrated power over bins with freq in [band_lo, band_hi].
inline double band_power(const PsdEstimate& psd, double band_lo, double band_hi) {
    double total = 0.0;
    for (std::size_t k = 0; k < psd.freqs_hz.size(); ++k) {
        if (psd.freqs_hz[k] >= band_lo && psd.freqs_hz[k] <= band_hi) total += psd.power[k];
    }
    return total * psd.bin_width();
}

inline void write_psd_csv(const std::filesystem::path& path, const PsdEstimate& psd) {
    static const std::vector<std::string> header = {"freq_hz", "power"};
    Matrix m(psd.freqs_hz.size(), 2);
    for (std::size_t k = 0; k < psd.freqs_hz.size(); ++k) {
        m(k, 0) = psd.freqs_hz[k];
        m(k, 1) = psd.power[k];
    }
    csv::write_numeric(path, header, m);
}

// Time runs left to right, ROIs top to bottom.
struct GrayplotImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
};

inline std::uint8_t gray_level(double z) {
    const double level = std::round((z + 3.0) / 6.0 * 255.0);
    return static_cast<std::uint8_t>(std::clamp(level, 0.0, 255.0));
}

inline GrayplotImage grayplot(const Matrix& bold) {
    const auto z = zscore_channels(bold);
    GrayplotImage img{bold.rows(), bold.cols(), std::vector<std::uint8_t>(bold.rows() * bold.cols())};
    for (std::size_t roi = 0; roi < img.height; ++roi) {
        for (std::size_t t = 0; t < img.width; ++t) img.pixels[roi * img.width + t] = gray_level(z.data(t, roi));
    }
    return img;
}

inline GrayplotImage grayplot(const ScanRecord& scan) { return grayplot(scan.bold); }

// Binary PGM (P5), maxval 255.
inline void write_pgm(std::ostream& out, const GrayplotImage& img) {
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline void write_pgm(const std::filesystem::path& path, const GrayplotImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    write_pgm(out, img);
}

}  // namespace rvrecon
