#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rvrecon/errors.hpp"
#include "rvrecon/matrix.hpp"
#include "rvrecon/timeseries.hpp"

namespace rvrecon {

enum class ChannelMode { bold_only, bold_plus_motion };

inline std::string to_string(ChannelMode mode) {
    return mode == ChannelMode::bold_only ? "bold_only" : "bold_plus_motion";
}

inline ChannelMode parse_channel_mode(std::string_view name) {
    if (name == "bold_only") return ChannelMode::bold_only;
    if (name == "bold_plus_motion") return ChannelMode::bold_plus_motion;
    throw ConfigError("unknown channel mode '" + std::string(name) + "'");
}

inline std::size_t channel_count(ChannelMode mode) {
    return mode == ChannelMode::bold_only ? kNumRois : kNumRois + kNumMotion;
}

// Which part of the scan a model reconstructs: the first `half` volumes, the
// centre volume of every sliding window, or the last `half` volumes.
enum class Method { start = 1, middle = 2, end = 3 };

inline int method_number(Method m) { return static_cast<int>(m); }

inline Method method_from_number(int n) {
    if (n < 1 || n > 3) throw ConfigError("method must be 1, 2 or 3");
    return static_cast<Method>(n);
}

struct WindowSpec {
    std::size_t window_len = 65;
    std::size_t n_channels = kNumRois + kNumMotion;

    std::size_t half() const noexcept { return (window_len - 1) / 2; }

    ChannelMode mode() const {
        return n_channels == kNumRois ? ChannelMode::bold_only : ChannelMode::bold_plus_motion;
    }

    void validate() const {
        if (window_len < 3 || window_len % 2 == 0) throw SchemaError("window_len must be odd and >= 3");
        if (n_channels != kNumRois && n_channels != kNumRois + kNumMotion) {
            throw SchemaError("n_channels must be 90 or 96");
        }
    }

    static WindowSpec for_mode(ChannelMode mode, std::size_t window_len = 65) {
        return {window_len, channel_count(mode)};
    }

    std::size_t target_dim(Method m) const { return m == Method::middle ? 1 : half(); }
};

// [bold | motion] with motion in columns 90..95, or bold alone.
inline Matrix select_channels(const ScanRecord& scan, ChannelMode mode) {
    if (mode == ChannelMode::bold_only) return scan.bold;
    return hconcat(scan.bold, scan.motion);
}

// Selected channels, each z-scored over the scan.
inline Matrix prepare_channels(const ScanRecord& scan, ChannelMode mode) {
    return zscore_channels(select_channels(scan, mode)).data;
}

// Model-ready windows. Inputs are views into per-scan channel matrices, so
// memory stays proportional to the scans rather than to the window count.
class WindowedDataset {
public:
    WindowedDataset() = default;
    WindowedDataset(std::size_t window_len, std::size_t n_channels, std::size_t target_dim, Method method)
        : window_len_(window_len), n_channels_(n_channels), target_dim_(target_dim), method_(method) {}

    std::size_t size() const noexcept { return refs_.size(); }
    bool empty() const noexcept { return refs_.empty(); }
    std::size_t window_len() const noexcept { return window_len_; }
    std::size_t n_channels() const noexcept { return n_channels_; }
    std::size_t target_dim() const noexcept { return target_dim_; }
    Method method() const noexcept { return method_; }
    ChannelMode mode() const { return WindowSpec{window_len_, n_channels_}.mode(); }

    std::span<const double> input(std::size_t i) const {
        const auto& ref = refs_[i];
        return sources_[ref.source]->values().subspan(ref.start * n_channels_, window_len_ * n_channels_);
    }
    std::span<const double> target(std::size_t i) const {
        return std::span<const double>(targets_).subspan(i * target_dim_, target_dim_);
    }
    std::span<double> target(std::size_t i) { return std::span<double>(targets_).subspan(i * target_dim_, target_dim_); }
    const std::string& scan_id(std::size_t i) const { return source_ids_[refs_[i].source]; }
    // 0-based first row of window i within its scan.
    std::size_t window_start(std::size_t i) const { return refs_[i].start; }

    void add_source(std::shared_ptr<const Matrix> channels, std::string scan_id) {
        if (channels->cols() != n_channels_) throw SchemaError(scan_id + ": channel count does not match dataset");
        sources_.push_back(std::move(channels));
        source_ids_.push_back(std::move(scan_id));
    }

    void add_window(std::size_t source, std::size_t start, std::span<const double> target) {
        if (target.size() != target_dim_) throw ShapeError("target length does not match target_dim");
        if (start + window_len_ > sources_.at(source)->rows()) throw ShapeError("window extends past scan end");
        refs_.push_back({source, start});
        targets_.insert(targets_.end(), target.begin(), target.end());
    }

    Tensor3 materialize() const {
        Tensor3 out(size(), window_len_, n_channels_);
        for (std::size_t i = 0; i < size(); ++i) {
            auto src = input(i);
            std::copy(src.begin(), src.end(), out.sample(i).begin());
        }
        return out;
    }

    // Every `stride`-th window, starting from the first.
    WindowedDataset subsample(std::size_t stride) const {
        if (stride == 0) throw ConfigError("subsample stride must be >= 1");
        WindowedDataset out(window_len_, n_channels_, target_dim_, method_);
        out.sources_ = sources_;
        out.source_ids_ = source_ids_;
        for (std::size_t i = 0; i < size(); i += stride) {
            out.refs_.push_back(refs_[i]);
            auto t = target(i);
            out.targets_.insert(out.targets_.end(), t.begin(), t.end());
        }
        return out;
    }

    // Appends all windows of `other`, which must share geometry and method.
    void append(const WindowedDataset& other) {
        if (other.window_len_ != window_len_ || other.n_channels_ != n_channels_ ||
            other.target_dim_ != target_dim_ || other.method_ != method_) {
            throw SchemaError("cannot append datasets with different geometry");
        }
        const std::size_t offset = sources_.size();
        sources_.insert(sources_.end(), other.sources_.begin(), other.sources_.end());
        source_ids_.insert(source_ids_.end(), other.source_ids_.begin(), other.source_ids_.end());
        for (auto ref : other.refs_) refs_.push_back({ref.source + offset, ref.start});
        targets_.insert(targets_.end(), other.targets_.begin(), other.targets_.end());
    }

private:
    struct WindowRef {
        std::size_t source;
        std::size_t start;
    };

    std::size_t window_len_ = 0;
    std::size_t n_channels_ = 0;
    std::size_t target_dim_ = 0;
    Method method_ = Method::middle;
    std::vector<std::shared_ptr<const Matrix>> sources_;
    std::vector<std::string> source_ids_;
    std::vector<WindowRef> refs_;
    std::vector<double> targets_;
};

// Builds the windows for one scan from already z-scored channels [T x C].
inline WindowedDataset build_windows(std::shared_ptr<const Matrix> channels, const RvSeries& rv,
                                     const WindowSpec& spec, Method method, std::string scan_id) {
    spec.validate();
    const std::size_t T = channels->rows();
    if (channels->cols() != spec.n_channels) {
        throw SchemaError(scan_id + ": expected " + std::to_string(spec.n_channels) + " channels, got " +
                          std::to_string(channels->cols()));
    }
    if (T < spec.window_len) {
        throw ShapeError(scan_id + ": scan has " + std::to_string(T) + " volumes, shorter than window length " +
                         std::to_string(spec.window_len));
    }
    if (rv.size() != T) throw ShapeError(scan_id + ": RV length does not match volume count");

    const std::size_t half = spec.half();
    WindowedDataset ds(spec.window_len, spec.n_channels, spec.target_dim(method), method);
    ds.add_source(std::move(channels), std::move(scan_id));
    const std::span<const double> values(rv.values);
    switch (method) {
        case Method::start:
            ds.add_window(0, 0, values.first(half));
            break;
        case Method::middle:
            for (std::size_t s = 0; s + spec.window_len <= T; ++s) ds.add_window(0, s, values.subspan(s + half, 1));
            break;
        case Method::end:
            ds.add_window(0, T - spec.window_len, values.last(half));
            break;
    }
    return ds;
}

inline WindowedDataset build_windows(const ScanRecord& scan, const RvSeries& rv, const WindowSpec& spec,
                                     Method method) {
    spec.validate();
    auto channels = std::make_shared<const Matrix>(prepare_channels(scan, spec.mode()));
    return build_windows(std::move(channels), rv, spec, method, scan.scan_id);
}

// 1-based inclusive volume ranges covered by each method.
struct StitchLayout {
    std::size_t start_first, start_last;
    std::size_t middle_first, middle_last;
    std::size_t end_first, end_last;
};

inline StitchLayout stitch_layout(std::size_t T, const WindowSpec& spec) {
    spec.validate();
    if (T < spec.window_len) throw StitchError("stitch: T shorter than window length");
    const std::size_t half = spec.half();
    return {1, half, half + 1, T - half, T - half + 1, T};
}

inline RvSeries stitch(std::span<const double> pred_start, std::span<const double> pred_middle,
                       std::span<const double> pred_end, std::size_t T, const WindowSpec& spec,
                       double tr_s = 0.0) {
    spec.validate();
    if (T < spec.window_len) throw StitchError("stitch: T shorter than window length");
    const std::size_t half = spec.half();
    if (pred_start.size() != half || pred_end.size() != half) {
        throw StitchError("stitch: start/end predictions must have " + std::to_string(half) + " values");
    }
    if (pred_middle.size() != T - spec.window_len + 1) {
        throw StitchError("stitch: middle predictions must have " + std::to_string(T - spec.window_len + 1) +
                          " values, got " + std::to_string(pred_middle.size()));
    }
    RvSeries out;
    out.tr_s = tr_s;
    out.values.reserve(T);
    out.values.insert(out.values.end(), pred_start.begin(), pred_start.end());
    out.values.insert(out.values.end(), pred_middle.begin(), pred_middle.end());
    out.values.insert(out.values.end(), pred_end.begin(), pred_end.end());
    return out;
}

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline std::uint64_t get_u64(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("dataset cache: truncated file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

inline void put_f64(std::ostream& out, double x) { put_u64(out, std::bit_cast<std::uint64_t>(x)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace detail

// Cache format (unstable, version 1): 12-byte magic, u32 LE version,
// u64 LE {method, n, window_len, n_channels, target_dim}, inputs and targets
// as row-major f64 LE, then per-window scan ids (u64 length + bytes).
inline constexpr char kDatasetMagic[12] = {'R', 'V', 'R', 'E', 'C', 'O', 'N', '-', 'W', 'I', 'N', 'S'};
inline constexpr std::uint32_t kDatasetVersion = 1;

inline void save_dataset(const std::filesystem::path& path, const WindowedDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out.write(kDatasetMagic, sizeof kDatasetMagic);
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((kDatasetVersion >> (8 * i)) & 0xff));
    detail::put_u64(out, static_cast<std::uint64_t>(method_number(ds.method())));
    detail::put_u64(out, ds.size());
    detail::put_u64(out, ds.window_len());
    detail::put_u64(out, ds.n_channels());
    detail::put_u64(out, ds.target_dim());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double x : ds.input(i)) detail::put_f64(out, x);
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (double x : ds.target(i)) detail::put_f64(out, x);
    }
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& id = ds.scan_id(i);
        detail::put_u64(out, id.size());
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    if (!out) throw DataError(path.string() + ": write failed");
}

inline WindowedDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string() + ": cannot open file");
    char magic[12];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kDatasetMagic, sizeof magic) != 0) {
        throw DataError(path.string() + ": not a dataset cache file");
    }
    unsigned char ver[4];
    if (!in.read(reinterpret_cast<char*>(ver), 4)) throw DataError(path.string() + ": truncated header");
    const std::uint32_t version = ver[0] | (ver[1] << 8) | (ver[2] << 16) | (static_cast<std::uint32_t>(ver[3]) << 24);
    if (version != kDatasetVersion) throw DataError(path.string() + ": unsupported cache version");
    const auto method = method_from_number(static_cast<int>(detail::get_u64(in)));
    const auto n = detail::get_u64(in);
    const auto len = detail::get_u64(in);
    const auto channels = detail::get_u64(in);
    const auto target_dim = detail::get_u64(in);

    std::vector<double> inputs(n * len * channels);
    for (auto& x : inputs) x = detail::get_f64(in);
    std::vector<double> targets(n * target_dim);
    for (auto& x : targets) x = detail::get_f64(in);

    WindowedDataset ds(len, channels, target_dim, method);
    auto all = std::make_shared<const Matrix>(n * len, channels, std::move(inputs));
    // One source per run of identical scan ids keeps scan_id() intact.
    std::string current;
    std::size_t n_sources = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto id_len = detail::get_u64(in);
        std::string id(id_len, '\0');
        if (!in.read(id.data(), static_cast<std::streamsize>(id_len))) {
            throw DataError(path.string() + ": truncated ids");
        }
        if (n_sources == 0 || id != current) {
            ds.add_source(all, id);
            current = id;
            ++n_sources;
        }
        const std::size_t source = n_sources - 1;
        ds.add_window(source, i * len, std::span<const double>(targets).subspan(i * target_dim, target_dim));
    }
    return ds;
}

}  // namespace rvrecon
