#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvrecon/dataset.hpp"
#include "rvrecon/errors.hpp"
#include "rvrecon/matrix.hpp"
#include "rvrecon/random.hpp"
#include "rvrecon/scan_io.hpp"

// Small temporal CNN regressor. Activations are [len x channels] row-major,
// matching the window layout, so a conv1d output is a dot product between a
// filter and a contiguous slice of the input.
namespace rvrecon::nn {

// Weights stored as [out][kernel][in], then bias[out].
struct Conv1d {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_len = 1;
    std::size_t stride = 1;
    friend bool operator==(const Conv1d&, const Conv1d&) = default;
};

struct Relu {
    friend bool operator==(const Relu&, const Relu&) = default;
};

// Non-overlapping max pooling; trailing samples that do not fill a pool are dropped.
struct MaxPool1d {
    std::size_t pool_len = 2;
    friend bool operator==(const MaxPool1d&, const MaxPool1d&) = default;
};

struct Flatten {
    friend bool operator==(const Flatten&, const Flatten&) = default;
};

// Weights stored as [out][in], then bias[out]. Requires a flat (len 1) input.
struct Dense {
    std::size_t in_dim = 1;
    std::size_t out_dim = 1;
    friend bool operator==(const Dense&, const Dense&) = default;
};

using LayerSpec = std::variant<Conv1d, Relu, MaxPool1d, Flatten, Dense>;

struct Shape {
    std::size_t len = 0;
    std::size_t channels = 0;
    std::size_t size() const noexcept { return len * channels; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::size_t conv_output_len(std::size_t len, std::size_t kernel_len, std::size_t stride) {
    return (len - kernel_len) / stride + 1;
}

inline std::size_t pool_output_len(std::size_t len, std::size_t pool_len) { return len / pool_len; }

inline Shape output_shape(const LayerSpec& layer, Shape in) {
    return std::visit(
        [&](const auto& l) -> Shape {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv1d>) {
                if (l.in_channels == 0 || l.out_channels == 0 || l.kernel_len == 0 || l.stride == 0) {
                    throw ShapeError("conv1d: all dimensions must be >= 1");
                }
                if (in.channels != l.in_channels) {
                    throw ShapeError("conv1d: expects " + std::to_string(l.in_channels) + " input channels, got " +
                                     std::to_string(in.channels));
                }
                if (l.kernel_len > in.len) throw ShapeError("conv1d: kernel longer than input");
                return {conv_output_len(in.len, l.kernel_len, l.stride), l.out_channels};
            } else if constexpr (std::is_same_v<L, Relu>) {
                return in;
            } else if constexpr (std::is_same_v<L, MaxPool1d>) {
                if (l.pool_len == 0 || l.pool_len > in.len) throw ShapeError("maxpool1d: invalid pool length");
                return {pool_output_len(in.len, l.pool_len), in.channels};
            } else if constexpr (std::is_same_v<L, Flatten>) {
                return {1, in.size()};
            } else {
                if (l.in_dim == 0 || l.out_dim == 0) throw ShapeError("dense: dimensions must be >= 1");
                if (in.len != 1 || in.channels != l.in_dim) {
                    throw ShapeError("dense: expects flat input of " + std::to_string(l.in_dim) + ", got " +
                                     std::to_string(in.len) + "x" + std::to_string(in.channels));
                }
                return {1, l.out_dim};
            }
        },
        layer);
}

inline std::size_t param_count(const LayerSpec& layer) {
    if (const auto* c = std::get_if<Conv1d>(&layer)) {
        return c->out_channels * c->kernel_len * c->in_channels + c->out_channels;
    }
    if (const auto* d = std::get_if<Dense>(&layer)) return d->out_dim * d->in_dim + d->out_dim;
    return 0;
}

// conv(C->32, k5) relu pool2 conv(32->32, k3) relu pool2 flatten dense(64) relu dense(out_dim)
inline std::vector<LayerSpec> reference_architecture(std::size_t window_len, std::size_t channels,
                                                     std::size_t out_dim) {
    std::vector<LayerSpec> layers = {Conv1d{channels, 32, 5, 1}, Relu{}, MaxPool1d{2},
                                     Conv1d{32, 32, 3, 1},       Relu{}, MaxPool1d{2}, Flatten{}};
    Shape s{window_len, channels};
    for (const auto& l : layers) s = output_shape(l, s);
    layers.push_back(Dense{s.size(), 64});
    layers.push_back(Relu{});
    layers.push_back(Dense{64, out_dim});
    return layers;
}

class Model {
public:
    Model() = default;
    Model(Shape input, std::vector<LayerSpec> layers) : input_(input), layers_(std::move(layers)) {
        if (input_.len == 0 || input_.channels == 0) throw ShapeError("model input shape must be non-empty");
        if (layers_.empty()) throw ShapeError("model needs at least one layer");
        shapes_.push_back(input_);
        std::size_t offset = 0;
        for (const auto& l : layers_) {
            shapes_.push_back(output_shape(l, shapes_.back()));
            offsets_.push_back(offset);
            offset += param_count(l);
        }
        if (shapes_.back().len != 1) throw ShapeError("model output must be flat; end with dense or flatten");
        params_.assign(offset, 0.0);
    }

    const Shape& input_shape() const noexcept { return input_; }
    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    // shape(i) is the input shape of layer i; shape(layers().size()) is the output.
    const Shape& shape(std::size_t i) const { return shapes_.at(i); }
    std::size_t out_dim() const { return shapes_.back().channels; }

    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }
    std::size_t param_offset(std::size_t layer) const { return offsets_.at(layer); }
    std::span<double> layer_params(std::size_t layer) {
        return params().subspan(offsets_.at(layer), param_count(layers_.at(layer)));
    }
    std::span<const double> layer_params(std::size_t layer) const {
        return params().subspan(offsets_.at(layer), param_count(layers_.at(layer)));
    }

    // Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias, drawn layer by layer.
    void init(Rng& rng) {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            std::size_t fan_in = 0, fan_out = 0, n_weights = 0;
            if (const auto* c = std::get_if<Conv1d>(&layers_[i])) {
                fan_in = c->in_channels * c->kernel_len;
                fan_out = c->out_channels * c->kernel_len;
                n_weights = c->out_channels * fan_in;
            } else if (const auto* d = std::get_if<Dense>(&layers_[i])) {
                fan_in = d->in_dim;
                fan_out = d->out_dim;
                n_weights = d->out_dim * d->in_dim;
            } else {
                continue;
            }
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            auto p = layer_params(i);
            for (std::size_t k = 0; k < p.size(); ++k) p[k] = k < n_weights ? rng.uniform(-limit, limit) : 0.0;
        }
    }

    friend bool operator==(const Model&, const Model&) = default;

private:
    Shape input_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape> shapes_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

namespace detail {

// Four partial sums; fixed order keeps results reproducible.
inline double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace detail

// Per-thread scratch for one forward/backward pass.
class Workspace {
public:
    explicit Workspace(const Model& model) {
        const std::size_t n = model.layers().size();
        acts_.resize(n + 1);
        grads_.resize(n + 1);
        argmax_.resize(n);
        for (std::size_t i = 0; i <= n; ++i) {
            acts_[i].resize(model.shape(i).size());
            grads_[i].resize(model.shape(i).size());
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (std::holds_alternative<MaxPool1d>(model.layers()[i])) argmax_[i].resize(model.shape(i + 1).size());
        }
    }

    std::span<const double> output() const { return acts_.back(); }

private:
    friend std::span<const double> forward(const Model&, std::span<const double>, Workspace&);
    friend void backward(const Model&, Workspace&, std::span<const double>, std::span<double>);

    std::vector<std::vector<double>> acts_;
    std::vector<std::vector<double>> grads_;
    std::vector<std::vector<std::size_t>> argmax_;
};

// Forward pass for a single window; activations stay in the workspace for backward().
inline std::span<const double> forward(const Model& model, std::span<const double> input, Workspace& ws) {
    if (input.size() != model.input_shape().size()) {
        throw ShapeError("forward: input has " + std::to_string(input.size()) + " values, model expects " +
                         std::to_string(model.input_shape().size()));
    }
    std::copy(input.begin(), input.end(), ws.acts_[0].begin());
    for (std::size_t li = 0; li < model.layers().size(); ++li) {
        const auto& x = ws.acts_[li];
        auto& y = ws.acts_[li + 1];
        const Shape in = model.shape(li);
        const Shape out = model.shape(li + 1);
        const auto p = model.layer_params(li);
        const auto& layer = model.layers()[li];
        if (const auto* c = std::get_if<Conv1d>(&layer)) {
            const std::size_t span_len = c->kernel_len * c->in_channels;
            const double* bias = p.data() + c->out_channels * span_len;
            for (std::size_t t = 0; t < out.len; ++t) {
                const double* window = x.data() + t * c->stride * in.channels;
                for (std::size_t o = 0; o < c->out_channels; ++o) {
                    y[t * out.channels + o] = bias[o] + detail::dot(p.data() + o * span_len, window, span_len);
                }
            }
        } else if (std::holds_alternative<Relu>(layer)) {
            for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
        } else if (const auto* mp = std::get_if<MaxPool1d>(&layer)) {
            auto& arg = ws.argmax_[li];
            for (std::size_t t = 0; t < out.len; ++t) {
                for (std::size_t ch = 0; ch < in.channels; ++ch) {
                    std::size_t best = t * mp->pool_len * in.channels + ch;
                    for (std::size_t k = 1; k < mp->pool_len; ++k) {
                        const std::size_t idx = (t * mp->pool_len + k) * in.channels + ch;
                        if (x[idx] > x[best]) best = idx;
                    }
                    y[t * in.channels + ch] = x[best];
                    arg[t * in.channels + ch] = best;
                }
            }
        } else if (std::holds_alternative<Flatten>(layer)) {
            std::copy(x.begin(), x.end(), y.begin());
        } else {
            const auto& d = std::get<Dense>(layer);
            const double* bias = p.data() + d.out_dim * d.in_dim;
            for (std::size_t o = 0; o < d.out_dim; ++o) {
                y[o] = bias[o] + detail::dot(p.data() + o * d.in_dim, x.data(), d.in_dim);
            }
        }
    }
    return ws.acts_.back();
}

// Reverse-mode pass for the window last seen by forward(). Parameter
// gradients are accumulated (added) into grad_params.
inline void backward(const Model& model, Workspace& ws, std::span<const double> grad_output,
                     std::span<double> grad_params) {
    const std::size_t n = model.layers().size();
    if (grad_output.size() != model.out_dim()) throw ShapeError("backward: output gradient size mismatch");
    if (grad_params.size() != model.params().size()) throw ShapeError("backward: parameter gradient size mismatch");
    std::copy(grad_output.begin(), grad_output.end(), ws.grads_[n].begin());
    for (std::size_t li = n; li-- > 0;) {
        const auto& x = ws.acts_[li];
        const auto& dy = ws.grads_[li + 1];
        auto& dx = ws.grads_[li];
        // The network input needs no gradient.
        const bool need_dx = li > 0;
        const Shape in = model.shape(li);
        const Shape out = model.shape(li + 1);
        const auto p = model.layer_params(li);
        double* g = grad_params.data() + model.param_offset(li);
        const auto& layer = model.layers()[li];
        if (const auto* c = std::get_if<Conv1d>(&layer)) {
            const std::size_t span_len = c->kernel_len * c->in_channels;
            double* gbias = g + c->out_channels * span_len;
            if (need_dx) std::fill(dx.begin(), dx.end(), 0.0);
            for (std::size_t t = 0; t < out.len; ++t) {
                const std::size_t base = t * c->stride * in.channels;
                for (std::size_t o = 0; o < c->out_channels; ++o) {
                    const double d = dy[t * out.channels + o];
                    if (d == 0.0) continue;
                    gbias[o] += d;
                    detail::axpy(d, x.data() + base, g + o * span_len, span_len);
                    if (need_dx) detail::axpy(d, p.data() + o * span_len, dx.data() + base, span_len);
                }
            }
        } else if (std::holds_alternative<Relu>(layer)) {
            if (need_dx) {
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
            }
        } else if (std::holds_alternative<MaxPool1d>(layer)) {
            if (need_dx) {
                std::fill(dx.begin(), dx.end(), 0.0);
                const auto& arg = ws.argmax_[li];
                for (std::size_t i = 0; i < dy.size(); ++i) dx[arg[i]] += dy[i];
            }
        } else if (std::holds_alternative<Flatten>(layer)) {
            if (need_dx) std::copy(dy.begin(), dy.end(), dx.begin());
        } else {
            const auto& d = std::get<Dense>(layer);
            double* gbias = g + d.out_dim * d.in_dim;
            if (need_dx) std::fill(dx.begin(), dx.end(), 0.0);
            for (std::size_t o = 0; o < d.out_dim; ++o) {
                const double dd = dy[o];
                if (dd == 0.0) continue;
                gbias[o] += dd;
                detail::axpy(dd, x.data(), g + o * d.in_dim, d.in_dim);
                if (need_dx) detail::axpy(dd, p.data() + o * d.in_dim, dx.data(), d.in_dim);
            }
        }
    }
}

// Batch forward pass: [B x len x C] -> [B x out_dim].
inline Matrix forward(const Model& model, const Tensor3& batch) {
    if (batch.len != model.input_shape().len || batch.channels != model.input_shape().channels) {
        throw ShapeError("forward: batch is " + std::to_string(batch.len) + "x" + std::to_string(batch.channels) +
                         ", model expects " + std::to_string(model.input_shape().len) + "x" +
                         std::to_string(model.input_shape().channels));
    }
    Workspace ws(model);
    Matrix out(batch.n, model.out_dim());
    for (std::size_t i = 0; i < batch.n; ++i) {
        auto y = forward(model, batch.sample(i), ws);
        std::copy(y.begin(), y.end(), out.row(i).begin());
    }
    return out;
}

struct LossAndGrad {
    double loss = 0.0;
    std::vector<double> grads;
};

namespace detail {

// Mean squared error over batch and output dims. Gradients are accumulated
// in sample order.
template <typename InputAt, typename TargetAt>
double accumulate_loss_grad(const Model& model, std::size_t batch_size, InputAt&& input_at, TargetAt&& target_at,
                            Workspace& ws, std::span<double> grads) {
    const std::size_t out_dim = model.out_dim();
    const double scale = 1.0 / static_cast<double>(batch_size * out_dim);
    std::vector<double> dout(out_dim);
    double loss = 0.0;
    for (std::size_t b = 0; b < batch_size; ++b) {
        const auto y = forward(model, input_at(b), ws);
        const auto t = target_at(b);
        if (t.size() != out_dim) throw ShapeError("loss: target size does not match model output");
        double sample_loss = 0.0;
        for (std::size_t k = 0; k < out_dim; ++k) {
            const double err = y[k] - t[k];
            sample_loss += err * err;
            dout[k] = 2.0 * err * scale;
        }
        if (!std::isfinite(sample_loss)) {
            throw DivergenceError("non-finite loss at batch index " + std::to_string(b));
        }
        loss += sample_loss;
        backward(model, ws, dout, grads);
    }
    return loss * scale;
}

}  // namespace detail

inline LossAndGrad loss_and_grad(const Model& model, const Tensor3& batch, const Matrix& targets) {
    if (batch.n == 0) throw ShapeError("loss_and_grad: empty batch");
    if (targets.rows() != batch.n || targets.cols() != model.out_dim()) {
        throw ShapeError("loss_and_grad: targets must be " + std::to_string(batch.n) + "x" +
                         std::to_string(model.out_dim()));
    }
    Workspace ws(model);
    LossAndGrad out;
    out.grads.assign(model.params().size(), 0.0);
    out.loss = detail::accumulate_loss_grad(
        model, batch.n, [&](std::size_t i) { return batch.sample(i); }, [&](std::size_t i) { return targets.row(i); },
        ws, out.grads);
    return out;
}

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
            throw ConfigError("beta1 and beta2 must be in [0, 1)");
        }
        if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
        if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    }
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;

    AdamState() = default;
    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam update; increments state.step before use.
inline void adam_step(std::span<double> weights, std::span<const double> grads, AdamState& state,
                      const TrainConfig& config) {
    if (weights.size() != grads.size() || state.m.size() != weights.size() || state.v.size() != weights.size()) {
        throw ShapeError("adam_step: weights, gradients and state must have equal sizes");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double g = grads[i];
        state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
        state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        weights[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
}

// Target de-normalisation applied by predict(). Inputs are z-scored per scan
// before windowing, so no input statistics are stored.
struct NormStats {
    std::string input = "per_scan_zscore";
    double target_mean = 0.0;
    double target_std = 1.0;
    friend bool operator==(const NormStats&, const NormStats&) = default;
};

inline constexpr int kCheckpointSchemaVersion = 1;

struct ModelCheckpoint {
    int schema_version = kCheckpointSchemaVersion;
    Model model;
    NormStats norm;
    std::uint64_t seed = 0;
    ChannelMode channel_mode = ChannelMode::bold_plus_motion;
    Method method = Method::middle;
    // Mean training loss per epoch.
    std::vector<double> loss_history;

    friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

// Trains a fresh model on the dataset. Windows are put in canonical
// (scan id, start) order before the seeded shuffle, so the result does not
// depend on the order the dataset was assembled in.
inline ModelCheckpoint fit(const WindowedDataset& data, const std::vector<LayerSpec>& arch,
                           const TrainConfig& config) {
    config.validate();
    if (data.empty()) throw ConfigError("fit: dataset is empty");
    ModelCheckpoint ckpt;
    ckpt.model = Model({data.window_len(), data.n_channels()}, arch);
    if (ckpt.model.out_dim() != data.target_dim()) {
        throw ShapeError("fit: model output " + std::to_string(ckpt.model.out_dim()) +
                         " does not match target_dim " + std::to_string(data.target_dim()));
    }
    ckpt.seed = config.seed;
    ckpt.channel_mode = data.mode();
    ckpt.method = data.method();

    Rng rng(config.seed);
    ckpt.model.init(rng);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const int cmp = data.scan_id(a).compare(data.scan_id(b));
        return cmp != 0 ? cmp < 0 : data.window_start(a) < data.window_start(b);
    });

    Workspace ws(ckpt.model);
    AdamState adam(ckpt.model.params().size());
    std::vector<double> grads(ckpt.model.params().size());
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double epoch_loss = 0.0;
        for (std::size_t begin = 0, batch = 0; begin < order.size(); begin += config.batch_size, ++batch) {
            const std::size_t count = std::min(config.batch_size, order.size() - begin);
            std::fill(grads.begin(), grads.end(), 0.0);
            double loss = 0.0;
            try {
                loss = detail::accumulate_loss_grad(
                    ckpt.model, count, [&](std::size_t i) { return data.input(order[begin + i]); },
                    [&](std::size_t i) { return data.target(order[begin + i]); }, ws, grads);
            } catch (const DivergenceError& e) {
                throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(batch) + ": " + e.what());
            }
            epoch_loss += loss * static_cast<double>(count);
            adam_step(ckpt.model.params(), grads, adam, config);
        }
        ckpt.loss_history.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return ckpt;
}

// Forward pass on z-scored windows, mapped back to target units.
inline Matrix predict(const ModelCheckpoint& ckpt, const Tensor3& windows) {
    const Shape expected = ckpt.model.input_shape();
    if (windows.channels != expected.channels) {
        throw ModeError("predict: checkpoint was trained in " + to_string(ckpt.channel_mode) + " mode (" +
                        std::to_string(expected.channels) + " channels), windows have " +
                        std::to_string(windows.channels));
    }
    auto out = forward(ckpt.model, windows);
    for (double& v : out.values()) v = v * ckpt.norm.target_std + ckpt.norm.target_mean;
    return out;
}

inline Matrix predict(const ModelCheckpoint& ckpt, const WindowedDataset& data) {
    return predict(ckpt, data.materialize());
}

// --- JSON checkpoint format -------------------------------------------------

inline nlohmann::json layer_to_json(const LayerSpec& layer) {
    return std::visit(
        [](const auto& l) -> nlohmann::json {
            using L = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<L, Conv1d>) {
                return {{"kind", "conv1d"},
                        {"in_channels", l.in_channels},
                        {"out_channels", l.out_channels},
                        {"kernel_len", l.kernel_len},
                        {"stride", l.stride}};
            } else if constexpr (std::is_same_v<L, Relu>) {
                return {{"kind", "relu"}};
            } else if constexpr (std::is_same_v<L, MaxPool1d>) {
                return {{"kind", "maxpool1d"}, {"pool_len", l.pool_len}};
            } else if constexpr (std::is_same_v<L, Flatten>) {
                return {{"kind", "flatten"}};
            } else {
                return {{"kind", "dense"}, {"in_dim", l.in_dim}, {"out_dim", l.out_dim}};
            }
        },
        layer);
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "conv1d") {
        return Conv1d{j.at("in_channels").get<std::size_t>(), j.at("out_channels").get<std::size_t>(),
                      j.at("kernel_len").get<std::size_t>(), j.value("stride", std::size_t{1})};
    }
    if (kind == "relu") return Relu{};
    if (kind == "maxpool1d") return MaxPool1d{j.at("pool_len").get<std::size_t>()};
    if (kind == "flatten") return Flatten{};
    if (kind == "dense") return Dense{j.at("in_dim").get<std::size_t>(), j.at("out_dim").get<std::size_t>()};
    throw ConfigError("unknown layer kind '" + kind + "'");
}

inline nlohmann::json arch_to_json(const std::vector<LayerSpec>& layers) {
    auto out = nlohmann::json::array();
    for (const auto& l : layers) out.push_back(layer_to_json(l));
    return out;
}

inline std::vector<LayerSpec> arch_from_json(const nlohmann::json& j) {
    std::vector<LayerSpec> layers;
    for (const auto& l : j) layers.push_back(layer_from_json(l));
    return layers;
}

inline nlohmann::json checkpoint_to_json(const ModelCheckpoint& ckpt) {
    const auto& m = ckpt.model;
    auto weights = nlohmann::json::array();
    for (std::size_t i = 0; i < m.layers().size(); ++i) {
        const auto p = m.layer_params(i);
        if (p.empty()) continue;
        std::size_t n_bias = 0;
        if (const auto* c = std::get_if<Conv1d>(&m.layers()[i])) n_bias = c->out_channels;
        if (const auto* d = std::get_if<Dense>(&m.layers()[i])) n_bias = d->out_dim;
        weights.push_back({{"layer", i},
                           {"w", std::vector<double>(p.begin(), p.end() - static_cast<std::ptrdiff_t>(n_bias))},
                           {"b", std::vector<double>(p.end() - static_cast<std::ptrdiff_t>(n_bias), p.end())}});
    }
    return {
        {"schema_version", ckpt.schema_version},
        {"arch",
         {{"input", {{"window_len", m.input_shape().len}, {"channels", m.input_shape().channels}}},
          {"layers", arch_to_json(m.layers())}}},
        {"weights", weights},
        {"norm_stats",
         {{"input", ckpt.norm.input}, {"target_mean", ckpt.norm.target_mean}, {"target_std", ckpt.norm.target_std}}},
        {"seed", ckpt.seed},
        {"channel_mode", to_string(ckpt.channel_mode)},
        {"method", method_number(ckpt.method)},
        {"loss_history", ckpt.loss_history},
    };
}

inline ModelCheckpoint checkpoint_from_json(const nlohmann::json& j) {
    try {
        ModelCheckpoint ckpt;
        ckpt.schema_version = j.at("schema_version").get<int>();
        if (ckpt.schema_version != kCheckpointSchemaVersion) {
            throw ConfigError("unsupported checkpoint schema_version " + std::to_string(ckpt.schema_version));
        }
        const auto& arch = j.at("arch");
        const Shape input{arch.at("input").at("window_len").get<std::size_t>(),
                          arch.at("input").at("channels").get<std::size_t>()};
        ckpt.model = Model(input, arch_from_json(arch.at("layers")));
        for (const auto& w : j.at("weights")) {
            const auto layer = w.at("layer").get<std::size_t>();
            const auto wv = w.at("w").get<std::vector<double>>();
            const auto bv = w.at("b").get<std::vector<double>>();
            auto p = ckpt.model.layer_params(layer);
            if (wv.size() + bv.size() != p.size()) {
                throw ShapeError("checkpoint: weight count mismatch for layer " + std::to_string(layer));
            }
            std::copy(wv.begin(), wv.end(), p.begin());
            std::copy(bv.begin(), bv.end(), p.begin() + static_cast<std::ptrdiff_t>(wv.size()));
        }
        for (double v : ckpt.model.params()) {
            if (!std::isfinite(v)) throw DataError("checkpoint: non-finite weight");
        }
        const auto& ns = j.at("norm_stats");
        ckpt.norm.input = ns.at("input").get<std::string>();
        ckpt.norm.target_mean = ns.at("target_mean").get<double>();
        ckpt.norm.target_std = ns.at("target_std").get<double>();
        ckpt.seed = j.at("seed").get<std::uint64_t>();
        ckpt.channel_mode = parse_channel_mode(j.at("channel_mode").get<std::string>());
        ckpt.method = method_from_number(j.at("method").get<int>());
        ckpt.loss_history = j.value("loss_history", std::vector<double>{});
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
    write_json_file(path, checkpoint_to_json(ckpt));
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    return checkpoint_from_json(read_json_file(path));
}

}  // namespace rvrecon::nn
