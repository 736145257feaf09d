#pragma once

// Dense feedforward engine: layers, activations, analytic backpropagation,
// plain SGD and the gradient reversal junction. Everything runs in double
// precision on row-major batches (one sample per row).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fairrep/error.hpp"

namespace fairrep {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

enum class Activation {
    tanh,
    sigmoid,
    relu,
    identity,
    /// 2 * sigmoid(a) - 1, i.e. sigmoid shifted by -0.5 and scaled by 2.
    /// Used as the correction activation for min-max features so that
    /// corrections can be negative.
    centered_sigmoid,
};

inline std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
        case Activation::centered_sigmoid: return "centered_sigmoid";
    }
    return "unknown";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "sigmoid") return Activation::sigmoid;
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    if (s == "centered_sigmoid") return Activation::centered_sigmoid;
    throw ConfigError("unknown activation '" + std::string(s) +
                      "' (expected tanh, sigmoid, relu, identity or centered_sigmoid)");
}

/// Odd activations map 0 to 0 and satisfy f(-a) = -f(a) exactly in floating point.
inline bool is_odd(Activation a) {
    return a == Activation::tanh || a == Activation::identity ||
           a == Activation::centered_sigmoid;
}

inline double logistic(double a) {
    if (a >= 0.0) {
        return 1.0 / (1.0 + std::exp(-a));
    }
    const double e = std::exp(a);
    return e / (1.0 + e);
}

inline double activate(Activation kind, double a) {
    switch (kind) {
        case Activation::tanh: return std::tanh(a);
        case Activation::sigmoid: return logistic(a);
        case Activation::relu: return a > 0.0 ? a : 0.0;
        case Activation::identity: return a;
        // tanh(a/2) == 2*sigmoid(a) - 1 and is exactly odd in floating point
        case Activation::centered_sigmoid: return std::tanh(0.5 * a);
    }
    return a;
}

/// Derivative of the activation, expressed through the pre-activation `a`
/// and the already computed output `y`.
inline double activation_derivative(Activation kind, double a, double y) {
    switch (kind) {
        case Activation::tanh: return 1.0 - y * y;
        case Activation::sigmoid: return y * (1.0 - y);
        case Activation::relu: return a > 0.0 ? 1.0 : 0.0;
        case Activation::identity: return 1.0;
        case Activation::centered_sigmoid: return 0.5 * (1.0 - y * y);
    }
    return 1.0;
}

template <typename Derived>
Matrix activate(Activation kind, const Eigen::MatrixBase<Derived>& pre) {
    Matrix out(pre.rows(), pre.cols());
    for (Eigen::Index r = 0; r < pre.rows(); ++r) {
        for (Eigen::Index c = 0; c < pre.cols(); ++c) {
            out(r, c) = activate(kind, pre(r, c));
        }
    }
    return out;
}

inline Vector activate(Activation kind, const Vector& v) {
    Vector out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out(i) = activate(kind, v(i));
    return out;
}

/// Open output interval of an activation; infinite bounds for unbounded kinds.
struct ActivationRange {
    double lo;
    double hi;
};

inline ActivationRange activation_range(Activation kind) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    switch (kind) {
        case Activation::tanh:
        case Activation::centered_sigmoid: return {-1.0, 1.0};
        case Activation::sigmoid: return {0.0, 1.0};
        case Activation::relu: return {0.0, inf};
        case Activation::identity: return {-inf, inf};
    }
    return {-inf, inf};
}

struct DenseLayer {
    Matrix weights;  // out_dim x in_dim
    Vector biases;   // out_dim, kept at zero when has_bias is false
    Activation activation = Activation::identity;
    bool has_bias = true;

    std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
};

/// Zero-valued layer of the given shape.
inline DenseLayer make_zero_layer(std::size_t in, std::size_t out, Activation act,
                                  bool has_bias = true) {
    DenseLayer layer;
    layer.weights = Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    layer.biases = Vector::Zero(static_cast<Eigen::Index>(out));
    layer.activation = act;
    layer.has_bias = has_bias;
    return layer;
}

/// Glorot-uniform weights in [-sqrt(6/(in+out)), +sqrt(6/(in+out))], zero biases.
inline DenseLayer make_glorot_layer(std::size_t in, std::size_t out, Activation act,
                                    bool has_bias, Rng& rng) {
    if (in == 0 || out == 0) {
        throw DimensionError("dense layer dimensions must be positive, got " +
                             std::to_string(in) + "x" + std::to_string(out));
    }
    DenseLayer layer = make_zero_layer(in, out, act, has_bias);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
            layer.weights(r, c) = dist(rng);
        }
    }
    return layer;
}

inline bool is_finite(const DenseLayer& layer) {
    return layer.weights.allFinite() && layer.biases.allFinite();
}

struct LayerGradients {
    Matrix weights;
    Vector biases;
};

using Gradients = std::vector<LayerGradients>;

inline LayerGradients zero_gradients(const DenseLayer& layer) {
    return {Matrix::Zero(layer.weights.rows(), layer.weights.cols()),
            Vector::Zero(layer.biases.size())};
}

inline Gradients zero_gradients(std::span<const DenseLayer> layers) {
    Gradients g;
    g.reserve(layers.size());
    for (const auto& l : layers) g.push_back(zero_gradients(l));
    return g;
}

/// Values remembered by dense_forward for the matching dense_backward call.
struct ForwardCache {
    Matrix input;
    Matrix pre;
    Matrix output;
    bool valid = false;
};

inline void check_input_width(const DenseLayer& layer, Eigen::Index width,
                              std::string_view layer_name) {
    if (static_cast<std::size_t>(width) != layer.in_dim()) {
        throw DimensionError("layer '" + std::string(layer_name) + "' expects input width " +
                             std::to_string(layer.in_dim()) + ", got " + std::to_string(width));
    }
}

/// activation(W x + b) for every batch row. Fills `cache` when given.
inline Matrix dense_forward(const DenseLayer& layer, const Matrix& x,
                            ForwardCache* cache = nullptr,
                            std::string_view layer_name = "dense") {
    check_input_width(layer, x.cols(), layer_name);
    Matrix pre = x * layer.weights.transpose();
    if (layer.has_bias) pre.rowwise() += layer.biases.transpose();
    Matrix out = activate(layer.activation, pre);
    if (cache != nullptr) {
        cache->input = x;
        cache->pre = std::move(pre);
        cache->output = out;
        cache->valid = true;
    }
    return out;
}

struct BackwardResult {
    Matrix input_gradient;
    LayerGradients gradients;
};

/// Backpropagates a gradient taken with respect to the pre-activation.
/// Parameter gradients are summed over the batch.
inline BackwardResult dense_backward_pre(const DenseLayer& layer, const ForwardCache& cache,
                                         const Matrix& pre_gradient) {
    if (!cache.valid) {
        throw Error("dense_backward called without a forward cache for this batch");
    }
    if (pre_gradient.rows() != cache.pre.rows() || pre_gradient.cols() != cache.pre.cols()) {
        throw DimensionError("upstream gradient shape " + std::to_string(pre_gradient.rows()) +
                             "x" + std::to_string(pre_gradient.cols()) +
                             " does not match cached forward batch " +
                             std::to_string(cache.pre.rows()) + "x" +
                             std::to_string(cache.pre.cols()));
    }
    BackwardResult result;
    result.gradients.weights = pre_gradient.transpose() * cache.input;
    if (layer.has_bias) {
        result.gradients.biases = pre_gradient.colwise().sum().transpose();
    } else {
        result.gradients.biases = Vector::Zero(layer.biases.size());
    }
    result.input_gradient = pre_gradient * layer.weights;
    return result;
}

/// Backpropagates `upstream` (gradient w.r.t. the layer output).
inline BackwardResult dense_backward(const DenseLayer& layer, const ForwardCache& cache,
                                     const Matrix& upstream) {
    if (!cache.valid) {
        throw Error("dense_backward called without a forward cache for this batch");
    }
    if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
        throw DimensionError("upstream gradient shape does not match cached forward output");
    }
    Matrix pre_gradient(upstream.rows(), upstream.cols());
    for (Eigen::Index r = 0; r < upstream.rows(); ++r) {
        for (Eigen::Index c = 0; c < upstream.cols(); ++c) {
            pre_gradient(r, c) = upstream(r, c) * activation_derivative(layer.activation,
                                                                        cache.pre(r, c),
                                                                        cache.output(r, c));
        }
    }
    return dense_backward_pre(layer, cache, pre_gradient);
}

/// Gradient reversal junction. The forward pass is the identity; on the way
/// back the gradient is multiplied by -gamma.
inline Matrix grad_reverse(const Matrix& upstream, double gamma) {
    if (!std::isfinite(gamma) || gamma < 0.0) {
        throw ConfigError("gradient reversal weight must be finite and non-negative, got " +
                          std::to_string(gamma));
    }
    return -gamma * upstream;
}

/// Identity forward pass of the reversal junction, named for readability at call sites.
inline const Matrix& grad_reverse_forward(const Matrix& x) { return x; }

/// A stack of dense layers applied in sequence.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<DenseLayer> layers, std::string name = "mlp")
        : layers_(std::move(layers)), name_(std::move(name)) {
        for (std::size_t i = 1; i < layers_.size(); ++i) {
            if (layers_[i].in_dim() != layers_[i - 1].out_dim()) {
                throw DimensionError(name_ + " layer " + std::to_string(i) + " input width " +
                                     std::to_string(layers_[i].in_dim()) +
                                     " does not match previous output width " +
                                     std::to_string(layers_[i - 1].out_dim()));
            }
        }
    }

    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    const std::string& name() const { return name_; }
    bool empty() const { return layers_.empty(); }
    std::size_t in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
    std::size_t out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

    struct Trace {
        std::vector<ForwardCache> caches;
    };

    Matrix forward(const Matrix& x, Trace* trace = nullptr) const {
        if (trace != nullptr) trace->caches.assign(layers_.size(), ForwardCache{});
        Matrix h = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = dense_forward(layers_[i], h, trace ? &trace->caches[i] : nullptr,
                              name_ + "[" + std::to_string(i) + "]");
        }
        return h;
    }

    /// Pre-activation of the last layer (used for unsaturated scores and logits).
    Matrix forward_logits(const Matrix& x, Trace* trace = nullptr) const {
        if (layers_.empty()) return x;
        Trace local;
        Trace* t = trace != nullptr ? trace : &local;
        forward(x, t);
        return t->caches.back().pre;
    }

    /// Backward pass; `last_is_pre` means `upstream` is already the gradient
    /// with respect to the last layer's pre-activation.
    BackwardResult backward(const Trace& trace, const Matrix& upstream, Gradients& grads,
                            bool last_is_pre = false) const {
        if (trace.caches.size() != layers_.size()) {
            throw Error(name_ + ": backward called without a matching forward trace");
        }
        grads = Gradients(layers_.size());
        Matrix g = upstream;
        BackwardResult step;
        for (std::size_t i = layers_.size(); i-- > 0;) {
            const bool pre = last_is_pre && i + 1 == layers_.size();
            step = pre ? dense_backward_pre(layers_[i], trace.caches[i], g)
                       : dense_backward(layers_[i], trace.caches[i], g);
            grads[i] = std::move(step.gradients);
            g = std::move(step.input_gradient);
        }
        return {std::move(g), {}};
    }

private:
    std::vector<DenseLayer> layers_;
    std::string name_ = "mlp";
};

/// p <- p - lr * g for every parameter. Bias-free layers keep zero biases.
inline void sgd_step(std::vector<DenseLayer>& layers, const Gradients& grads, double lr) {
    if (!(lr > 0.0) || !std::isfinite(lr)) {
        throw ConfigError("learning rate must be finite and positive, got " + std::to_string(lr));
    }
    if (grads.size() != layers.size()) {
        throw DimensionError("sgd_step: " + std::to_string(grads.size()) +
                             " gradient blocks for " + std::to_string(layers.size()) + " layers");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& layer = layers[i];
        const auto& g = grads[i];
        if (g.weights.rows() != layer.weights.rows() || g.weights.cols() != layer.weights.cols() ||
            g.biases.size() != layer.biases.size()) {
            throw DimensionError("sgd_step: gradient shape mismatch at layer " + std::to_string(i));
        }
        layer.weights -= lr * g.weights;
        if (layer.has_bias) layer.biases -= lr * g.biases;
    }
}

inline void sgd_step(Mlp& net, const Gradients& grads, double lr) {
    sgd_step(net.layers(), grads, lr);
}

/// Per-parameter flattening helpers used by gradient checks and serialization.
inline std::size_t parameter_count(std::span<const DenseLayer> layers) {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
    return n;
}

/// Mutable reference to the i-th scalar parameter (weights row-major, then biases, layer by layer).
inline double& parameter_at(std::vector<DenseLayer>& layers, std::size_t index) {
    for (auto& l : layers) {
        const auto nw = static_cast<std::size_t>(l.weights.size());
        if (index < nw) return l.weights.data()[index];
        index -= nw;
        const auto nb = static_cast<std::size_t>(l.biases.size());
        if (index < nb) return l.biases.data()[index];
        index -= nb;
    }
    throw DimensionError("parameter index out of range");
}

inline double gradient_at(const Gradients& grads, std::size_t index) {
    for (const auto& g : grads) {
        const auto nw = static_cast<std::size_t>(g.weights.size());
        if (index < nw) return g.weights.data()[index];
        index -= nw;
        const auto nb = static_cast<std::size_t>(g.biases.size());
        if (index < nb) return g.biases.data()[index];
        index -= nb;
    }
    throw DimensionError("gradient index out of range");
}

/// SplitMix64 finalizer; derives independent seeds for sub-tasks from one base seed.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t s = mix_seed(base);
    for (auto k : keys) s = mix_seed(s ^ mix_seed(k + 0x632be59bd9b4e019ULL));
    return s;
}

}  // namespace fairrep
