#pragma once

#include "aggdp/error.hpp"
#include "aggdp/linalg.hpp"
#include "aggdp/rng.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace aggdp {

enum class Activation { Tanh, Logistic, Softplus };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Logistic: return "logistic";
        case Activation::Softplus: return "softplus";
    }
    return "";
}

inline Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "logistic" || s == "sigmoid") return Activation::Logistic;
    if (s == "softplus" || s == "smooth-relu") return Activation::Softplus;
    throw ValidationError("unknown nonlinearity '" + s + "' (expected tanh, logistic or softplus)");
}

namespace detail {

inline double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// ln(1 + e^x) without overflow for large x.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double activate(Activation a, double x) {
    switch (a) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Logistic: return logistic(x);
        case Activation::Softplus: return softplus(x);
    }
    return x;
}

/// Derivative at pre-activation x.
inline double activate_derivative(Activation a, double x) {
    switch (a) {
        case Activation::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::Logistic: {
            const double s = logistic(x);
            return s * (1.0 - s);
        }
        case Activation::Softplus: return logistic(x);
    }
    return 1.0;
}

} // namespace detail

/// Maps a state index to the network input y(i).
struct StateEncoder {
    std::size_t num_states = 0;
    std::size_t dimension = 0;
    std::function<Vector(std::size_t)> encode;

    static StateEncoder one_hot(std::size_t n) {
        detail::require(n >= 1, "one-hot encoder needs at least one state");
        return {n, n, [n](std::size_t i) {
                    detail::require(i < n, "state " + std::to_string(i + 1) + " out of range for the encoder");
                    Vector y = Vector::Zero(static_cast<Eigen::Index>(n));
                    y[static_cast<Eigen::Index>(i)] = 1.0;
                    return y;
                }};
    }
};

/// Dense layers y -> sigma(A_1 y + b_1) -> ... -> F; the output is r'F.
struct NetworkSpec {
    StateEncoder encoder;
    std::vector<std::size_t> widths;
    std::vector<Activation> activations;  ///< one per layer; empty means tanh everywhere

    std::size_t num_layers() const noexcept { return widths.size(); }
    std::size_t feature_width() const { return widths.back(); }
    Activation activation(std::size_t k) const { return activations.empty() ? Activation::Tanh : activations[k]; }
    std::size_t input_width(std::size_t k) const { return k == 0 ? encoder.dimension : widths[k - 1]; }

    static NetworkSpec one_hot(std::size_t n, std::vector<std::size_t> widths, std::vector<Activation> activations = {}) {
        return {StateEncoder::one_hot(n), std::move(widths), std::move(activations)};
    }
};

struct NetworkParams {
    std::vector<Matrix> a;
    std::vector<Vector> b;
    Vector r;
};

namespace detail {

inline void check_spec(const NetworkSpec& spec) {
    require(static_cast<bool>(spec.encoder.encode) && spec.encoder.dimension >= 1, "network needs a state encoder");
    require(!spec.widths.empty(), "network needs at least one nonlinear layer");
    for (std::size_t w : spec.widths) require(w >= 1, "layer widths must be at least 1");
    require(spec.activations.empty() || spec.activations.size() == spec.widths.size(),
            "give one nonlinearity per layer or none");
}

inline void check_params(const NetworkSpec& spec, const NetworkParams& p) {
    check_spec(spec);
    require(p.a.size() == spec.num_layers() && p.b.size() == spec.num_layers(), "parameter layer count mismatch");
    for (std::size_t k = 0; k < spec.num_layers(); ++k) {
        require(static_cast<std::size_t>(p.a[k].rows()) == spec.widths[k] &&
                    static_cast<std::size_t>(p.a[k].cols()) == spec.input_width(k) &&
                    static_cast<std::size_t>(p.b[k].size()) == spec.widths[k],
                "layer " + std::to_string(k + 1) + " parameters have the wrong shape");
    }
    require(static_cast<std::size_t>(p.r.size()) == spec.feature_width(), "output weights have the wrong length");
}

} // namespace detail

inline std::size_t param_count(const NetworkSpec& spec) {
    std::size_t total = spec.feature_width();
    for (std::size_t k = 0; k < spec.num_layers(); ++k) total += spec.widths[k] * (spec.input_width(k) + 1);
    return total;
}

/// Parameters as one vector: per layer A (column-major) then b, finally r.
inline Vector flatten(const NetworkParams& p) {
    std::size_t total = static_cast<std::size_t>(p.r.size());
    for (std::size_t k = 0; k < p.a.size(); ++k) total += static_cast<std::size_t>(p.a[k].size() + p.b[k].size());
    Vector out(static_cast<Eigen::Index>(total));
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < p.a.size(); ++k) {
        out.segment(at, p.a[k].size()) = p.a[k].reshaped();
        at += p.a[k].size();
        out.segment(at, p.b[k].size()) = p.b[k];
        at += p.b[k].size();
    }
    out.segment(at, p.r.size()) = p.r;
    return out;
}

inline NetworkParams unflatten(const NetworkSpec& spec, const Vector& flat) {
    detail::check_spec(spec);
    detail::require(static_cast<std::size_t>(flat.size()) == param_count(spec), "flat parameter vector has the wrong length");
    NetworkParams p;
    Eigen::Index at = 0;
    for (std::size_t k = 0; k < spec.num_layers(); ++k) {
        const auto rows = static_cast<Eigen::Index>(spec.widths[k]);
        const auto cols = static_cast<Eigen::Index>(spec.input_width(k));
        p.a.push_back(flat.segment(at, rows * cols).reshaped(rows, cols));
        at += rows * cols;
        p.b.push_back(flat.segment(at, rows));
        at += rows;
    }
    p.r = flat.segment(at, static_cast<Eigen::Index>(spec.feature_width()));
    return p;
}

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for every weight and bias of a layer.
inline NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
    detail::check_spec(spec);
    CounterRng rng(seed);
    auto draw = [&](double bound) { return bound * (2.0 * rng.uniform() - 1.0); };
    NetworkParams p;
    for (std::size_t k = 0; k < spec.num_layers(); ++k) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.input_width(k)));
        Matrix a(static_cast<Eigen::Index>(spec.widths[k]), static_cast<Eigen::Index>(spec.input_width(k)));
        for (auto& x : a.reshaped()) x = draw(bound);
        Vector b(static_cast<Eigen::Index>(spec.widths[k]));
        for (auto& x : b) x = draw(bound);
        p.a.push_back(std::move(a));
        p.b.push_back(std::move(b));
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.feature_width()));
    p.r.resize(static_cast<Eigen::Index>(spec.feature_width()));
    for (auto& x : p.r) x = draw(bound);
    return p;
}

struct ForwardResult {
    Vector features;  ///< F(i, v): outputs of the last nonlinear layer
    double output = 0.0;
};

namespace detail {

/// Forward pass keeping pre-activations z_k and activations h_k (h_0 = y).
struct Trace {
    std::vector<Vector> z;
    std::vector<Vector> h;
};

inline Trace forward_trace(const NetworkSpec& spec, const NetworkParams& p, const Vector& y) {
    Trace t;
    t.h.push_back(y);
    for (std::size_t k = 0; k < spec.num_layers(); ++k) {
        Vector z = p.a[k] * t.h.back() + p.b[k];
        Vector h = z.unaryExpr([&](double x) { return activate(spec.activation(k), x); });
        t.z.push_back(std::move(z));
        t.h.push_back(std::move(h));
    }
    return t;
}

} // namespace detail

inline ForwardResult forward(const NetworkSpec& spec, const NetworkParams& p, std::size_t state) {
    detail::check_params(spec, p);
    auto t = detail::forward_trace(spec, p, spec.encoder.encode(state));
    ForwardResult out;
    out.output = p.r.dot(t.h.back());
    out.features = std::move(t.h.back());
    return out;
}

struct GradientResult {
    NetworkParams grad;  ///< d/dv of (J~(i, v, r) - beta)^2
    double loss = 0.0;
};

/// Backpropagation of the squared residual of one state-cost pair.
inline GradientResult gradient(const NetworkSpec& spec, const NetworkParams& p, std::size_t state, double beta) {
    detail::check_params(spec, p);
    const auto t = detail::forward_trace(spec, p, spec.encoder.encode(state));
    const double residual = p.r.dot(t.h.back()) - beta;
    GradientResult out;
    out.loss = residual * residual;
    const std::size_t layers = spec.num_layers();
    out.grad.a.resize(layers);
    out.grad.b.resize(layers);
    out.grad.r = 2.0 * residual * t.h.back();
    Vector delta_h = 2.0 * residual * p.r;  // dL/dh_L
    for (std::size_t k = layers; k-- > 0;) {
        const Vector delta_z =
            delta_h.cwiseProduct(t.z[k].unaryExpr([&](double x) { return detail::activate_derivative(spec.activation(k), x); }));
        out.grad.a[k] = delta_z * t.h[k].transpose();
        out.grad.b[k] = delta_z;
        if (k > 0) delta_h = p.a[k].transpose() * delta_z;
    }
    return out;
}

struct TrainingPair {
    std::size_t state = 0;
    double target = 0.0;
};

using TrainingSet = std::vector<TrainingPair>;

struct TrainOptions {
    std::size_t epochs = 100;
    double stepsize = 0.01;
    double decay = 0.0;  ///< stepsize at epoch t is stepsize / (1 + decay t)
    double ridge = 0.0;
    std::uint64_t seed = 0;
};

struct TrainResult {
    NetworkParams params;
    std::vector<double> loss;  ///< mean squared residual over the full set after each epoch
};

/// Mean of (J~(i_m, v, r) - beta_m)^2 over the set.
inline double training_loss(const NetworkSpec& spec, const NetworkParams& p, const TrainingSet& data) {
    double total = 0.0;
    for (const auto& d : data) {
        const double e = forward(spec, p, d.state).output - d.target;
        total += e * e;
    }
    return total / static_cast<double>(data.size());
}

inline constexpr double kDivergenceLoss = 1e12;

/**
 * Incremental gradient: each epoch visits every pair once in a freshly shuffled order and
 * steps along the gradient of that pair's squared residual plus ridge times ||v||^2.
 */
inline TrainResult train_incremental(const NetworkSpec& spec, NetworkParams params, const TrainingSet& data,
                                     const TrainOptions& opt) {
    detail::check_params(spec, params);
    detail::require(!data.empty(), "training set is empty");
    detail::require(opt.stepsize > 0.0 && std::isfinite(opt.stepsize), "stepsize must be positive");
    detail::require(opt.decay >= 0.0, "stepsize decay must be nonnegative");
    detail::require(opt.ridge >= 0.0, "ridge must be nonnegative");
    for (const auto& d : data) {
        detail::require(d.state < spec.encoder.num_states, "training state " + std::to_string(d.state + 1) + " out of range");
        detail::require(std::isfinite(d.target), "training target must be finite");
    }
    CounterRng rng(opt.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Vector flat = flatten(params);
    TrainResult out;
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        rng.shuffle(order);
        const double step = opt.stepsize / (1.0 + opt.decay * static_cast<double>(epoch));
        for (std::size_t m : order) {
            const auto g = gradient(spec, params, data[m].state, data[m].target);
            flat -= step * (flatten(g.grad) + 2.0 * opt.ridge * flat);
            params = unflatten(spec, flat);
        }
        const double loss = training_loss(spec, params, data);
        out.loss.push_back(loss);
        if (!std::isfinite(loss) || loss > kDivergenceLoss)
            throw NumericalError("training diverged at epoch " + std::to_string(epoch + 1) + " (loss " +
                                     std::to_string(loss) + "); try a smaller stepsize",
                                 loss);
    }
    out.params = std::move(params);
    return out;
}

/// F(i) for every state, one row per state.
inline Matrix extract_feature_mapping(const NetworkSpec& spec, const NetworkParams& p) {
    detail::check_params(spec, p);
    Matrix f(static_cast<Eigen::Index>(spec.encoder.num_states), static_cast<Eigen::Index>(spec.feature_width()));
    for (std::size_t i = 0; i < spec.encoder.num_states; ++i) f.row(static_cast<Eigen::Index>(i)) = forward(spec, p, i).features.transpose();
    return f;
}

} // namespace aggdp
