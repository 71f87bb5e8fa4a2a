#pragma once

// Minimal dense network: selectable hidden activation, linear output, exact
// reverse-mode gradients for both parameters and inputs (the input gradient
// feeds multi-step dynamics training), Adam, and array-file serialization.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rmppi/array_file.hpp"
#include "rmppi/core.hpp"

namespace rmppi {

enum class Activation : int { relu = 0, tanh = 1, mish = 2 };

inline Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    if (s == "mish") return Activation::mish;
    throw ValidationError("unknown activation '" + s + "'");
}

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::mish: return "mish";
    }
    throw ValidationError("bad activation id");
}

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {
    if (x > 20.0) return x;
    return std::log1p(std::exp(x));
}

inline double act_value(Activation a, double x) {
    switch (a) {
        case Activation::relu: return x > 0 ? x : 0.0;
        case Activation::tanh: return std::tanh(x);
        case Activation::mish: return x * std::tanh(softplus(x));
    }
    return 0.0;
}

inline double act_deriv(Activation a, double x) {
    switch (a) {
        case Activation::relu: return x > 0 ? 1.0 : 0.0;
        case Activation::tanh: {
            double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::mish: {
            double t = std::tanh(softplus(x));
            return t + x * (1.0 - t * t) * sigmoid(x);
        }
    }
    return 0.0;
}

}  // namespace detail

// Per-call scratch for backprop: layer inputs and pre-activations.
struct MlpCache {
    std::vector<Vec> inputs;   // input to each layer
    std::vector<Vec> pre_act;  // pre-activation of each layer
};

class Mlp {
public:
    Mlp() = default;

    // dims = [input, hidden..., output]
    Mlp(std::vector<int> dims, Activation act) : dims_(std::move(dims)), act_(act) {
        require(dims_.size() >= 2, "mlp needs at least input and output dims");
        for (int d : dims_) require(d >= 1, "mlp layer dims must be >= 1");
        layer_offsets_.clear();
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            layer_offsets_.push_back(off);
            off += static_cast<std::size_t>(dims_[l + 1]) * dims_[l] + dims_[l + 1];
        }
        params_.assign(off, 0.0);
    }

    // Glorot-uniform weights, zero biases.
    void init(RngStream& rng) {
        for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
            int fan_in = dims_[l], fan_out = dims_[l + 1];
            double bound = std::sqrt(6.0 / (fan_in + fan_out));
            double* w = params_.data() + layer_offsets_[l];
            for (int i = 0; i < fan_out * fan_in; ++i) w[i] = rng.uniform(-bound, bound);
            double* b = w + fan_out * fan_in;
            for (int i = 0; i < fan_out; ++i) b[i] = 0.0;
        }
    }

    int input_dim() const { return dims_.front(); }
    int output_dim() const { return dims_.back(); }
    int n_layers() const { return static_cast<int>(dims_.size()) - 1; }
    const std::vector<int>& dims() const { return dims_; }
    Activation activation() const { return act_; }
    Vec& params() { return params_; }
    const Vec& params() const { return params_; }
    std::size_t n_params() const { return params_.size(); }

    Vec forward(const Vec& x) const {
        MlpCache scratch;
        return forward_cached(x, scratch);
    }

    Vec forward_cached(const Vec& x, MlpCache& cache) const {
        require(static_cast<int>(x.size()) == input_dim(), "mlp forward: input dim mismatch");
        cache.inputs.assign(n_layers(), {});
        cache.pre_act.assign(n_layers(), {});
        Vec cur = x;
        for (int l = 0; l < n_layers(); ++l) {
            cache.inputs[l] = cur;
            int in = dims_[l], out = dims_[l + 1];
            const double* w = params_.data() + layer_offsets_[l];
            const double* b = w + static_cast<std::size_t>(out) * in;
            Vec z(out);
            for (int i = 0; i < out; ++i) {
                double acc = b[i];
                const double* row = w + static_cast<std::size_t>(i) * in;
                for (int j = 0; j < in; ++j) acc += row[j] * cur[j];
                z[i] = acc;
            }
            cache.pre_act[l] = z;
            if (l + 1 < n_layers())
                for (int i = 0; i < out; ++i) z[i] = detail::act_value(act_, z[i]);
            cur = std::move(z);
        }
        return cur;
    }

    // Accumulates parameter gradients into `grad` (same layout as params)
    // and returns the gradient w.r.t. the input.
    Vec backward(const MlpCache& cache, const Vec& d_out, Vec& grad) const {
        require(grad.size() == params_.size(), "mlp backward: grad buffer size mismatch");
        require(static_cast<int>(d_out.size()) == output_dim(), "mlp backward: output grad dim mismatch");
        Vec delta = d_out;
        for (int l = n_layers() - 1; l >= 0; --l) {
            int in = dims_[l], out = dims_[l + 1];
            const double* w = params_.data() + layer_offsets_[l];
            double* gw = grad.data() + layer_offsets_[l];
            double* gb = gw + static_cast<std::size_t>(out) * in;
            const Vec& x = cache.inputs[l];
            if (l < n_layers() - 1)
                for (int i = 0; i < out; ++i)
                    delta[i] *= detail::act_deriv(act_, cache.pre_act[l][i]);
            for (int i = 0; i < out; ++i) {
                double* grow = gw + static_cast<std::size_t>(i) * in;
                for (int j = 0; j < in; ++j) grow[j] += delta[i] * x[j];
                gb[i] += delta[i];
            }
            Vec d_in(in, 0.0);
            for (int i = 0; i < out; ++i) {
                const double* row = w + static_cast<std::size_t>(i) * in;
                for (int j = 0; j < in; ++j) d_in[j] += row[j] * delta[i];
            }
            delta = std::move(d_in);
        }
        return delta;
    }

    // Layer owning flat parameter index i; used for gradient diagnostics.
    int layer_of_param(std::size_t i) const {
        for (int l = n_layers() - 1; l >= 0; --l)
            if (i >= layer_offsets_[l]) return l;
        return 0;
    }

    void save(ArrayFile& f, const std::string& prefix = "") const {
        Vec dims_d(dims_.begin(), dims_.end());
        f.add(prefix + "dims", {dims_d.size()}, dims_d);
        f.add_scalar(prefix + "activation_id", static_cast<double>(act_));
        for (int l = 0; l < n_layers(); ++l) {
            std::size_t in = dims_[l], out = dims_[l + 1];
            const double* w = params_.data() + layer_offsets_[l];
            f.add(prefix + "W" + std::to_string(l), {out, in}, Vec(w, w + out * in));
            const double* b = w + out * in;
            f.add(prefix + "b" + std::to_string(l), {out}, Vec(b, b + out));
        }
    }

    static Mlp load(const ArrayFile& f, const std::string& prefix = "") {
        const auto& de = f.get(prefix + "dims");
        std::vector<int> dims;
        for (double d : de.data) {
            int v = static_cast<int>(d);
            if (v < 1 || d != v) throw IoError("mlp load: bad layer dim");
            dims.push_back(v);
        }
        int act_id = static_cast<int>(f.scalar(prefix + "activation_id"));
        if (act_id < 0 || act_id > 2) throw IoError("mlp load: unknown activation id " + std::to_string(act_id));
        Mlp net(dims, static_cast<Activation>(act_id));
        for (int l = 0; l < net.n_layers(); ++l) {
            const auto& we = f.get(prefix + "W" + std::to_string(l));
            const auto& be = f.get(prefix + "b" + std::to_string(l));
            std::size_t in = dims[l], out = dims[l + 1];
            if (we.dims != std::vector<std::uint64_t>{out, in})
                throw IoError("mlp load: W" + std::to_string(l) + " has wrong shape");
            if (be.dims != std::vector<std::uint64_t>{out})
                throw IoError("mlp load: b" + std::to_string(l) + " has wrong shape");
            double* w = net.params_.data() + net.layer_offsets_[l];
            std::copy(we.data.begin(), we.data.end(), w);
            std::copy(be.data.begin(), be.data.end(), w + out * in);
        }
        return net;
    }

    void save_file(const std::string& path) const {
        ArrayFile f;
        save(f);
        f.save(path);
    }

    static Mlp load_file(const std::string& path) { return load(ArrayFile::load(path)); }

private:
    std::vector<int> dims_;
    Activation act_ = Activation::mish;
    Vec params_;
    std::vector<std::size_t> layer_offsets_;
};

// Adam with bias correction; step count increments before the correction.
struct AdamState {
    Vec m;
    Vec v;
    long long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(Mlp& net, const Vec& grad, AdamState& st, double lr) {
    require(grad.size() == net.n_params(), "adam: grad size mismatch");
    require(st.m.size() == net.n_params() && st.v.size() == net.n_params(),
            "adam: state size mismatch");
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            throw NumericError("adam: non-finite gradient in layer " +
                               std::to_string(net.layer_of_param(i)));
    st.t += 1;
    double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    Vec& p = net.params();
    for (std::size_t i = 0; i < grad.size(); ++i) {
        st.m[i] = st.beta1 * st.m[i] + (1.0 - st.beta1) * grad[i];
        st.v[i] = st.beta2 * st.v[i] + (1.0 - st.beta2) * grad[i] * grad[i];
        double mhat = st.m[i] / c1;
        double vhat = st.v[i] / c2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
}

}  // namespace rmppi
