#pragma once

// Learned single-step dynamics: a dense net predicts the state delta in an
// encoded space where periodic dimensions become (sin, cos) pairs. Training
// minimizes a discounted multi-step loss with gradients propagated through
// the recursive prediction (BPTT). Normalization statistics are fit once on
// the first training set and frozen; fine-tuning reuses them.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "rmppi/array_file.hpp"
#include "rmppi/core.hpp"
#include "rmppi/env.hpp"
#include "rmppi/nn.hpp"
#include "rmppi/prior.hpp"

namespace rmppi {

// ---------------------------------------------------------------------------
// Encoding of periodic dimensions.

class StateCodec {
public:
    StateCodec() = default;

    StateCodec(int state_dim, std::vector<PeriodicDim> periodic)
        : state_dim_(state_dim), periodic_(std::move(periodic)) {
        for (const auto& p : periodic_) {
            require(p.dim >= 0 && p.dim < state_dim_, "codec: periodic dim out of range");
            require(p.period > 0, "codec: period must be positive");
        }
    }

    int state_dim() const { return state_dim_; }
    int enc_dim() const { return state_dim_ + static_cast<int>(periodic_.size()); }
    const std::vector<PeriodicDim>& periodic() const { return periodic_; }

    Vec encode(const State& x) const {
        require(static_cast<int>(x.size()) == state_dim_, "codec: state dim mismatch");
        Vec e;
        e.reserve(enc_dim());
        for (int d = 0; d < state_dim_; ++d) {
            const PeriodicDim* p = periodic_of(d);
            if (p) {
                double a = 2.0 * M_PI * x[d] / p->period;
                e.push_back(std::sin(a));
                e.push_back(std::cos(a));
            } else {
                e.push_back(x[d]);
            }
        }
        return e;
    }

    // Periodic dims decode by atan2 into (-period/2, period/2]; periodic
    // quantities are equivalent mod period, so consumers must not assume the
    // env's own wrap convention.
    State decode(const Vec& e) const {
        require(static_cast<int>(e.size()) == enc_dim(), "codec: encoded dim mismatch");
        State x(state_dim_);
        int j = 0;
        for (int d = 0; d < state_dim_; ++d) {
            const PeriodicDim* p = periodic_of(d);
            if (p) {
                double s = e[j], c = e[j + 1];
                x[d] = std::atan2(s, c) * p->period / (2.0 * M_PI);
                j += 2;
            } else {
                x[d] = e[j];
                j += 1;
            }
        }
        return x;
    }

private:
    const PeriodicDim* periodic_of(int d) const {
        for (const auto& p : periodic_)
            if (p.dim == d) return &p;
        return nullptr;
    }

    int state_dim_ = 0;
    std::vector<PeriodicDim> periodic_;
};

// ---------------------------------------------------------------------------
// Transition data.

struct TransitionDataset {
    int state_dim = 0;
    int action_dim = 0;
    std::vector<Vec> states;
    std::vector<Vec> actions;
    std::vector<Vec> next_states;
    std::vector<std::size_t> episode_offsets;  // starts, plus total count at the end
    std::uint64_t env_hash = 0;

    std::size_t size() const { return states.size(); }
    std::size_t n_episodes() const {
        return episode_offsets.empty() ? 0 : episode_offsets.size() - 1;
    }

    void append_episode(const std::vector<Vec>& xs, const std::vector<Vec>& us,
                        const std::vector<Vec>& nxs) {
        require(xs.size() == us.size() && us.size() == nxs.size(), "dataset: ragged episode");
        if (episode_offsets.empty()) episode_offsets.push_back(0);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            states.push_back(xs[i]);
            actions.push_back(us[i]);
            next_states.push_back(nxs[i]);
        }
        episode_offsets.push_back(states.size());
    }

    void merge(const TransitionDataset& other) {
        require(state_dim == other.state_dim && action_dim == other.action_dim,
                "dataset merge: dimension mismatch");
        require(env_hash == other.env_hash,
                "dataset merge: env hash mismatch (" + hash_hex(env_hash) + " vs " +
                    hash_hex(other.env_hash) + ")");
        std::size_t base = states.size();
        if (episode_offsets.empty()) episode_offsets.push_back(0);
        states.insert(states.end(), other.states.begin(), other.states.end());
        actions.insert(actions.end(), other.actions.begin(), other.actions.end());
        next_states.insert(next_states.end(), other.next_states.begin(), other.next_states.end());
        for (std::size_t i = 1; i < other.episode_offsets.size(); ++i)
            episode_offsets.push_back(base + other.episode_offsets[i]);
    }

    void save(const std::string& path) const {
        ArrayFile f;
        std::uint64_t n = states.size();
        auto flat = [&](const std::vector<Vec>& rows, int cols) {
            Vec out;
            out.reserve(n * cols);
            for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
            return out;
        };
        f.add("states", {n, static_cast<std::uint64_t>(state_dim)}, flat(states, state_dim));
        f.add("actions", {n, static_cast<std::uint64_t>(action_dim)}, flat(actions, action_dim));
        f.add("next_states", {n, static_cast<std::uint64_t>(state_dim)}, flat(next_states, state_dim));
        Vec offs(episode_offsets.begin(), episode_offsets.end());
        f.add("episode_offsets", {offs.size()}, offs);
        f.add("env_hash", {2},
              {static_cast<double>(env_hash >> 32), static_cast<double>(env_hash & 0xffffffffull)});
        f.save(path);
    }

    static TransitionDataset load(const std::string& path) {
        ArrayFile f = ArrayFile::load(path);
        const auto& se = f.get("states");
        const auto& ae = f.get("actions");
        const auto& ne = f.get("next_states");
        if (se.dims.size() != 2 || ae.dims.size() != 2 || ne.dims != se.dims)
            throw IoError("'" + path + "': malformed dataset shapes");
        TransitionDataset ds;
        ds.state_dim = static_cast<int>(se.dims[1]);
        ds.action_dim = static_cast<int>(ae.dims[1]);
        std::uint64_t n = se.dims[0];
        if (ae.dims[0] != n) throw IoError("'" + path + "': actions row count mismatch");
        auto unflat = [&](const ArrayEntry& e, int cols) {
            std::vector<Vec> rows(n);
            for (std::uint64_t i = 0; i < n; ++i)
                rows[i] = Vec(e.data.begin() + i * cols, e.data.begin() + (i + 1) * cols);
            return rows;
        };
        ds.states = unflat(se, ds.state_dim);
        ds.actions = unflat(ae, ds.action_dim);
        ds.next_states = unflat(ne, ds.state_dim);
        for (double o : f.get("episode_offsets").data)
            ds.episode_offsets.push_back(static_cast<std::size_t>(o));
        if (ds.episode_offsets.empty() || ds.episode_offsets.front() != 0 ||
            ds.episode_offsets.back() != n)
            throw IoError("'" + path + "': bad episode offsets");
        for (std::size_t i = 1; i < ds.episode_offsets.size(); ++i)
            if (ds.episode_offsets[i] < ds.episode_offsets[i - 1])
                throw IoError("'" + path + "': episode offsets not monotone");
        const auto& he = f.get("env_hash");
        if (he.data.size() != 2) throw IoError("'" + path + "': bad env hash");
        ds.env_hash = (static_cast<std::uint64_t>(he.data[0]) << 32) |
                      static_cast<std::uint64_t>(he.data[1]);
        return ds;
    }
};

// Rollouts under the prior's mode plus exploration noise; the dataset records
// the executed (clamped) action.
inline TransitionDataset collect_rollouts(const Env& env, const PriorPolicy& prior,
                                          int n_steps, double exploration_sigma,
                                          std::uint64_t seed, std::uint64_t env_hash) {
    require(n_steps > 0, "collect_rollouts: n_steps must be positive");
    require(exploration_sigma >= 0, "collect_rollouts: exploration_sigma must be >= 0");
    TransitionDataset ds;
    ds.state_dim = env.spec().state_dim;
    ds.action_dim = env.spec().action_dim;
    ds.env_hash = env_hash;
    int collected = 0;
    std::uint64_t ep = 0;
    while (collected < n_steps) {
        RngStream rng = RngStream::derived(seed, ep);
        State x = env.reset(rng);
        std::vector<Vec> xs, us, nxs;
        int len = std::min(env.spec().horizon_limit, n_steps - collected);
        for (int t = 0; t < len; ++t) {
            Action u = prior.mode(x);
            for (auto& ui : u) ui += exploration_sigma * rng.normal();
            u = env.clamp_action(u);
            State nx = env.step(x, u);
            xs.push_back(x);
            us.push_back(u);
            nxs.push_back(nx);
            x = nx;
        }
        ds.append_episode(xs, us, nxs);
        collected += len;
        ++ep;
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Learned model.

struct LearnedDynamics {
    Mlp net;  // (enc(state) ⊕ action, normalized) -> normalized delta-enc
    StateCodec codec;
    int action_dim = 0;
    Vec in_mean, in_std, out_mean, out_std;
    bool stats_frozen = false;
    std::uint64_t env_hash = 0;

    int enc_dim() const { return codec.enc_dim(); }

    Vec net_input(const Vec& enc, const Vec& u) const {
        Vec in(enc);
        in.insert(in.end(), u.begin(), u.end());
        for (std::size_t i = 0; i < in.size(); ++i) in[i] = (in[i] - in_mean[i]) / in_std[i];
        return in;
    }

    // One encoded step: e' = e + out_mean + out_std ⊙ net(normalize(e ⊕ u)).
    Vec step_encoded(const Vec& enc, const Vec& u) const {
        Vec out = net.forward(net_input(enc, u));
        Vec next(enc);
        for (std::size_t i = 0; i < next.size(); ++i) next[i] += out_mean[i] + out_std[i] * out[i];
        return next;
    }

    State predict(const State& x, const Action& u) const {
        require(static_cast<int>(u.size()) == action_dim, "learned dynamics: action dim mismatch");
        return codec.decode(step_encoded(codec.encode(x), u));
    }

    void save(const std::string& path) const {
        ArrayFile f;
        net.save(f, "net.");
        f.add_scalar("state_dim", codec.state_dim());
        f.add_scalar("action_dim", action_dim);
        Vec per;
        for (const auto& p : codec.periodic()) {
            per.push_back(static_cast<double>(p.dim));
            per.push_back(p.period);
        }
        f.add("periodic_dims", {per.size() / 2, 2}, per);
        f.add("in_mean", {in_mean.size()}, in_mean);
        f.add("in_std", {in_std.size()}, in_std);
        f.add("out_mean", {out_mean.size()}, out_mean);
        f.add("out_std", {out_std.size()}, out_std);
        f.add("env_hash", {2},
              {static_cast<double>(env_hash >> 32), static_cast<double>(env_hash & 0xffffffffull)});
        f.save(path);
    }

    static LearnedDynamics load(const std::string& path) {
        ArrayFile f = ArrayFile::load(path);
        LearnedDynamics dyn;
        dyn.net = Mlp::load(f, "net.");
        int state_dim = static_cast<int>(f.scalar("state_dim"));
        dyn.action_dim = static_cast<int>(f.scalar("action_dim"));
        std::vector<PeriodicDim> per;
        const auto& pe = f.get("periodic_dims");
        if (pe.dims.size() != 2 || pe.dims[1] != 2) throw IoError("'" + path + "': bad periodic_dims");
        for (std::uint64_t i = 0; i < pe.dims[0]; ++i)
            per.push_back({static_cast<int>(pe.data[i * 2]), pe.data[i * 2 + 1]});
        dyn.codec = StateCodec(state_dim, per);
        dyn.in_mean = f.get("in_mean").data;
        dyn.in_std = f.get("in_std").data;
        dyn.out_mean = f.get("out_mean").data;
        dyn.out_std = f.get("out_std").data;
        std::size_t in_dim = static_cast<std::size_t>(dyn.enc_dim() + dyn.action_dim);
        if (dyn.in_mean.size() != in_dim || dyn.in_std.size() != in_dim ||
            dyn.out_mean.size() != static_cast<std::size_t>(dyn.enc_dim()) ||
            dyn.out_std.size() != static_cast<std::size_t>(dyn.enc_dim()))
            throw IoError("'" + path + "': normalization shapes do not match codec");
        if (static_cast<std::size_t>(dyn.net.input_dim()) != in_dim ||
            dyn.net.output_dim() != dyn.enc_dim())
            throw IoError("'" + path + "': network shape does not match codec");
        const auto& he = f.get("env_hash");
        dyn.env_hash = (static_cast<std::uint64_t>(he.data[0]) << 32) |
                       static_cast<std::uint64_t>(he.data[1]);
        dyn.stats_frozen = true;
        return dyn;
    }
};

struct DynamicsTrainConfig {
    std::vector<int> hidden = {64, 64};
    std::string activation = "mish";
    int window = 8;
    double gamma = 0.9;
    double lr = 1e-3;
    int batch = 32;
    int train_steps = 4000;
    int finetune_steps = 1000;
    double finetune_lr = -1;  // < 0: use lr
    double holdout_fraction = 0.2;
    bool new_only = false;
    std::uint64_t seed = 0;
};

namespace detail {

struct WindowIndex {
    std::vector<std::size_t> starts;  // window start transition indices
};

// Valid windows of length W lie fully inside one episode.
inline WindowIndex index_windows(const TransitionDataset& ds, int window,
                                 std::size_t ep_begin, std::size_t ep_end) {
    WindowIndex idx;
    for (std::size_t e = ep_begin; e < ep_end; ++e) {
        std::size_t lo = ds.episode_offsets[e], hi = ds.episode_offsets[e + 1];
        if (hi - lo < static_cast<std::size_t>(window)) continue;
        for (std::size_t s = lo; s + window <= hi; ++s) idx.starts.push_back(s);
    }
    return idx;
}

}  // namespace detail

// Discounted multi-step loss over one window starting at transition `start`:
//   sum_{t=1..W} gamma^t * |enc(s_t) - e_hat_t|^2
// with e_hat produced by recursive encoded-space prediction from s_0.
// When `grad` is non-null, parameter gradients accumulate into it (BPTT).
inline double multi_step_loss(const LearnedDynamics& dyn, const TransitionDataset& ds,
                              std::size_t start, int window, double gamma, Vec* grad = nullptr) {
    require(window >= 1, "multi_step_loss: window must be >= 1");
    require(start + window <= ds.size(), "multi_step_loss: window exceeds dataset");
    int ed = dyn.enc_dim();
    std::vector<Vec> enc_hat(window + 1);
    std::vector<Vec> targets(window + 1);
    std::vector<Vec> net_ins(window);
    std::vector<MlpCache> caches(window);
    std::vector<Vec> net_outs(window);
    enc_hat[0] = dyn.codec.encode(ds.states[start]);
    for (int t = 0; t < window; ++t) {
        targets[t + 1] = dyn.codec.encode(ds.next_states[start + t]);
        net_ins[t] = dyn.net_input(enc_hat[t], ds.actions[start + t]);
        net_outs[t] = dyn.net.forward_cached(net_ins[t], caches[t]);
        Vec next(enc_hat[t]);
        for (int i = 0; i < ed; ++i) next[i] += dyn.out_mean[i] + dyn.out_std[i] * net_outs[t][i];
        enc_hat[t + 1] = std::move(next);
    }
    double loss = 0.0;
    double g = 1.0;
    for (int t = 1; t <= window; ++t) {
        g *= gamma;
        for (int i = 0; i < ed; ++i) {
            double d = enc_hat[t][i] - targets[t][i];
            loss += g * d * d;
        }
    }
    if (!grad) return loss;

    // adjoint on e_hat_t, walked backwards through the recursion
    Vec adj(ed, 0.0);
    double gt = std::pow(gamma, window);
    for (int i = 0; i < ed; ++i) adj[i] = 2.0 * gt * (enc_hat[window][i] - targets[window][i]);
    for (int t = window - 1; t >= 0; --t) {
        Vec d_out(ed);
        for (int i = 0; i < ed; ++i) d_out[i] = adj[i] * dyn.out_std[i];
        Vec d_in = dyn.net.backward(caches[t], d_out, *grad);
        // e_{t+1} = e_t + delta: identity path plus the net-input path
        Vec adj_prev(adj);
        for (int i = 0; i < ed; ++i) adj_prev[i] += d_in[i] / dyn.in_std[i];
        if (t >= 1) {
            double gl = std::pow(gamma, t);
            for (int i = 0; i < ed; ++i)
                adj_prev[i] += 2.0 * gl * (enc_hat[t][i] - targets[t][i]);
        }
        adj = std::move(adj_prev);
    }
    return loss;
}

// Per-dimension mean absolute open-loop error over non-overlapping windows of
// the given episodes, in encoded space.
inline Vec open_loop_error(const LearnedDynamics& dyn, const TransitionDataset& ds,
                           std::size_t ep_begin, std::size_t ep_end, int window) {
    int ed = dyn.enc_dim();
    Vec acc(ed, 0.0);
    long long count = 0;
    for (std::size_t e = ep_begin; e < ep_end; ++e) {
        std::size_t lo = ds.episode_offsets[e], hi = ds.episode_offsets[e + 1];
        for (std::size_t s = lo; s + window <= hi; s += window) {
            Vec enc = dyn.codec.encode(ds.states[s]);
            for (int t = 0; t < window; ++t) {
                enc = dyn.step_encoded(enc, ds.actions[s + t]);
                Vec target = dyn.codec.encode(ds.next_states[s + t]);
                for (int i = 0; i < ed; ++i) acc[i] += std::fabs(enc[i] - target[i]);
            }
            ++count;
        }
    }
    require(count > 0, "open_loop_error: no full windows in the given episodes");
    for (int i = 0; i < ed; ++i) acc[i] /= static_cast<double>(count * window);
    return acc;
}

struct DynamicsTrainReport {
    double final_train_loss = 0.0;
    Vec loss_curve;     // batch loss sampled at a fixed stride
    Vec holdout_error;  // per encoded dim
    std::size_t n_train_windows = 0;
    std::size_t n_holdout_windows = 0;
};

namespace detail {

inline void fit_normalization(LearnedDynamics& dyn, const TransitionDataset& ds,
                              std::size_t ep_begin, std::size_t ep_end) {
    int ed = dyn.enc_dim();
    int id = ed + dyn.action_dim;
    Vec im(id, 0.0), is(id, 0.0), om(ed, 0.0), os(ed, 0.0);
    long long n = 0;
    for (std::size_t e = ep_begin; e < ep_end; ++e)
        for (std::size_t i = ds.episode_offsets[e]; i < ds.episode_offsets[e + 1]; ++i) {
            Vec enc = dyn.codec.encode(ds.states[i]);
            Vec nenc = dyn.codec.encode(ds.next_states[i]);
            for (int d = 0; d < ed; ++d) {
                im[d] += enc[d];
                om[d] += nenc[d] - enc[d];
            }
            for (int d = 0; d < dyn.action_dim; ++d) im[ed + d] += ds.actions[i][d];
            ++n;
        }
    for (auto& v : im) v /= n;
    for (auto& v : om) v /= n;
    for (std::size_t e = ep_begin; e < ep_end; ++e)
        for (std::size_t i = ds.episode_offsets[e]; i < ds.episode_offsets[e + 1]; ++i) {
            Vec enc = dyn.codec.encode(ds.states[i]);
            Vec nenc = dyn.codec.encode(ds.next_states[i]);
            for (int d = 0; d < ed; ++d) {
                double a = enc[d] - im[d];
                is[d] += a * a;
                double b = (nenc[d] - enc[d]) - om[d];
                os[d] += b * b;
            }
            for (int d = 0; d < dyn.action_dim; ++d) {
                double a = ds.actions[i][d] - im[ed + d];
                is[ed + d] += a * a;
            }
        }
    constexpr double kStdFloor = 1e-8;
    for (int d = 0; d < id; ++d) is[d] = std::max(std::sqrt(is[d] / n), kStdFloor);
    for (int d = 0; d < ed; ++d) os[d] = std::max(std::sqrt(os[d] / n), kStdFloor);
    dyn.in_mean = std::move(im);
    dyn.in_std = std::move(is);
    dyn.out_mean = std::move(om);
    dyn.out_std = std::move(os);
    dyn.stats_frozen = true;
}

inline DynamicsTrainReport run_adam(LearnedDynamics& dyn, const TransitionDataset& ds,
                                    const WindowIndex& train_idx, const WindowIndex& holdout_idx,
                                    const DynamicsTrainConfig& cfg, int steps, double lr,
                                    RngStream& rng, std::size_t holdout_begin,
                                    std::size_t holdout_end) {
    AdamState adam(dyn.net.n_params());
    Vec grad(dyn.net.n_params(), 0.0);
    double last_loss = 0.0;
    Vec curve;
    const int stride = std::max(1, steps / 32);
    for (int step = 0; step < steps; ++step) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double batch_loss = 0.0;
        for (int b = 0; b < cfg.batch; ++b) {
            std::size_t pick = static_cast<std::size_t>(rng.uniform01() *
                                                        static_cast<double>(train_idx.starts.size()));
            if (pick >= train_idx.starts.size()) pick = train_idx.starts.size() - 1;
            batch_loss += multi_step_loss(dyn, ds, train_idx.starts[pick], cfg.window, cfg.gamma, &grad);
        }
        for (auto& g : grad) g /= cfg.batch;
        adam_step(dyn.net, grad, adam, lr);
        last_loss = batch_loss / cfg.batch;
        if (step % stride == 0 || step + 1 == steps) curve.push_back(last_loss);
    }
    DynamicsTrainReport rep;
    rep.final_train_loss = last_loss;
    rep.loss_curve = std::move(curve);
    rep.n_train_windows = train_idx.starts.size();
    rep.n_holdout_windows = holdout_idx.starts.size();
    if (holdout_end > holdout_begin && !holdout_idx.starts.empty())
        rep.holdout_error = open_loop_error(dyn, ds, holdout_begin, holdout_end, cfg.window);
    return rep;
}

}  // namespace detail

inline LearnedDynamics train_dynamics(const Env& env, const TransitionDataset& ds,
                                      const DynamicsTrainConfig& cfg,
                                      DynamicsTrainReport* report = nullptr) {
    require(ds.state_dim == env.spec().state_dim && ds.action_dim == env.spec().action_dim,
            "train_dynamics: dataset dims do not match env");
    std::size_t n_eps = ds.n_episodes();
    std::size_t holdout_eps = static_cast<std::size_t>(std::floor(n_eps * cfg.holdout_fraction));
    std::size_t train_end = n_eps - holdout_eps;
    auto train_idx = detail::index_windows(ds, cfg.window, 0, train_end);
    auto holdout_idx = detail::index_windows(ds, cfg.window, train_end, n_eps);
    std::size_t min_needed = static_cast<std::size_t>(cfg.window) + 1;
    require(!train_idx.starts.empty(),
            "train_dynamics: insufficient data; need at least one episode with >= " +
                std::to_string(min_needed) + " steps after the holdout split");

    LearnedDynamics dyn;
    dyn.codec = StateCodec(env.spec().state_dim, env.spec().periodic_dims);
    dyn.action_dim = env.spec().action_dim;
    dyn.env_hash = ds.env_hash;
    detail::fit_normalization(dyn, ds, 0, train_end);
    std::vector<int> dims;
    dims.push_back(dyn.enc_dim() + dyn.action_dim);
    for (int h : cfg.hidden) dims.push_back(h);
    dims.push_back(dyn.enc_dim());
    dyn.net = Mlp(dims, activation_from_name(cfg.activation));
    RngStream rng = RngStream::derived(cfg.seed, 0x646e7472);  // dynamics-training stream
    dyn.net.init(rng);
    auto rep = detail::run_adam(dyn, ds, train_idx, holdout_idx, cfg, cfg.train_steps, cfg.lr, rng,
                                train_end, n_eps);
    if (report) *report = rep;
    return dyn;
}

// Fine-tune on old ∪ new (or new only). Normalization stays frozen; the env
// hash of the new data must match the model's.
inline DynamicsTrainReport finetune_online(LearnedDynamics& dyn, const TransitionDataset& old_ds,
                                           const TransitionDataset& new_ds,
                                           const DynamicsTrainConfig& cfg) {
    require(dyn.stats_frozen, "finetune_online: model has no frozen normalization");
    require(new_ds.env_hash == dyn.env_hash,
            "finetune_online: dataset env hash " + hash_hex(new_ds.env_hash) +
                " does not match model env hash " + hash_hex(dyn.env_hash));
    TransitionDataset merged;
    if (cfg.new_only) {
        merged = new_ds;
    } else {
        merged = old_ds;
        merged.merge(new_ds);
    }
    std::size_t n_eps = merged.n_episodes();
    auto train_idx = detail::index_windows(merged, cfg.window, 0, n_eps);
    require(!train_idx.starts.empty(),
            "finetune_online: insufficient data; need at least one episode with >= " +
                std::to_string(cfg.window + 1) + " steps");
    detail::WindowIndex no_holdout;
    RngStream rng = RngStream::derived(cfg.seed, 0x66746e65);  // finetune stream
    double lr = cfg.finetune_lr < 0 ? cfg.lr : cfg.finetune_lr;
    return detail::run_adam(dyn, merged, train_idx, no_holdout, cfg, cfg.finetune_steps, lr, rng,
                            0, 0);
}

}  // namespace rmppi
