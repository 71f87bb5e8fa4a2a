#pragma once

// Sampling-based receding-horizon planner with five scoring variants:
//
//   residual  score = sum_t gamma^t (r_R + omega' * log pi(u_t|x_t))
//   greedy    score = sum_t gamma^t  r_R
//   full      score = sum_t gamma^t (omega * r + r_R), zero nominal
//   guided    score = sum_t gamma^t (omega * r + r_R), prior nominal
//   valued    guided + gamma^T * terminal(x_T)
//
// every variant additionally subtracts the undiscounted control coupling
// lambda * u_hat_t' Sigma^-1 eps_t per step. Actions are clamped to env
// bounds before dynamics and reward; log pi sees the unclamped action.
// Weights are exp((S - beta)/lambda) over the retained top scores with
// beta = max retained score; the zero-noise nominal can participate as an
// extra candidate. Invalid (non-finite) rollouts are dropped and the
// weights renormalized; if nothing survives, the nominal is returned
// unchanged and the step is counted as degraded.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "rmppi/core.hpp"
#include "rmppi/dynamics.hpp"
#include "rmppi/env.hpp"
#include "rmppi/prior.hpp"

namespace rmppi {

enum class PlannerVariant { residual, greedy, full, guided, valued };

inline PlannerVariant variant_from_name(const std::string& s) {
    if (s == "residual") return PlannerVariant::residual;
    if (s == "greedy") return PlannerVariant::greedy;
    if (s == "full") return PlannerVariant::full;
    if (s == "guided") return PlannerVariant::guided;
    if (s == "valued") return PlannerVariant::valued;
    throw ValidationError("unknown planner variant '" + s + "'");
}

inline std::string variant_name(PlannerVariant v) {
    switch (v) {
        case PlannerVariant::residual: return "residual";
        case PlannerVariant::greedy: return "greedy";
        case PlannerVariant::full: return "full";
        case PlannerVariant::guided: return "guided";
        case PlannerVariant::valued: return "valued";
    }
    throw ValidationError("bad planner variant");
}

struct PlannerConfig {
    PlannerVariant variant = PlannerVariant::residual;
    int samples = 256;  // K
    int horizon = 8;    // T
    Vec noise_std;      // per action dim
    double lambda = 1.0;
    double gamma = 1.0;
    double omega_prime = 1.0;
    double top_ratio = 1.0;
    bool include_nominal = true;

    void validate(int action_dim) const {
        require(samples >= 1, "planner: samples must be >= 1");
        require(horizon >= 1, "planner: horizon must be >= 1");
        require(static_cast<int>(noise_std.size()) == action_dim,
                "planner: noise_std must have one entry per action dim");
        for (double s : noise_std)
            require(std::isfinite(s) && s > 0, "planner: noise_std entries must be finite and > 0");
        require(std::isfinite(lambda) && lambda > 0, "planner: lambda must be > 0");
        require(std::isfinite(gamma) && gamma > 0 && gamma <= 1, "planner: gamma must be in (0,1]");
        require(std::isfinite(omega_prime) && omega_prime >= 0, "planner: omega_prime must be >= 0");
        require(top_ratio > 0 && top_ratio <= 1, "planner: top_ratio must be in (0,1]");
    }
};

// Dynamics used inside rollouts: either the true env or a learned model.
class PlanningModel {
public:
    virtual ~PlanningModel() = default;
    virtual State step(const State& x, const Action& u) const = 0;
};

class TrueDynamicsModel : public PlanningModel {
public:
    explicit TrueDynamicsModel(const Env& env) : env_(&env) {}
    State step(const State& x, const Action& u) const override { return env_->step(x, u); }

private:
    const Env* env_;
};

class LearnedDynamicsModel : public PlanningModel {
public:
    explicit LearnedDynamicsModel(const LearnedDynamics& dyn) : dyn_(&dyn) {}
    State step(const State& x, const Action& u) const override { return dyn_->predict(x, u); }

private:
    const LearnedDynamics* dyn_;
};

using ActionSequence = std::vector<Action>;  // horizon entries
using TerminalEstimator = std::function<double(const State&)>;

// Noise block for one plan() call: samples x horizon x action_dim, drawn in
// one deterministic pass.
struct NoiseBlock {
    int samples = 0;
    int horizon = 0;
    int action_dim = 0;
    Vec data;

    double at(int k, int t, int d) const {
        return data[(static_cast<std::size_t>(k) * horizon + t) * action_dim + d];
    }
};

inline NoiseBlock sample_noise(RngStream& rng, int samples, int horizon, const Vec& noise_std) {
    NoiseBlock nb;
    nb.samples = samples;
    nb.horizon = horizon;
    nb.action_dim = static_cast<int>(noise_std.size());
    nb.data.resize(static_cast<std::size_t>(samples) * horizon * nb.action_dim);
    std::size_t i = 0;
    for (int k = 0; k < samples; ++k)
        for (int t = 0; t < horizon; ++t)
            for (int d = 0; d < nb.action_dim; ++d) nb.data[i++] = noise_std[d] * rng.normal();
    return nb;
}

// Open-loop prior-mode rollout on the planning model.
inline ActionSequence init_nominal(const PriorPolicy& prior, const PlanningModel& model,
                                   const State& x0, int horizon) {
    ActionSequence seq;
    seq.reserve(horizon);
    State x = x0;
    for (int t = 0; t < horizon; ++t) {
        Action u = prior.mode(x);
        seq.push_back(u);
        x = model.step(x, u);
    }
    return seq;
}

struct ScoredRollout {
    double score = 0.0;
    bool valid = true;
};

// One candidate: nominal plus this sample's noise rows (pass nullptr noise
// for the zero-noise nominal candidate).
inline ScoredRollout score_rollout(const PlannerConfig& cfg, const PriorPolicy& prior,
                                   const PlanningModel& model, const Env& env, const State& x0,
                                   const ActionSequence& nominal, const NoiseBlock* noise, int k,
                                   const TerminalEstimator& terminal) {
    ScoredRollout out;
    State x = x0;
    double score = 0.0;
    double g = 1.0;
    const int m = env.spec().action_dim;
    for (int t = 0; t < cfg.horizon; ++t) {
        Action u_raw = nominal[t];
        double coupling = 0.0;
        if (noise) {
            for (int d = 0; d < m; ++d) {
                double eps = noise->at(k, t, d);
                u_raw[d] += eps;
                coupling += nominal[t][d] * eps / (cfg.noise_std[d] * cfg.noise_std[d]);
            }
        }
        Action u = env.clamp_action(u_raw);
        double term = 0.0;
        switch (cfg.variant) {
            case PlannerVariant::residual:
                term = env.addon_reward(x, u) + cfg.omega_prime * prior.log_prob(x, u_raw);
                break;
            case PlannerVariant::greedy:
                term = env.addon_reward(x, u);
                break;
            case PlannerVariant::full:
            case PlannerVariant::guided:
            case PlannerVariant::valued:
                term = env.spec().omega * env.basic_reward(x, u) + env.addon_reward(x, u);
                break;
        }
        score += g * term - cfg.lambda * coupling;
        g *= cfg.gamma;
        x = model.step(x, u);
        if (!all_finite(x) || !std::isfinite(score)) {
            out.valid = false;
            out.score = -std::numeric_limits<double>::infinity();
            return out;
        }
    }
    if (cfg.variant == PlannerVariant::valued && terminal) {
        // g is gamma^horizon here
        score += g * terminal(x);
    }
    if (!std::isfinite(score)) {
        out.valid = false;
        out.score = -std::numeric_limits<double>::infinity();
        return out;
    }
    out.score = score;
    return out;
}

struct WeightVector {
    Vec weights;  // one per candidate; zero for dropped or invalid ones
    double beta = 0.0;
    double eta = 0.0;
    int retained = 0;
    int invalid = 0;
    bool degraded = false;
};

// Retain the top ceil(top_ratio * n) valid candidates by score (ties keep the
// lowest index), subtract beta = retained max, exponentiate, normalize.
inline WeightVector compute_weights(const std::vector<ScoredRollout>& rollouts, double lambda,
                                    double top_ratio) {
    require(!rollouts.empty(), "compute_weights: no candidates");
    const int n = static_cast<int>(rollouts.size());
    WeightVector wv;
    wv.weights.assign(n, 0.0);
    std::vector<int> valid_idx;
    valid_idx.reserve(n);
    for (int i = 0; i < n; ++i) {
        if (rollouts[i].valid)
            valid_idx.push_back(i);
        else
            ++wv.invalid;
    }
    if (valid_idx.empty()) {
        wv.degraded = true;
        return wv;
    }
    int keep = static_cast<int>(std::ceil(top_ratio * n));
    keep = std::min(keep, static_cast<int>(valid_idx.size()));
    keep = std::max(keep, 1);
    // stable sort by descending score keeps the lowest index on ties
    std::stable_sort(valid_idx.begin(), valid_idx.end(), [&](int a, int b) {
        return rollouts[a].score > rollouts[b].score;
    });
    valid_idx.resize(keep);
    wv.retained = keep;
    wv.beta = rollouts[valid_idx.front()].score;
    double eta = 0.0;
    for (int i : valid_idx) {
        double w = std::exp((rollouts[i].score - wv.beta) / lambda);
        wv.weights[i] = w;
        eta += w;
    }
    wv.eta = eta;
    for (int i : valid_idx) wv.weights[i] /= eta;
    return wv;
}

inline ActionSequence update_sequence(const ActionSequence& nominal, const NoiseBlock& noise,
                                      const WeightVector& wv) {
    ActionSequence out = nominal;
    for (int k = 0; k < noise.samples; ++k) {
        double w = wv.weights[k];
        if (w == 0.0) continue;
        for (int t = 0; t < noise.horizon; ++t)
            for (int d = 0; d < noise.action_dim; ++d) out[t][d] += w * noise.at(k, t, d);
    }
    return out;
}

struct PlanDiagnostics {
    double best_score = 0.0;
    double ess = 0.0;  // effective sample size 1 / sum w^2
    int retained = 0;
    int invalid = 0;
    bool degraded = false;
};

struct PlanResult {
    ActionSequence sequence;
    PlanDiagnostics diag;
};

class Planner {
public:
    Planner(PlannerConfig cfg, const Env& env, std::shared_ptr<const PriorPolicy> prior,
            std::shared_ptr<const PlanningModel> model, std::uint64_t seed,
            TerminalEstimator terminal = nullptr)
        : cfg_(cfg),
          env_(&env),
          prior_(std::move(prior)),
          model_(std::move(model)),
          terminal_(std::move(terminal)),
          rng_(seed) {
        cfg_.validate(env.spec().action_dim);
        require(prior_ != nullptr, "planner: prior is required");
        require(model_ != nullptr, "planner: planning model is required");
        require(prior_->action_dim() == env.spec().action_dim,
                "planner: prior action dim does not match env");
    }

    const PlannerConfig& config() const { return cfg_; }
    RngStream& rng() { return rng_; }
    long long degraded_steps() const { return degraded_steps_; }

    PlanResult plan(const State& x0) {
        require(static_cast<int>(x0.size()) == env_->spec().state_dim, "plan: state dim mismatch");
        require(all_finite(x0), "plan: non-finite initial state");
        const int m = env_->spec().action_dim;
        ActionSequence nominal;
        if (cfg_.variant == PlannerVariant::full)
            nominal.assign(cfg_.horizon, Action(m, 0.0));
        else
            nominal = init_nominal(*prior_, *model_, x0, cfg_.horizon);

        NoiseBlock noise = sample_noise(rng_, cfg_.samples, cfg_.horizon, cfg_.noise_std);

        std::vector<ScoredRollout> rollouts;
        rollouts.reserve(cfg_.samples + 1);
        for (int k = 0; k < cfg_.samples; ++k)
            rollouts.push_back(
                score_rollout(cfg_, *prior_, *model_, *env_, x0, nominal, &noise, k, terminal_));
        if (cfg_.include_nominal)
            rollouts.push_back(
                score_rollout(cfg_, *prior_, *model_, *env_, x0, nominal, nullptr, 0, terminal_));

        WeightVector wv = compute_weights(rollouts, cfg_.lambda, cfg_.top_ratio);
        PlanResult res;
        res.diag.retained = wv.retained;
        res.diag.invalid = wv.invalid;
        res.diag.degraded = wv.degraded;
        if (wv.degraded) {
            ++degraded_steps_;
            res.sequence = nominal;
            return res;
        }
        res.diag.best_score = wv.beta;
        double sq = 0.0;
        for (double w : wv.weights) sq += w * w;
        res.diag.ess = sq > 0 ? 1.0 / sq : 0.0;
        res.sequence = update_sequence(nominal, noise, wv);
        return res;
    }

private:
    PlannerConfig cfg_;
    const Env* env_;
    std::shared_ptr<const PriorPolicy> prior_;
    std::shared_ptr<const PlanningModel> model_;
    TerminalEstimator terminal_;
    RngStream rng_;
    long long degraded_steps_ = 0;
};

}  // namespace rmppi
