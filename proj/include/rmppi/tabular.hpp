#pragma once

// Grid discretization and soft (max-entropy) Q iteration on deterministic
// discrete MDPs. Finite-horizon solves keep the whole per-step stack so
// horizon-to-go quantities stay exactly consistent; infinite-horizon solves
// iterate a discounted soft Bellman backup to a sup-norm fixed point.
//
// Conventions: cell probabilities are masses P(u|x) = exp((Q-V)/alpha) * vol
// with V = alpha * log(sum_u exp(Q/alpha) * vol); log *densities* are
// (Q - V)/alpha. Volumes are uniform across actions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rmppi/core.hpp"

namespace rmppi {

constexpr std::size_t kEnumerationGuard = 1000000;

struct GridAxis {
    double lo = 0;
    double hi = 1;
    int n = 1;
    bool periodic = false;

    double width() const {
        if (periodic) return (hi - lo) / n;
        if (n <= 1) return 1.0;
        return (hi - lo) / (n - 1);
    }

    double center(int i) const { return lo + i * width(); }

    // Snap with symmetric rounding; returns -1 when a non-periodic value
    // falls outside the box (beyond half a cell past the end centers).
    int snap(double x) const {
        double w = width();
        if (periodic) {
            double rel = wrap_to(x - lo, hi - lo);
            int i = static_cast<int>(std::floor(rel / w + 0.5));
            return ((i % n) + n) % n;
        }
        if (n == 1) return 0;
        double rel = (x - lo) / w;
        double r = std::floor(std::fabs(rel) + 0.5);  // round half away from zero
        int i = static_cast<int>(rel < 0 ? -r : r);
        if (i < 0 || i >= n) return -1;
        return i;
    }

private:
    static double wrap_to(double x, double period) {
        x = std::fmod(x, period);
        if (x < 0) x += period;
        return x;
    }
};

struct Grid {
    std::vector<GridAxis> axes;

    int size() const {
        long long n = 1;
        for (const auto& a : axes) n *= a.n;
        require(n > 0 && static_cast<std::size_t>(n) <= kEnumerationGuard,
                "grid size " + std::to_string(n) + " exceeds enumeration guard");
        return static_cast<int>(n);
    }

    // Row-major flat index; -1 if any axis escaped its box.
    int snap(const Vec& x) const {
        require(x.size() == axes.size(), "grid snap: dimension mismatch");
        int idx = 0;
        for (std::size_t d = 0; d < axes.size(); ++d) {
            int i = axes[d].snap(x[d]);
            if (i < 0) return -1;
            idx = idx * axes[d].n + i;
        }
        return idx;
    }

    Vec center(int flat) const {
        Vec x(axes.size());
        for (int d = static_cast<int>(axes.size()) - 1; d >= 0; --d) {
            x[d] = axes[d].center(flat % axes[d].n);
            flat /= axes[d].n;
        }
        return x;
    }

    double cell_volume() const {
        double v = 1.0;
        for (const auto& a : axes) v *= a.width();
        return v;
    }
};

// Deterministic discrete MDP. next[s*n_actions+a] is the successor state,
// reward is the per-(s,a) basic reward. Add-on tables travel separately.
struct DiscreteMDP {
    int n_states = 0;
    int n_actions = 0;
    std::vector<int> next;
    Vec reward;
    double action_cell_volume = 1.0;

    int at(int s, int a) const { return next[static_cast<std::size_t>(s) * n_actions + a]; }
    double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * n_actions + a]; }

    void validate() const {
        require(n_states > 0 && n_actions > 0, "mdp: empty state or action set");
        std::size_t n = static_cast<std::size_t>(n_states) * n_actions;
        require(n <= kEnumerationGuard, "mdp: table exceeds enumeration guard");
        require(next.size() == n && reward.size() == n, "mdp: table sizes do not match dims");
        require(action_cell_volume > 0, "mdp: action cell volume must be positive");
        for (int v : next)
            require(v >= 0 && v < n_states, "mdp: transition index out of range");
        for (double x : reward)
            require(std::isfinite(x), "mdp: non-finite reward entry");
    }
};

// Solution of a soft Q iteration. Finite-horizon solves store one level per
// steps-to-go h = 1..H plus v_levels[0] = 0; infinite solves store a single
// converged level. q()/v()/z() expose the full-horizon (or converged) tables.
struct TabularSolution {
    double alpha = 1.0;
    double gamma = 1.0;
    int horizon = -1;  // -1 = infinite
    double action_cell_volume = 1.0;
    int n_states = 0;
    int n_actions = 0;
    std::vector<Vec> q_levels;  // q_levels[h-1] is Q with h steps to go
    std::vector<Vec> v_levels;  // v_levels[h] is V with h steps to go (finite)
    std::vector<Vec> z_levels;
    int iterations = 0;
    double final_residual = 0.0;

    const Vec& q() const { return q_levels.back(); }
    const Vec& v() const { return v_levels.back(); }
    const Vec& z() const { return z_levels.back(); }

    int levels() const { return static_cast<int>(q_levels.size()); }

    double q_at(int level, int s, int a) const {
        return q_levels[level - 1][static_cast<std::size_t>(s) * n_actions + a];
    }

    // h steps to go; h = 0 is the exhausted-horizon zero value (finite only).
    double v_togo(int h, int s) const {
        if (horizon < 0) return v_levels[0][s];
        return v_levels[h][s];
    }

    // Probability mass of each action cell at `s` for the given steps-to-go.
    Vec policy_row(int level, int s) const {
        Vec p(n_actions);
        const Vec& Q = q_levels[level - 1];
        double V = horizon < 0 ? v_levels[0][s] : v_levels[level][s];
        for (int a = 0; a < n_actions; ++a)
            p[a] = std::exp((Q[static_cast<std::size_t>(s) * n_actions + a] - V) / alpha) *
                   action_cell_volume;
        return p;
    }

    double log_density(int level, int s, int a) const {
        double V = horizon < 0 ? v_levels[0][s] : v_levels[level][s];
        return (q_at(level, s, a) - V) / alpha;
    }

    int argmax_row(int level, int s) const {
        const Vec& Q = q_levels[level - 1];
        int best = 0;
        double bv = Q[static_cast<std::size_t>(s) * n_actions];
        for (int a = 1; a < n_actions; ++a) {
            double v = Q[static_cast<std::size_t>(s) * n_actions + a];
            if (v > bv) {  // strict: ties keep the lowest action index
                bv = v;
                best = a;
            }
        }
        return best;
    }
};

namespace detail {

// V(s) = alpha * log( sum_a exp(Q(s,a)/alpha) * vol ), stabilized.
inline void soft_values(const Vec& q, int n_states, int n_actions, double alpha, double vol,
                        Vec& v_out, Vec& z_out) {
    v_out.resize(n_states);
    z_out.resize(n_states);
    for (int s = 0; s < n_states; ++s) {
        const double* row = q.data() + static_cast<std::size_t>(s) * n_actions;
        double m = row[0];
        for (int a = 1; a < n_actions; ++a) m = std::max(m, row[a]);
        double acc = 0.0;
        for (int a = 0; a < n_actions; ++a) acc += std::exp((row[a] - m) / alpha);
        double v = m + alpha * (std::log(acc) + std::log(vol));
        if (!std::isfinite(v)) throw NumericError("soft value iteration produced a non-finite value");
        v_out[s] = v;
        z_out[s] = std::exp(v / alpha);
    }
}

}  // namespace detail

// Finite horizon: exact backups, optionally with a different reward table per
// level (level h = h steps to go); used by the residual-equivalence check
// where the augmented reward depends on the prior's per-level policy.
// Infinite horizon (horizon = -1): discounted iteration to sup-norm 1e-10.
inline TabularSolution soft_q_iteration(
    const DiscreteMDP& mdp, double alpha, int horizon, double gamma,
    const std::function<const Vec&(int level)>* per_level_reward = nullptr) {
    mdp.validate();
    require(alpha > 0, "soft_q_iteration: alpha must be positive");
    require(std::isfinite(gamma) && gamma > 0 && gamma <= 1, "soft_q_iteration: gamma must be in (0,1]");
    TabularSolution sol;
    sol.alpha = alpha;
    sol.gamma = gamma;
    sol.horizon = horizon;
    sol.action_cell_volume = mdp.action_cell_volume;
    sol.n_states = mdp.n_states;
    sol.n_actions = mdp.n_actions;
    std::size_t n = static_cast<std::size_t>(mdp.n_states) * mdp.n_actions;

    if (horizon >= 0) {
        require(horizon >= 1, "soft_q_iteration: finite horizon must be >= 1");
        sol.v_levels.push_back(Vec(mdp.n_states, 0.0));
        sol.z_levels.push_back(Vec(mdp.n_states, 1.0));
        for (int h = 1; h <= horizon; ++h) {
            const Vec& r = per_level_reward ? (*per_level_reward)(h) : mdp.reward;
            require(r.size() == n, "soft_q_iteration: per-level reward table size mismatch");
            Vec q(n);
            const Vec& v_prev = sol.v_levels.back();
            for (int s = 0; s < mdp.n_states; ++s)
                for (int a = 0; a < mdp.n_actions; ++a) {
                    std::size_t i = static_cast<std::size_t>(s) * mdp.n_actions + a;
                    q[i] = r[i] + gamma * v_prev[mdp.at(s, a)];
                }
            Vec v, z;
            detail::soft_values(q, mdp.n_states, mdp.n_actions, alpha, mdp.action_cell_volume, v, z);
            sol.q_levels.push_back(std::move(q));
            sol.v_levels.push_back(std::move(v));
            sol.z_levels.push_back(std::move(z));
        }
        sol.iterations = horizon;
        return sol;
    }

    require(gamma < 1, "soft_q_iteration: infinite horizon requires gamma < 1");
    require(per_level_reward == nullptr, "soft_q_iteration: per-level rewards need a finite horizon");
    constexpr double kTol = 1e-10;
    constexpr int kMaxIter = 200000;
    Vec q(n, 0.0), v(mdp.n_states, 0.0), z;
    double residual = 0.0;
    int it = 0;
    for (; it < kMaxIter; ++it) {
        detail::soft_values(q, mdp.n_states, mdp.n_actions, alpha, mdp.action_cell_volume, v, z);
        residual = 0.0;
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a) {
                std::size_t i = static_cast<std::size_t>(s) * mdp.n_actions + a;
                double nq = mdp.reward[i] + gamma * v[mdp.at(s, a)];
                residual = std::max(residual, std::fabs(nq - q[i]));
                q[i] = nq;
            }
        if (residual < kTol) break;
    }
    if (residual >= kTol)
        throw NumericError("soft_q_iteration did not converge: residual " + fmt_sci(residual, 3) +
                           " after " + std::to_string(it) + " iterations");
    detail::soft_values(q, mdp.n_states, mdp.n_actions, alpha, mdp.action_cell_volume, v, z);
    sol.q_levels.push_back(std::move(q));
    sol.v_levels.push_back(std::move(v));
    sol.z_levels.push_back(std::move(z));
    sol.iterations = it + 1;
    return sol;
}

}  // namespace rmppi
