#pragma once

// Prior policies the planner customizes against. Three shapes:
//   GaussianPolicy     diagonal Gaussian around a mean function (feedback
//                      laws, loaded network heads, smoothed tabular means)
//   TabularSoftPolicy  Boltzmann policy over a grid solution; log-prob is the
//                      cell probability *density* (mass / cell volume)
// tabular_to_continuous wraps a tabular policy into a Gaussian whose mean is
// the probability-weighted cell-center action.

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "rmppi/array_file.hpp"
#include "rmppi/core.hpp"
#include "rmppi/env.hpp"
#include "rmppi/nn.hpp"
#include "rmppi/tabular.hpp"

namespace rmppi {

class PriorPolicy {
public:
    virtual ~PriorPolicy() = default;
    virtual int action_dim() const = 0;
    virtual Action mode(const State& x) const = 0;
    virtual double log_prob(const State& x, const Action& u) const = 0;
    virtual Action sample(const State& x, RngStream& rng) const = 0;
};

enum class PriorBacking { linear_feedback, mlp_loaded, tabular_interpolated, pursuit_feedback };

class GaussianPolicy : public PriorPolicy {
public:
    using MeanFn = std::function<Action(const State&)>;

    GaussianPolicy(MeanFn mean_fn, Vec std_dev, PriorBacking backing)
        : mean_fn_(std::move(mean_fn)), std_(std::move(std_dev)), backing_(backing) {
        require(static_cast<bool>(mean_fn_), "gaussian policy: mean function is empty");
        require(!std_.empty(), "gaussian policy: std vector is empty");
        for (double s : std_)
            require(std::isfinite(s) && s > 0, "gaussian policy: std must be finite and > 0");
        log_norm_ = 0.0;
        for (double s : std_) log_norm_ += -0.5 * std::log(2.0 * M_PI * s * s);
    }

    PriorBacking backing() const { return backing_; }
    const Vec& std_dev() const { return std_; }
    int action_dim() const override { return static_cast<int>(std_.size()); }

    Action mode(const State& x) const override {
        Action m = mean_fn_(x);
        require(m.size() == std_.size(), "gaussian policy: mean function dim mismatch");
        return m;
    }

    double log_prob(const State& x, const Action& u) const override {
        require(u.size() == std_.size(), "gaussian policy: action dim mismatch");
        Action m = mode(x);
        double lp = log_norm_;
        for (std::size_t i = 0; i < std_.size(); ++i) {
            double z = (u[i] - m[i]) / std_[i];
            lp -= 0.5 * z * z;
        }
        return lp;
    }

    Action sample(const State& x, RngStream& rng) const override {
        Action m = mode(x);
        for (std::size_t i = 0; i < std_.size(); ++i) m[i] += std_[i] * rng.normal();
        return m;
    }

private:
    MeanFn mean_fn_;
    Vec std_;
    PriorBacking backing_;
    double log_norm_;
};

// Boltzmann policy over the top level of a tabular solution. State lookups
// snap to the nearest cell; out-of-box states clamp to the boundary and bump
// a counter instead of failing (planners probe slightly outside the grid).
class TabularSoftPolicy : public PriorPolicy {
public:
    TabularSoftPolicy(Grid state_grid, Grid action_grid, TabularSolution sol)
        : state_grid_(std::move(state_grid)),
          action_grid_(std::move(action_grid)),
          sol_(std::move(sol)) {
        require(state_grid_.size() == sol_.n_states, "tabular policy: state grid size mismatch");
        require(action_grid_.size() == sol_.n_actions, "tabular policy: action grid size mismatch");
    }

    const Grid& state_grid() const { return state_grid_; }
    const Grid& action_grid() const { return action_grid_; }
    const TabularSolution& solution() const { return sol_; }
    long long boundary_clamps() const { return boundary_clamps_; }

    int action_dim() const override { return static_cast<int>(action_grid_.axes.size()); }

    int state_cell(const State& x) const {
        return snap_clamped(state_grid_, x);
    }

    Action mode(const State& x) const override {
        int s = state_cell(x);
        return action_grid_.center(sol_.argmax_row(sol_.levels(), s));
    }

    // Log density of the action's cell: (Q - V)/alpha.
    double log_prob(const State& x, const Action& u) const override {
        int s = state_cell(x);
        int a = snap_clamped(action_grid_, u);
        return sol_.log_density(sol_.levels(), s, a);
    }

    Action sample(const State& x, RngStream& rng) const override {
        int s = state_cell(x);
        Vec p = sol_.policy_row(sol_.levels(), s);
        double r = rng.uniform01();
        double acc = 0.0;
        int pick = sol_.n_actions - 1;
        for (int a = 0; a < sol_.n_actions; ++a) {
            acc += p[a];
            if (r <= acc) {
                pick = a;
                break;
            }
        }
        return action_grid_.center(pick);
    }

    // Probability-weighted mean of action-cell centers at x's cell.
    Action soft_mean(const State& x) const {
        int s = state_cell(x);
        Vec p = sol_.policy_row(sol_.levels(), s);
        Action mean(action_grid_.axes.size(), 0.0);
        for (int a = 0; a < sol_.n_actions; ++a) {
            Vec c = action_grid_.center(a);
            for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += p[a] * c[d];
        }
        return mean;
    }

    void save(const std::string& path) const {
        ArrayFile f;
        f.add_scalar("alpha", sol_.alpha);
        f.add_scalar("gamma", sol_.gamma);
        f.add_scalar("horizon", static_cast<double>(sol_.horizon));
        f.add_scalar("action_cell_volume", sol_.action_cell_volume);
        f.add("q", {static_cast<std::uint64_t>(sol_.n_states), static_cast<std::uint64_t>(sol_.n_actions)},
              sol_.q());
        f.add("v", {static_cast<std::uint64_t>(sol_.n_states)}, sol_.v());
        f.add("z", {static_cast<std::uint64_t>(sol_.n_states)}, sol_.z());
        f.add("state_grid", grid_dims(state_grid_), grid_data(state_grid_));
        f.add("action_grid", grid_dims(action_grid_), grid_data(action_grid_));
        f.save(path);
    }

    static TabularSoftPolicy load(const std::string& path) {
        ArrayFile f = ArrayFile::load(path);
        Grid sg = grid_from(f.get("state_grid"), path);
        Grid ag = grid_from(f.get("action_grid"), path);
        TabularSolution sol;
        sol.alpha = f.scalar("alpha");
        sol.gamma = f.scalar("gamma");
        sol.action_cell_volume = f.scalar("action_cell_volume");
        sol.n_states = sg.size();
        sol.n_actions = ag.size();
        const auto& qe = f.get("q");
        if (qe.dims != std::vector<std::uint64_t>{static_cast<std::uint64_t>(sol.n_states),
                                                  static_cast<std::uint64_t>(sol.n_actions)})
            throw IoError("'" + path + "': q table shape does not match grids");
        sol.q_levels.push_back(qe.data);
        sol.v_levels.push_back(f.get("v").data);
        sol.z_levels.push_back(f.get("z").data);
        if (sol.v_levels[0].size() != static_cast<std::size_t>(sol.n_states) ||
            sol.z_levels[0].size() != static_cast<std::size_t>(sol.n_states))
            throw IoError("'" + path + "': v/z length does not match state grid");
        sol.horizon = -1;  // persisted policies act stationary regardless of provenance
        return TabularSoftPolicy(std::move(sg), std::move(ag), std::move(sol));
    }

private:
    int snap_clamped(const Grid& g, const Vec& x) const {
        require(x.size() == g.axes.size(), "tabular policy: lookup dim mismatch");
        int idx = 0;
        for (std::size_t d = 0; d < g.axes.size(); ++d) {
            const GridAxis& ax = g.axes[d];
            int i = ax.snap(x[d]);
            if (i < 0) {
                ++boundary_clamps_;
                i = x[d] < ax.lo ? 0 : ax.n - 1;
            }
            idx = idx * ax.n + i;
        }
        return idx;
    }

    static std::vector<std::uint64_t> grid_dims(const Grid& g) {
        return {static_cast<std::uint64_t>(g.axes.size()), 4};
    }

    static Vec grid_data(const Grid& g) {
        Vec d;
        for (const auto& a : g.axes) {
            d.push_back(a.lo);
            d.push_back(a.hi);
            d.push_back(static_cast<double>(a.n));
            d.push_back(a.periodic ? 1.0 : 0.0);
        }
        return d;
    }

    static Grid grid_from(const ArrayEntry& e, const std::string& path) {
        if (e.dims.size() != 2 || e.dims[1] != 4)
            throw IoError("'" + path + "': malformed grid entry '" + e.name + "'");
        Grid g;
        for (std::uint64_t i = 0; i < e.dims[0]; ++i) {
            GridAxis a;
            a.lo = e.data[i * 4 + 0];
            a.hi = e.data[i * 4 + 1];
            a.n = static_cast<int>(e.data[i * 4 + 2]);
            a.periodic = e.data[i * 4 + 3] != 0.0;
            if (a.n < 1 || a.hi < a.lo) throw IoError("'" + path + "': bad grid axis");
            g.axes.push_back(a);
        }
        return g;
    }

    Grid state_grid_;
    Grid action_grid_;
    TabularSolution sol_;
    mutable long long boundary_clamps_ = 0;
};

inline std::shared_ptr<GaussianPolicy> make_gaussian_prior(GaussianPolicy::MeanFn mean_fn,
                                                           Vec std_dev,
                                                           PriorBacking backing) {
    return std::make_shared<GaussianPolicy>(std::move(mean_fn), std::move(std_dev), backing);
}

// Linear feedback mean: u = offset + M x.
inline std::shared_ptr<GaussianPolicy> make_linear_feedback_prior(std::vector<Vec> matrix,
                                                                  Vec offset, Vec std_dev) {
    require(matrix.size() == offset.size() && offset.size() == std_dev.size(),
            "linear feedback prior: matrix/offset/std row mismatch");
    auto mean = [matrix = std::move(matrix), offset](const State& x) {
        Action u(offset);
        for (std::size_t i = 0; i < u.size(); ++i) {
            require(matrix[i].size() == x.size(), "linear feedback prior: state dim mismatch");
            for (std::size_t j = 0; j < x.size(); ++j) u[i] += matrix[i][j] * x[j];
        }
        return u;
    };
    return make_gaussian_prior(std::move(mean), std::move(std_dev), PriorBacking::linear_feedback);
}

inline std::shared_ptr<GaussianPolicy> tabular_to_continuous(std::shared_ptr<TabularSoftPolicy> tab,
                                                             Vec smoothing_sigma) {
    require(static_cast<int>(smoothing_sigma.size()) == tab->action_dim(),
            "tabular_to_continuous: sigma dim mismatch");
    auto mean = [tab](const State& x) { return tab->soft_mean(x); };
    return make_gaussian_prior(std::move(mean), std::move(smoothing_sigma),
                               PriorBacking::tabular_interpolated);
}

// Network-backed Gaussian head: file holds an Mlp mapping state -> mean plus
// a fixed per-dim log_std vector.
inline void save_mlp_prior(const std::string& path, const Mlp& net, const Vec& log_std) {
    require(static_cast<std::size_t>(net.output_dim()) == log_std.size(),
            "mlp prior: log_std dim must match network output");
    ArrayFile f;
    net.save(f);
    f.add("log_std", {log_std.size()}, log_std);
    f.save(path);
}

inline std::shared_ptr<GaussianPolicy> load_mlp_prior(const std::string& path) {
    ArrayFile f = ArrayFile::load(path);
    auto net = std::make_shared<Mlp>(Mlp::load(f));
    const auto& ls = f.get("log_std");
    Vec std_dev;
    for (double v : ls.data) std_dev.push_back(std::exp(v));
    auto mean = [net](const State& x) { return net->forward(x); };
    return make_gaussian_prior(std::move(mean), std::move(std_dev), PriorBacking::mlp_loaded);
}

// Pure-pursuit steering toward a fixed-lookahead point on the centerline plus
// P-control on speed. A long lookahead cuts corners, which is exactly the
// misbehavior the car customization fixture wants from its prior.
inline std::shared_ptr<GaussianPolicy> make_pursuit_prior(std::shared_ptr<const CarTrack> track,
                                                          double lookahead, double target_speed,
                                                          double wheelbase, Vec std_dev) {
    require(lookahead > 0, "pursuit prior: lookahead must be > 0");
    require(target_speed > 0, "pursuit prior: target_speed must be > 0");
    auto mean = [track, lookahead, target_speed, wheelbase](const State& x) {
        require(x.size() == 4, "pursuit prior: car state expected");
        TrackQuery q = track->project(x[0], x[1]);
        double s_ahead = std::fmod(q.s + lookahead, track->total_length());
        // locate the centerline point at arc position s_ahead
        const auto& pts = track->points();
        double acc = 0.0;
        double gx = pts[0].x, gy = pts[0].y;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto& a = pts[i];
            const auto& b = pts[(i + 1) % pts.size()];
            double len = std::hypot(b.x - a.x, b.y - a.y);
            if (s_ahead <= acc + len) {
                double t = (s_ahead - acc) / len;
                gx = a.x + t * (b.x - a.x);
                gy = a.y + t * (b.y - a.y);
                break;
            }
            acc += len;
        }
        double dx = gx - x[0], dy = gy - x[1];
        double heading_err = wrap_angle(std::atan2(dy, dx) - x[2]);
        double dist = std::max(std::hypot(dx, dy), 1e-6);
        // pure pursuit curvature: kappa = 2 sin(err) / dist
        double steer = std::atan(wheelbase * 2.0 * std::sin(heading_err) / dist);
        double accel = 1.5 * (target_speed - x[3]);
        return Action{steer, accel};
    };
    return make_gaussian_prior(std::move(mean), std::move(std_dev), PriorBacking::pursuit_feedback);
}

}  // namespace rmppi
