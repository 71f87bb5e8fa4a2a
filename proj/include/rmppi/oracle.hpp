#pragma once

// Ground-truth machinery on small deterministic MDPs. Three independent
// views of the same max-entropy optimum are cross-checked:
//
//   1. the T-step sequence distribution proportional to
//      exp((sum of rewards + terminal soft value)/alpha), normalized by
//      explicit enumeration,
//   2. the product of per-step Boltzmann policies along the deterministic
//      state trace (finite-horizon solves chain the horizon-to-go policy),
//   3. solving the customization task directly on the full reward
//      omega*r + r_R versus solving the augmented reward
//      omega'*log pi_prior + r_R; at omega' = alpha the per-step policies
//      must coincide.
//
// Everything here is enumeration-guarded and exact up to float rounding.

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rmppi/core.hpp"
#include "rmppi/env.hpp"
#include "rmppi/tabular.hpp"

namespace rmppi {

// Env snapped onto grids: cell-center dynamics, cell-center rewards, plus the
// add-on table kept alongside the basic one.
struct EnvMdp {
    DiscreteMDP mdp;
    Vec addon;
    Grid state_grid;
    Grid action_grid;
};

inline EnvMdp discretize_env(const Env& env, Grid state_grid, Grid action_grid) {
    require(static_cast<int>(state_grid.axes.size()) == env.spec().state_dim,
            "discretize_env: state grid dims do not match env");
    require(static_cast<int>(action_grid.axes.size()) == env.spec().action_dim,
            "discretize_env: action grid dims do not match env");
    int ns = state_grid.size();
    int na = action_grid.size();
    require(static_cast<std::size_t>(ns) * na <= kEnumerationGuard,
            "discretize_env: grid product exceeds enumeration guard");
    EnvMdp out;
    out.mdp.n_states = ns;
    out.mdp.n_actions = na;
    out.mdp.next.resize(static_cast<std::size_t>(ns) * na);
    out.mdp.reward.resize(static_cast<std::size_t>(ns) * na);
    out.addon.resize(static_cast<std::size_t>(ns) * na);
    out.mdp.action_cell_volume = action_grid.cell_volume();
    std::vector<std::string> escapes;
    for (int s = 0; s < ns; ++s) {
        State x = state_grid.center(s);
        for (int a = 0; a < na; ++a) {
            Action u = action_grid.center(a);
            State nx = env.step(x, u);
            int si = state_grid.snap(nx);
            std::size_t i = static_cast<std::size_t>(s) * na + a;
            if (si < 0) {
                if (escapes.size() < 8)
                    escapes.push_back("(state " + std::to_string(s) + ", action " + std::to_string(a) + ")");
                si = 0;
            }
            out.mdp.next[i] = si;
            out.mdp.reward[i] = env.basic_reward(x, u);
            out.addon[i] = env.addon_reward(x, u);
        }
    }
    if (!escapes.empty()) {
        std::string msg = "discretize_env: dynamics escape the grid box at";
        for (const auto& e : escapes) msg += " " + e;
        throw ValidationError(msg);
    }
    out.state_grid = std::move(state_grid);
    out.action_grid = std::move(action_grid);
    return out;
}

inline double total_variation(const Vec& p, const Vec& q) {
    require(p.size() == q.size(), "total_variation: length mismatch");
    double tv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) tv += std::fabs(p[i] - q[i]);
    return 0.5 * tv;
}

namespace detail {

inline std::size_t pow_checked(int base, int exp) {
    std::size_t n = 1;
    for (int i = 0; i < exp; ++i) {
        n *= static_cast<std::size_t>(base);
        require(n <= kEnumerationGuard, "sequence enumeration exceeds guard of " +
                                            std::to_string(kEnumerationGuard));
    }
    return n;
}

}  // namespace detail

// Distribution over all n_actions^T sequences from x0:
//   q(U) ∝ exp((sum_t r(x_t,u_t) + V_{H-T}(x_T)) / alpha)
// where V_{H-T} is the soft value with the remaining steps to go. Requires a
// finite-horizon solution at gamma = 1 with H >= T. Normalization is explicit.
inline Vec enumerated_sequence_distribution(const DiscreteMDP& mdp, const TabularSolution& sol, int x0,
                                     int T) {
    require(sol.horizon >= 1, "enumerated_sequence_distribution: needs a finite-horizon solution");
    require(sol.gamma == 1.0, "enumerated_sequence_distribution: identity requires gamma = 1");
    require(T >= 1 && T <= sol.horizon, "enumerated_sequence_distribution: T must be in [1, horizon]");
    require(x0 >= 0 && x0 < mdp.n_states, "enumerated_sequence_distribution: bad start state");
    std::size_t n_seq = detail::pow_checked(mdp.n_actions, T);
    Vec log_w(n_seq);
    double max_lw = -std::numeric_limits<double>::infinity();
    for (std::size_t seq = 0; seq < n_seq; ++seq) {
        int s = x0;
        double ret = 0.0;
        std::size_t rem = seq;
        // most-significant digit first: action at t=0 is the highest digit
        for (int t = T - 1; t >= 0; --t) {
            std::size_t div = 1;
            for (int i = 0; i < t; ++i) div *= mdp.n_actions;
            int a = static_cast<int>(rem / div);
            rem %= div;
            ret += mdp.r(s, a);
            s = mdp.at(s, a);
        }
        double lw = (ret + sol.v_togo(sol.horizon - T, s)) / sol.alpha;
        log_w[seq] = lw;
        max_lw = std::max(max_lw, lw);
    }
    double z = 0.0;
    for (auto& lw : log_w) {
        lw = std::exp(lw - max_lw);
        z += lw;
    }
    for (auto& w : log_w) w /= z;
    return log_w;
}

// Same support, built by chaining the per-step Boltzmann cell masses along
// the deterministic trace; step t uses the policy with H - t steps to go.
inline Vec boltzmann_product(const DiscreteMDP& mdp, const TabularSolution& sol, int x0, int T) {
    require(sol.horizon >= 1, "boltzmann_product: needs a finite-horizon solution");
    require(T >= 1 && T <= sol.horizon, "boltzmann_product: T must be in [1, horizon]");
    require(x0 >= 0 && x0 < mdp.n_states, "boltzmann_product: bad start state");
    std::size_t n_seq = detail::pow_checked(mdp.n_actions, T);
    Vec prob(n_seq);
    for (std::size_t seq = 0; seq < n_seq; ++seq) {
        int s = x0;
        double p = 1.0;
        std::size_t rem = seq;
        for (int t = T - 1; t >= 0; --t) {
            std::size_t div = 1;
            for (int i = 0; i < t; ++i) div *= mdp.n_actions;
            int a = static_cast<int>(rem / div);
            rem %= div;
            int level = sol.horizon - (T - 1 - t);
            p *= sol.policy_row(level, s)[a];
            s = mdp.at(s, a);
        }
        prob[seq] = p;
    }
    return prob;
}

struct RqlCheckResult {
    double max_tv = 0.0;  // worst per-state policy TV across levels
};

// Prior solved on omega*r; full task on omega*r + r_R; augmented task on
// omega'*log pi_prior + r_R, all with entropy weight alpha at gamma = 1.
// At omega' = alpha the full and augmented per-step policies coincide.
inline RqlCheckResult check_rql_equivalence(const DiscreteMDP& mdp, const Vec& addon, double omega,
                                            double omega_prime, double alpha, int horizon) {
    require(addon.size() == mdp.reward.size(), "check_rql_equivalence: addon table size mismatch");
    std::size_t n = mdp.reward.size();

    DiscreteMDP prior_mdp = mdp;
    for (auto& r : prior_mdp.reward) r *= omega;
    TabularSolution prior = soft_q_iteration(prior_mdp, alpha, horizon, 1.0);

    DiscreteMDP full_mdp = mdp;
    for (std::size_t i = 0; i < n; ++i) full_mdp.reward[i] = omega * mdp.reward[i] + addon[i];
    TabularSolution full = soft_q_iteration(full_mdp, alpha, horizon, 1.0);

    // per-level augmented reward: omega' * log-density of the prior's policy
    // with the same steps to go, plus the add-on
    std::vector<Vec> level_rewards(horizon);
    for (int h = 1; h <= horizon; ++h) {
        Vec r(n);
        for (int s = 0; s < mdp.n_states; ++s)
            for (int a = 0; a < mdp.n_actions; ++a) {
                std::size_t i = static_cast<std::size_t>(s) * mdp.n_actions + a;
                r[i] = omega_prime * prior.log_density(h, s, a) + addon[i];
            }
        level_rewards[h - 1] = std::move(r);
    }
    std::function<const Vec&(int)> reward_hook = [&](int level) -> const Vec& {
        return level_rewards[level - 1];
    };
    TabularSolution aug = soft_q_iteration(mdp, alpha, horizon, 1.0, &reward_hook);

    RqlCheckResult res;
    for (int h = 1; h <= horizon; ++h)
        for (int s = 0; s < mdp.n_states; ++s)
            res.max_tv = std::max(res.max_tv,
                                  total_variation(full.policy_row(h, s), aug.policy_row(h, s)));
    return res;
}

struct AugmentedOptimum {
    int argmax_cell = 0;
    Vec policy_row;  // Boltzmann masses over action cells at x0's cell
    TabularSolution solution;
};

// Discounted infinite-horizon solve of the augmented reward
// omega' * log pi_prior (stationary) + r_R; the reference the planner's
// modal action is checked against.
inline AugmentedOptimum augmented_optimal_action(const EnvMdp& em, const TabularSolution& prior,
                                                 double omega_prime, double alpha, double gamma,
                                                 int x0_cell) {
    require(x0_cell >= 0 && x0_cell < em.mdp.n_states, "augmented_optimal_action: bad start cell");
    DiscreteMDP aug = em.mdp;
    int levels = prior.levels();
    for (int s = 0; s < aug.n_states; ++s)
        for (int a = 0; a < aug.n_actions; ++a) {
            std::size_t i = static_cast<std::size_t>(s) * aug.n_actions + a;
            aug.reward[i] = omega_prime * prior.log_density(levels, s, a) + em.addon[i];
        }
    AugmentedOptimum out;
    out.solution = soft_q_iteration(aug, alpha, -1, gamma);
    out.argmax_cell = out.solution.argmax_row(1, x0_cell);
    out.policy_row = out.solution.policy_row(1, x0_cell);
    return out;
}

// ---------------------------------------------------------------------------
// Committed fixtures: small MDPs in structured text.
//
//   states 4
//   actions 3
//   cell_volume 1.0
//   alpha 0.7
//   horizon 3
//   omega 1.0
//   omega_prime 0.7
//   expect pass            (or: expect fail)
//   transition             (then n_states rows of n_actions indices)
//   ...
//   reward                 (then n_states rows of n_actions reals)
//   ...
//   addon                  (optional, same shape)

struct OracleFixture {
    std::string name;
    DiscreteMDP mdp;
    Vec addon;
    double alpha = 1.0;
    double omega = 1.0;
    double omega_prime = 1.0;
    int horizon = 1;
    bool expect_fail = false;
};

inline OracleFixture load_oracle_fixture(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open oracle fixture '" + path + "'");
    OracleFixture fx;
    fx.name = path;
    int ns = -1, na = -1;
    std::string tok;
    auto read_table = [&](Vec& out) {
        require(ns > 0 && na > 0, "fixture '" + path + "': table before states/actions");
        out.resize(static_cast<std::size_t>(ns) * na);
        for (auto& v : out)
            if (!(in >> v)) throw IoError("fixture '" + path + "': truncated table");
    };
    while (in >> tok) {
        if (tok[0] == '#') {
            std::string rest;
            std::getline(in, rest);
        } else if (tok == "states") {
            in >> ns;
        } else if (tok == "actions") {
            in >> na;
        } else if (tok == "cell_volume") {
            in >> fx.mdp.action_cell_volume;
        } else if (tok == "alpha") {
            in >> fx.alpha;
        } else if (tok == "horizon") {
            in >> fx.horizon;
        } else if (tok == "omega") {
            in >> fx.omega;
        } else if (tok == "omega_prime") {
            in >> fx.omega_prime;
        } else if (tok == "expect") {
            std::string what;
            in >> what;
            if (what == "fail")
                fx.expect_fail = true;
            else if (what != "pass")
                throw IoError("fixture '" + path + "': expect must be pass or fail");
        } else if (tok == "transition") {
            require(ns > 0 && na > 0, "fixture '" + path + "': transition before states/actions");
            fx.mdp.next.resize(static_cast<std::size_t>(ns) * na);
            for (auto& v : fx.mdp.next)
                if (!(in >> v)) throw IoError("fixture '" + path + "': truncated transition table");
        } else if (tok == "reward") {
            read_table(fx.mdp.reward);
        } else if (tok == "addon") {
            read_table(fx.addon);
        } else {
            throw IoError("fixture '" + path + "': unknown directive '" + tok + "'");
        }
        if (!in && !in.eof()) throw IoError("fixture '" + path + "': parse error near '" + tok + "'");
    }
    require(ns > 0 && na > 0, "fixture '" + path + "': missing states/actions");
    fx.mdp.n_states = ns;
    fx.mdp.n_actions = na;
    if (fx.addon.empty()) fx.addon.assign(static_cast<std::size_t>(ns) * na, 0.0);
    fx.mdp.validate();
    return fx;
}

inline void save_oracle_fixture(const std::string& path, const OracleFixture& fx) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "states " << fx.mdp.n_states << "\n";
    out << "actions " << fx.mdp.n_actions << "\n";
    out << "cell_volume " << fmt_fixed(fx.mdp.action_cell_volume, 9) << "\n";
    out << "alpha " << fmt_fixed(fx.alpha, 9) << "\n";
    out << "horizon " << fx.horizon << "\n";
    out << "omega " << fmt_fixed(fx.omega, 9) << "\n";
    out << "omega_prime " << fmt_fixed(fx.omega_prime, 9) << "\n";
    out << "expect " << (fx.expect_fail ? "fail" : "pass") << "\n";
    out << "transition\n";
    for (int s = 0; s < fx.mdp.n_states; ++s) {
        for (int a = 0; a < fx.mdp.n_actions; ++a)
            out << fx.mdp.at(s, a) << (a + 1 == fx.mdp.n_actions ? "" : " ");
        out << "\n";
    }
    auto table = [&](const Vec& t) {
        for (int s = 0; s < fx.mdp.n_states; ++s) {
            for (int a = 0; a < fx.mdp.n_actions; ++a)
                out << fmt_fixed(t[static_cast<std::size_t>(s) * fx.mdp.n_actions + a], 9)
                    << (a + 1 == fx.mdp.n_actions ? "" : " ");
            out << "\n";
        }
    };
    out << "reward\n";
    table(fx.mdp.reward);
    out << "addon\n";
    table(fx.addon);
    if (!out) throw IoError("short write to '" + path + "'");
}

// Seeded random deterministic MDP for the equivalence sweeps.
inline OracleFixture random_oracle_fixture(RngStream& rng, int max_states, int max_actions,
                                           int max_horizon) {
    OracleFixture fx;
    int ns = 2 + static_cast<int>(rng.uniform01() * (max_states - 1));
    int na = 2 + static_cast<int>(rng.uniform01() * (max_actions - 1));
    ns = std::min(ns, max_states);
    na = std::min(na, max_actions);
    fx.mdp.n_states = ns;
    fx.mdp.n_actions = na;
    fx.mdp.action_cell_volume = 1.0;
    fx.horizon = 1 + static_cast<int>(rng.uniform01() * max_horizon);
    fx.horizon = std::min(fx.horizon, max_horizon);
    fx.alpha = 0.3 + rng.uniform01();
    fx.omega = 1.0;
    fx.omega_prime = fx.alpha;
    std::size_t n = static_cast<std::size_t>(ns) * na;
    fx.mdp.next.resize(n);
    fx.mdp.reward.resize(n);
    fx.addon.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        fx.mdp.next[i] = static_cast<int>(rng.uniform01() * ns) % ns;
        fx.mdp.reward[i] = rng.uniform(-1.0, 1.0);
        fx.addon[i] = rng.uniform(-1.0, 1.0);
    }
    fx.name = "random";
    return fx;
}

}  // namespace rmppi
