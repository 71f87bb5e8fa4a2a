#pragma once

// Experiment pipeline behind the CLI: JSON config with env / prior / dynamics
// / planner / run / oracle blocks (unknown keys are hard errors), derived
// per-episode seeds, receding-horizon episodes, trajectory + metrics +
// manifest files, and the four commands. All output formatting is fixed so a
// rerun with the same config and seed is byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rmppi/core.hpp"
#include "rmppi/dynamics.hpp"
#include "rmppi/env.hpp"
#include "rmppi/oracle.hpp"
#include "rmppi/planner.hpp"
#include "rmppi/prior.hpp"

namespace rmppi {

using Json = nlohmann::json;

inline constexpr const char* kToolName = "rmppi";
inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Config parsing. Every getter names the offending key on failure.

namespace cfg_detail {

inline void check_keys(const Json& obj, const std::string& block,
                       std::initializer_list<const char*> allowed) {
    require(obj.is_object(), "config: '" + block + "' must be an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok)
            throw ValidationError("config: unknown key '" + it.key() + "' in '" + block +
                                  "' block");
    }
}

inline const Json* find(const Json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

inline double num(const Json& obj, const std::string& block, const char* key, double dflt,
                  bool required = false) {
    const Json* j = find(obj, key);
    if (!j) {
        if (required) throw ValidationError("config: '" + block + "." + key + "' is required");
        return dflt;
    }
    if (!j->is_number())
        throw ValidationError("config: '" + block + "." + key + "' must be a number");
    return j->get<double>();
}

inline long long integer(const Json& obj, const std::string& block, const char* key,
                         long long dflt, bool required = false) {
    const Json* j = find(obj, key);
    if (!j) {
        if (required) throw ValidationError("config: '" + block + "." + key + "' is required");
        return dflt;
    }
    if (!j->is_number_integer())
        throw ValidationError("config: '" + block + "." + key + "' must be an integer");
    return j->get<long long>();
}

inline bool flag(const Json& obj, const std::string& block, const char* key, bool dflt) {
    const Json* j = find(obj, key);
    if (!j) return dflt;
    if (!j->is_boolean())
        throw ValidationError("config: '" + block + "." + key + "' must be a boolean");
    return j->get<bool>();
}

inline std::string str(const Json& obj, const std::string& block, const char* key,
                       const std::string& dflt, bool required = false) {
    const Json* j = find(obj, key);
    if (!j) {
        if (required) throw ValidationError("config: '" + block + "." + key + "' is required");
        return dflt;
    }
    if (!j->is_string())
        throw ValidationError("config: '" + block + "." + key + "' must be a string");
    return j->get<std::string>();
}

inline Vec num_vec(const Json& j, const std::string& what) {
    if (!j.is_array()) throw ValidationError("config: '" + what + "' must be an array of numbers");
    Vec out;
    for (const auto& v : j) {
        if (!v.is_number())
            throw ValidationError("config: '" + what + "' must be an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

inline Vec vec_or(const Json& obj, const std::string& block, const char* key, Vec dflt) {
    const Json* j = find(obj, key);
    if (!j) return dflt;
    return num_vec(*j, block + "." + key);
}

}  // namespace cfg_detail

struct EnvBlock {
    std::string id;
    double omega = 1.0;
    std::map<std::string, double> overrides;
    std::string track_file;
};

struct PriorBlock {
    Json spec;  // interpreted by build_prior
};

struct DynamicsBlock {
    bool use_true_dynamics = false;
    std::string model_file;
    std::string dataset_file;
    int n_transitions = 2000;
    double exploration_sigma = 0.3;
    DynamicsTrainConfig train;
};

struct PlannerBlock {
    std::string variant = "residual";  // planner variants plus the "prior" bypass
    std::string terminal = "zero";     // "zero" | "prior_value"
    PlannerConfig cfg;
    bool present = false;
};

struct RunBlock {
    int n_episodes = 1;
    int n_steps = 100;
    std::uint64_t seed = 0;
    std::string out_dir;
    Vec x0;
    bool has_x0 = false;
    int iterations = 1;  // fewshot only
    bool present = false;
};

struct OracleBlock {
    std::vector<std::string> fixtures;
    int random_trials = 0;
    std::uint64_t seed = 1;
    double prop1_tol = 1e-10;
    double rql_tol = 1e-8;
    double control_min_tv = 1e-3;
    std::string report_file;
    bool present = false;
};

struct ExperimentConfig {
    EnvBlock env;
    PriorBlock prior;
    DynamicsBlock dynamics;
    PlannerBlock planner;
    RunBlock run;
    OracleBlock oracle;
    bool has_env = false;
    bool has_prior = false;
    bool has_dynamics = false;
    std::uint64_t config_hash = 0;  // whole config file, canonical dump
    std::uint64_t env_hash = 0;     // env block only; stamped into datasets and models
};

inline ExperimentConfig parse_config(const Json& doc) {
    using namespace cfg_detail;
    check_keys(doc, "config", {"env", "prior", "dynamics", "planner", "run", "oracle"});
    ExperimentConfig cfg;
    cfg.config_hash = fnv1a64(doc.dump());

    if (const Json* e = find(doc, "env")) {
        check_keys(*e, "env", {"id", "omega", "overrides", "track_file"});
        cfg.env.id = str(*e, "env", "id", "", true);
        cfg.env.omega = num(*e, "env", "omega", 1.0);
        cfg.env.track_file = str(*e, "env", "track_file", "");
        if (const Json* ov = find(*e, "overrides")) {
            require(ov->is_object(), "config: 'env.overrides' must be an object");
            for (auto it = ov->begin(); it != ov->end(); ++it) {
                require(it.value().is_number(),
                        "config: 'env.overrides." + it.key() + "' must be a number");
                cfg.env.overrides[it.key()] = it.value().get<double>();
            }
        }
        cfg.has_env = true;
        cfg.env_hash = fnv1a64(e->dump());
    }

    if (const Json* p = find(doc, "prior")) {
        require(p->is_object(), "config: 'prior' must be an object");
        cfg.prior.spec = *p;
        cfg.has_prior = true;
    }

    if (const Json* d = find(doc, "dynamics")) {
        check_keys(*d, "dynamics",
                   {"use_true_dynamics", "model_file", "dataset_file", "n_transitions",
                    "exploration_sigma", "hidden", "activation", "window", "gamma", "lr", "batch",
                    "train_steps", "finetune_steps", "finetune_lr", "holdout_fraction",
                    "new_only"});
        DynamicsBlock& db = cfg.dynamics;
        db.use_true_dynamics = flag(*d, "dynamics", "use_true_dynamics", false);
        db.model_file = str(*d, "dynamics", "model_file", "");
        db.dataset_file = str(*d, "dynamics", "dataset_file", "");
        db.n_transitions = static_cast<int>(integer(*d, "dynamics", "n_transitions", 2000));
        db.exploration_sigma = num(*d, "dynamics", "exploration_sigma", 0.3);
        if (const Json* h = find(*d, "hidden")) {
            Vec hv = num_vec(*h, "dynamics.hidden");
            db.train.hidden.clear();
            for (double v : hv) db.train.hidden.push_back(static_cast<int>(v));
        }
        db.train.activation = str(*d, "dynamics", "activation", db.train.activation);
        db.train.window = static_cast<int>(integer(*d, "dynamics", "window", db.train.window));
        db.train.gamma = num(*d, "dynamics", "gamma", db.train.gamma);
        db.train.lr = num(*d, "dynamics", "lr", db.train.lr);
        db.train.batch = static_cast<int>(integer(*d, "dynamics", "batch", db.train.batch));
        db.train.train_steps =
            static_cast<int>(integer(*d, "dynamics", "train_steps", db.train.train_steps));
        db.train.finetune_steps =
            static_cast<int>(integer(*d, "dynamics", "finetune_steps", db.train.finetune_steps));
        db.train.finetune_lr = num(*d, "dynamics", "finetune_lr", db.train.finetune_lr);
        db.train.holdout_fraction =
            num(*d, "dynamics", "holdout_fraction", db.train.holdout_fraction);
        db.train.new_only = flag(*d, "dynamics", "new_only", db.train.new_only);
        cfg.has_dynamics = true;
    }

    if (const Json* p = find(doc, "planner")) {
        check_keys(*p, "planner",
                   {"variant", "terminal", "samples", "horizon", "noise_std", "lambda", "gamma",
                    "omega_prime", "top_ratio", "include_nominal"});
        PlannerBlock& pb = cfg.planner;
        pb.variant = str(*p, "planner", "variant", "residual");
        if (pb.variant != "prior") variant_from_name(pb.variant);  // reject typos here
        pb.terminal = str(*p, "planner", "terminal", "zero");
        require(pb.terminal == "zero" || pb.terminal == "prior_value",
                "config: 'planner.terminal' must be \"zero\" or \"prior_value\"");
        pb.cfg.samples = static_cast<int>(integer(*p, "planner", "samples", pb.cfg.samples));
        pb.cfg.horizon = static_cast<int>(integer(*p, "planner", "horizon", pb.cfg.horizon));
        pb.cfg.noise_std = vec_or(*p, "planner", "noise_std", pb.cfg.noise_std);
        pb.cfg.lambda = num(*p, "planner", "lambda", pb.cfg.lambda);
        pb.cfg.gamma = num(*p, "planner", "gamma", pb.cfg.gamma);
        pb.cfg.omega_prime = num(*p, "planner", "omega_prime", pb.cfg.omega_prime);
        pb.cfg.top_ratio = num(*p, "planner", "top_ratio", pb.cfg.top_ratio);
        pb.cfg.include_nominal = flag(*p, "planner", "include_nominal", pb.cfg.include_nominal);
        pb.present = true;
    }

    if (const Json* r = find(doc, "run")) {
        check_keys(*r, "run",
                   {"n_episodes", "n_steps", "seed", "out_dir", "x0", "iterations"});
        RunBlock& rb = cfg.run;
        rb.n_episodes = static_cast<int>(integer(*r, "run", "n_episodes", 1));
        rb.n_steps = static_cast<int>(integer(*r, "run", "n_steps", 100));
        rb.seed = static_cast<std::uint64_t>(integer(*r, "run", "seed", 0, true));
        rb.out_dir = str(*r, "run", "out_dir", "", true);
        if (const Json* x = find(*r, "x0")) {
            rb.x0 = num_vec(*x, "run.x0");
            rb.has_x0 = true;
        }
        rb.iterations = static_cast<int>(integer(*r, "run", "iterations", 1));
        require(rb.n_episodes >= 1, "config: 'run.n_episodes' must be >= 1");
        require(rb.n_steps >= 0, "config: 'run.n_steps' must be >= 0");
        require(rb.iterations >= 0, "config: 'run.iterations' must be >= 0");
        rb.present = true;
    }

    if (const Json* o = find(doc, "oracle")) {
        check_keys(*o, "oracle",
                   {"fixtures", "random_trials", "seed", "prop1_tol", "rql_tol",
                    "control_min_tv", "report_file"});
        OracleBlock& ob = cfg.oracle;
        if (const Json* f = find(*o, "fixtures")) {
            require(f->is_array(), "config: 'oracle.fixtures' must be an array of paths");
            for (const auto& v : *f) {
                require(v.is_string(), "config: 'oracle.fixtures' must be an array of paths");
                ob.fixtures.push_back(v.get<std::string>());
            }
        }
        ob.random_trials = static_cast<int>(integer(*o, "oracle", "random_trials", 0));
        ob.seed = static_cast<std::uint64_t>(integer(*o, "oracle", "seed", 1));
        ob.prop1_tol = num(*o, "oracle", "prop1_tol", 1e-10);
        ob.rql_tol = num(*o, "oracle", "rql_tol", 1e-8);
        ob.control_min_tv = num(*o, "oracle", "control_min_tv", 1e-3);
        ob.report_file = str(*o, "oracle", "report_file", "");
        ob.present = true;
    }

    return cfg;
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::uint64_t* seed_override = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ValidationError("config '" + path + "': " + e.what());
    }
    ExperimentConfig cfg = parse_config(doc);
    if (seed_override) cfg.run.seed = *seed_override;
    return cfg;
}

// ---------------------------------------------------------------------------
// Prior and planning-model construction.

struct BuiltPrior {
    std::shared_ptr<const PriorPolicy> policy;
    std::shared_ptr<const TabularSoftPolicy> tabular;  // set for tabular-backed priors
};

inline Grid parse_grid(const Json& j, const std::string& what) {
    if (!j.is_array() || j.empty())
        throw ValidationError("config: '" + what + "' must be an array of [lo, hi, n, periodic]");
    Grid g;
    for (const auto& axis : j) {
        if (!axis.is_array() || axis.size() != 4 || !axis[0].is_number() ||
            !axis[1].is_number() || !axis[2].is_number_integer() ||
            !(axis[3].is_boolean() || axis[3].is_number()))
            throw ValidationError("config: '" + what +
                                  "' axes must be [lo, hi, n, periodic] quadruples");
        GridAxis a;
        a.lo = axis[0].get<double>();
        a.hi = axis[1].get<double>();
        a.n = axis[2].get<int>();
        a.periodic = axis[3].is_boolean() ? axis[3].get<bool>() : axis[3].get<double>() != 0.0;
        g.axes.push_back(a);
    }
    return g;
}

inline BuiltPrior build_prior(const PriorBlock& pb, const Env& env) {
    using namespace cfg_detail;
    const Json& p = pb.spec;
    std::string type = str(p, "prior", "type", "", true);
    BuiltPrior out;
    if (type == "linear_feedback") {
        check_keys(p, "prior", {"type", "matrix", "offset", "std"});
        const Json* m = find(p, "matrix");
        require(m && m->is_array(), "config: 'prior.matrix' must be an array of rows");
        std::vector<Vec> matrix;
        for (const auto& row : *m) matrix.push_back(num_vec(row, "prior.matrix row"));
        Vec offset = vec_or(p, "prior", "offset", {});
        Vec std_dev = vec_or(p, "prior", "std", {});
        out.policy = make_linear_feedback_prior(std::move(matrix), std::move(offset),
                                                std::move(std_dev));
        return out;
    }
    if (type == "mlp_file") {
        check_keys(p, "prior", {"type", "file"});
        out.policy = load_mlp_prior(str(p, "prior", "file", "", true));
        return out;
    }
    if (type == "tabular_file" || type == "tabular_solved") {
        std::shared_ptr<TabularSoftPolicy> tab;
        if (type == "tabular_file") {
            check_keys(p, "prior", {"type", "file", "smoothing_sigma"});
            tab = std::make_shared<TabularSoftPolicy>(
                TabularSoftPolicy::load(str(p, "prior", "file", "", true)));
        } else {
            check_keys(p, "prior",
                       {"type", "state_grid", "action_grid", "alpha", "gamma", "smoothing_sigma"});
            Grid sg = parse_grid(*find(p, "state_grid"), "prior.state_grid");
            Grid ag = parse_grid(*find(p, "action_grid"), "prior.action_grid");
            double alpha = num(p, "prior", "alpha", 0.0, true);
            double gamma = num(p, "prior", "gamma", 0.0, true);
            EnvMdp em = discretize_env(env, sg, ag);
            DiscreteMDP prior_mdp = em.mdp;  // the prior's own task: omega * basic reward
            for (auto& r : prior_mdp.reward) r *= env.spec().omega;
            TabularSolution sol = soft_q_iteration(prior_mdp, alpha, -1, gamma);
            tab = std::make_shared<TabularSoftPolicy>(em.state_grid, em.action_grid,
                                                      std::move(sol));
        }
        out.tabular = tab;
        if (const Json* s = find(p, "smoothing_sigma"))
            out.policy = tabular_to_continuous(tab, num_vec(*s, "prior.smoothing_sigma"));
        else
            out.policy = tab;
        return out;
    }
    if (type == "pursuit") {
        check_keys(p, "prior", {"type", "lookahead", "target_speed", "std"});
        const auto* car = dynamic_cast<const CarEnv*>(&env);
        require(car != nullptr, "config: pursuit prior requires the car env");
        auto track = std::make_shared<const CarTrack>(car->track());
        out.policy = make_pursuit_prior(track, num(p, "prior", "lookahead", 0.0, true),
                                        num(p, "prior", "target_speed", 0.0, true),
                                        CarEnv::kWheelbase, vec_or(p, "prior", "std", {}));
        return out;
    }
    throw ValidationError("config: unknown prior type '" + type + "'");
}

struct BuiltModel {
    std::shared_ptr<const PlanningModel> model;
    std::shared_ptr<const LearnedDynamics> learned;  // null when planning on the true env
};

inline BuiltModel build_model(const DynamicsBlock& db, const Env& env, std::uint64_t env_hash) {
    BuiltModel out;
    if (db.use_true_dynamics) {
        out.model = std::make_shared<TrueDynamicsModel>(env);
        return out;
    }
    require(!db.model_file.empty(),
            "config: 'dynamics.model_file' is required unless use_true_dynamics is set");
    auto dyn = std::make_shared<LearnedDynamics>(LearnedDynamics::load(db.model_file));
    require(dyn->env_hash == env_hash,
            "model env hash " + hash_hex(dyn->env_hash) + " does not match config env hash " +
                hash_hex(env_hash));
    out.learned = dyn;
    out.model = std::make_shared<LearnedDynamicsModel>(*dyn);
    return out;
}

inline TerminalEstimator build_terminal(const PlannerBlock& pb, const BuiltPrior& prior) {
    if (pb.terminal == "zero") return nullptr;
    require(prior.tabular != nullptr,
            "config: planner.terminal == \"prior_value\" needs a tabular prior");
    auto tab = prior.tabular;
    return [tab](const State& x) {
        int s = tab->state_cell(x);
        return tab->solution().v()[s];
    };
}

// ---------------------------------------------------------------------------
// Receding-horizon episodes.

struct StepRecord {
    State x;
    Action u;
    double basic = 0.0;
    double addon = 0.0;
    PlanDiagnostics diag;
};

struct Trajectory {
    std::vector<StepRecord> steps;
    State final_state;
};

struct EpisodeMetrics {
    double total = 0.0;
    double basic = 0.0;
    double addon = 0.0;
    long long off_course_steps = 0;
    long long lap_steps = -1;  // -1: no track
    long long degraded_steps = 0;
    int n_steps = 0;
};

struct EpisodeResult {
    EpisodeMetrics metrics;
    Trajectory traj;
};

// Re-plans from the true state every step and executes the first action in
// the true env. Off-course is counted at the post-step state; an unfinished
// lap counts the full episode length.
inline EpisodeResult run_episode(const Env& env, const PriorPolicy& prior, Planner* planner,
                                 const State& x0, int n_steps) {
    EpisodeResult res;
    const double omega = env.spec().omega;
    const CarTrack* track = nullptr;
    if (const auto* car = dynamic_cast<const CarEnv*>(&env)) track = &car->track();
    State x = x0;
    double lap_progress = 0.0;
    double prev_s = track ? track->project(x[0], x[1]).s : 0.0;
    for (int t = 0; t < n_steps; ++t) {
        StepRecord rec;
        Action u;
        if (planner) {
            PlanResult pr = planner->plan(x);
            u = env.clamp_action(pr.sequence[0]);
            rec.diag = pr.diag;
            if (pr.diag.degraded) ++res.metrics.degraded_steps;
        } else {
            u = env.clamp_action(prior.mode(x));
        }
        double br = env.basic_reward(x, u);
        double ar = env.addon_reward(x, u);
        State nx = env.step(x, u);
        res.metrics.basic += br;
        res.metrics.addon += ar;
        res.metrics.total += omega * br + ar;
        rec.x = x;
        rec.u = u;
        rec.basic = br;
        rec.addon = ar;
        res.traj.steps.push_back(std::move(rec));
        if (track) {
            TrackQuery q = track->project(nx[0], nx[1]);
            if (q.d_center > q.d_map) ++res.metrics.off_course_steps;
            lap_progress += track->arc_delta(prev_s, q.s);
            prev_s = q.s;
            if (res.metrics.lap_steps < 0 && lap_progress >= track->total_length())
                res.metrics.lap_steps = t + 1;
        }
        x = std::move(nx);
    }
    res.traj.final_state = x;
    res.metrics.n_steps = n_steps;
    if (track && res.metrics.lap_steps < 0) res.metrics.lap_steps = n_steps;
    return res;
}

// ---------------------------------------------------------------------------
// Output files. Fixed 9-decimal formatting keeps reruns byte-identical.

inline std::string trajectory_header(const EnvSpec& spec) {
    std::string h = "step";
    for (const auto& c : spec.state_cols) h += " " + c;
    for (const auto& c : spec.action_cols) h += " " + c;
    h += " basic_reward addon_reward best_score ess retained invalid degraded\n";
    return h;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << content;
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline std::string format_trajectory(const EnvSpec& spec, const Trajectory& traj) {
    std::string s = trajectory_header(spec);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const StepRecord& r = traj.steps[t];
        s += std::to_string(t);
        for (double v : r.x) s += " " + fmt_fixed(v);
        for (double v : r.u) s += " " + fmt_fixed(v);
        s += " " + fmt_fixed(r.basic) + " " + fmt_fixed(r.addon);
        s += " " + fmt_fixed(r.diag.best_score) + " " + fmt_fixed(r.diag.ess);
        s += " " + std::to_string(r.diag.retained) + " " + std::to_string(r.diag.invalid);
        s += r.diag.degraded ? " 1\n" : " 0\n";
    }
    return s;
}

inline void write_trajectory(const std::string& path, const EnvSpec& spec,
                             const Trajectory& traj) {
    write_text_file(path, format_trajectory(spec, traj));
}

// Numeric rows (including the step index) of a trajectory file.
inline std::vector<Vec> read_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trajectory '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw IoError("trajectory '" + path + "' has no header");
    std::vector<Vec> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        Vec row;
        double v;
        while (ls >> v) row.push_back(v);
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::pair<double, double> mean_std(const Vec& v) {
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double sq = 0.0;
    for (double x : v) sq += (x - mean) * (x - mean);
    return {mean, std::sqrt(sq / static_cast<double>(v.size() - 1))};
}

inline std::string format_metrics_table(const std::vector<EpisodeMetrics>& eps) {
    std::string s =
        "episode total_reward basic_reward addon_reward off_course_steps lap_steps "
        "degraded_steps\n";
    for (std::size_t i = 0; i < eps.size(); ++i) {
        const EpisodeMetrics& m = eps[i];
        s += std::to_string(i) + " " + fmt_fixed(m.total) + " " + fmt_fixed(m.basic) + " " +
             fmt_fixed(m.addon) + " " + std::to_string(m.off_course_steps) + " " +
             std::to_string(m.lap_steps) + " " + std::to_string(m.degraded_steps) + "\n";
    }
    auto col = [&](auto pick) {
        Vec v;
        for (const auto& m : eps) v.push_back(static_cast<double>(pick(m)));
        return mean_std(v);
    };
    auto row = [&](const char* name, std::pair<double, double> ms) {
        return std::string(name) + " " + fmt_fixed(ms.first) + " " + fmt_fixed(ms.second) + "\n";
    };
    s += "metric mean std\n";
    s += row("total_reward", col([](const EpisodeMetrics& m) { return m.total; }));
    s += row("basic_reward", col([](const EpisodeMetrics& m) { return m.basic; }));
    s += row("addon_reward", col([](const EpisodeMetrics& m) { return m.addon; }));
    s += row("off_course_steps", col([](const EpisodeMetrics& m) { return m.off_course_steps; }));
    s += row("lap_steps", col([](const EpisodeMetrics& m) { return m.lap_steps; }));
    s += row("degraded_steps", col([](const EpisodeMetrics& m) { return m.degraded_steps; }));
    return s;
}

inline void write_manifest(const std::string& out_dir, const std::string& command,
                           const ExperimentConfig& cfg, std::vector<std::string> outputs) {
    Json m;
    m["command"] = command;
    m["config_hash"] = hash_hex(cfg.config_hash);
    m["env_hash"] = hash_hex(cfg.env_hash);
    m["seed"] = cfg.run.seed;
    m["tool"] = kToolName;
    m["version"] = kToolVersion;
    m["outputs"] = outputs;
    write_text_file(out_dir + "/manifest.json", m.dump(2) + "\n");
}

inline std::string episode_file_name(const std::string& stem, int episode) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%03d.txt", stem.c_str(), episode);
    return buf;
}

// ---------------------------------------------------------------------------
// Commands. Each returns the exit code plus a printable summary.

struct CommandResult {
    int exit_code = 0;
    std::string summary;
};

namespace harness_detail {

inline void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
}

inline State episode_start(const Env& env, const RunBlock& run, std::uint64_t base_seed,
                           int episode) {
    if (run.has_x0) {
        require(static_cast<int>(run.x0.size()) == env.spec().state_dim,
                "config: 'run.x0' dim does not match env state dim");
        require(all_finite(run.x0), "config: 'run.x0' must be finite");
        return run.x0;
    }
    RngStream rng = RngStream::derived(base_seed, 2 * static_cast<std::uint64_t>(episode));
    return env.reset(rng);
}

// One evaluation sweep: n_episodes receding-horizon episodes with per-episode
// derived seeds. file_stem == "" skips trajectory files.
inline std::vector<EpisodeResult> run_sweep(const ExperimentConfig& cfg, const Env& env,
                                            const BuiltPrior& prior, const BuiltModel& model,
                                            std::uint64_t base_seed, const std::string& out_dir,
                                            const std::string& file_stem,
                                            std::vector<std::string>* outputs) {
    const bool prior_variant = cfg.planner.variant == "prior";
    TerminalEstimator terminal = build_terminal(cfg.planner, prior);
    std::vector<EpisodeResult> results;
    for (int ep = 0; ep < cfg.run.n_episodes; ++ep) {
        State x0 = episode_start(env, cfg.run, base_seed, ep);
        std::unique_ptr<Planner> planner;
        if (!prior_variant) {
            PlannerConfig pc = cfg.planner.cfg;
            pc.variant = variant_from_name(cfg.planner.variant);
            planner = std::make_unique<Planner>(
                pc, env, prior.policy, model.model,
                derive_seed(base_seed, 2 * static_cast<std::uint64_t>(ep) + 1), terminal);
        }
        EpisodeResult r = run_episode(env, *prior.policy, planner.get(), x0, cfg.run.n_steps);
        if (!file_stem.empty()) {
            std::string name = episode_file_name(file_stem, ep);
            write_trajectory(out_dir + "/" + name, env.spec(), r.traj);
            if (outputs) outputs->push_back(name);
        }
        results.push_back(std::move(r));
    }
    return results;
}

inline std::vector<EpisodeMetrics> metrics_of(const std::vector<EpisodeResult>& rs) {
    std::vector<EpisodeMetrics> ms;
    for (const auto& r : rs) ms.push_back(r.metrics);
    return ms;
}

inline TransitionDataset dataset_from_results(const std::vector<EpisodeResult>& rs, int state_dim,
                                              int action_dim, std::uint64_t env_hash) {
    TransitionDataset ds;
    ds.state_dim = state_dim;
    ds.action_dim = action_dim;
    ds.env_hash = env_hash;
    for (const auto& r : rs) {
        if (r.traj.steps.empty()) continue;
        std::vector<Vec> xs, us, nxs;
        for (std::size_t t = 0; t < r.traj.steps.size(); ++t) {
            xs.push_back(r.traj.steps[t].x);
            us.push_back(r.traj.steps[t].u);
            nxs.push_back(t + 1 < r.traj.steps.size() ? r.traj.steps[t + 1].x
                                                      : r.traj.final_state);
        }
        ds.append_episode(xs, us, nxs);
    }
    return ds;
}

}  // namespace harness_detail

inline CommandResult cmd_train_dynamics(const ExperimentConfig& cfg) {
    require(cfg.has_env && cfg.has_prior && cfg.has_dynamics && cfg.run.present,
            "train-dynamics needs env, prior, dynamics and run blocks");
    require(!cfg.dynamics.use_true_dynamics,
            "dynamics block sets use_true_dynamics; nothing to train");
    require(!cfg.dynamics.model_file.empty(), "config: 'dynamics.model_file' is required");
    auto env = make_env(cfg.env.id, cfg.env.omega, cfg.env.overrides, cfg.env.track_file);
    BuiltPrior prior = build_prior(cfg.prior, *env);
    harness_detail::ensure_out_dir(cfg.run.out_dir);

    TransitionDataset ds =
        collect_rollouts(*env, *prior.policy, cfg.dynamics.n_transitions,
                         cfg.dynamics.exploration_sigma, derive_seed(cfg.run.seed, 0x64617461),
                         cfg.env_hash);
    std::vector<std::string> outputs;
    if (!cfg.dynamics.dataset_file.empty()) {
        ds.save(cfg.dynamics.dataset_file);
        outputs.push_back(cfg.dynamics.dataset_file);
    }
    DynamicsTrainConfig tc = cfg.dynamics.train;
    tc.seed = cfg.run.seed;
    DynamicsTrainReport rep;
    LearnedDynamics dyn = train_dynamics(*env, ds, tc, &rep);
    dyn.save(cfg.dynamics.model_file);
    outputs.push_back(cfg.dynamics.model_file);

    std::string report;
    report += "final_train_loss " + fmt_sci(rep.final_train_loss) + "\n";
    report += "n_train_windows " + std::to_string(rep.n_train_windows) + "\n";
    report += "n_holdout_windows " + std::to_string(rep.n_holdout_windows) + "\n";
    report += "holdout_error";
    for (double v : rep.holdout_error) report += " " + fmt_sci(v);
    report += "\nloss_curve";
    for (double v : rep.loss_curve) report += " " + fmt_sci(v);
    report += "\n";
    write_text_file(cfg.run.out_dir + "/train_report.txt", report);
    outputs.push_back("train_report.txt");
    write_manifest(cfg.run.out_dir, "train-dynamics", cfg, outputs);

    double worst = 0.0;
    for (double v : rep.holdout_error) worst = std::max(worst, v);
    CommandResult res;
    res.summary = "trained " + cfg.env.id + " model: " + std::to_string(ds.size()) +
                  " transitions, final loss " + fmt_sci(rep.final_train_loss) +
                  ", worst holdout dim error " + fmt_sci(worst) + "\nmodel written to " +
                  cfg.dynamics.model_file;
    return res;
}

inline CommandResult cmd_run(const ExperimentConfig& cfg) {
    require(cfg.has_env && cfg.has_prior && cfg.run.present, "run needs env, prior and run blocks");
    require(cfg.planner.present, "run needs a planner block");
    auto env = make_env(cfg.env.id, cfg.env.omega, cfg.env.overrides, cfg.env.track_file);
    BuiltPrior prior = build_prior(cfg.prior, *env);
    BuiltModel model;
    if (cfg.planner.variant != "prior") {
        require(cfg.has_dynamics, "run needs a dynamics block (or planner.variant == \"prior\")");
        model = build_model(cfg.dynamics, *env, cfg.env_hash);
    }
    harness_detail::ensure_out_dir(cfg.run.out_dir);

    std::vector<std::string> outputs;
    std::vector<EpisodeResult> results = harness_detail::run_sweep(
        cfg, *env, prior, model, cfg.run.seed, cfg.run.out_dir, "ep_", &outputs);
    std::string table = format_metrics_table(harness_detail::metrics_of(results));
    write_text_file(cfg.run.out_dir + "/metrics.txt", table);
    outputs.push_back("metrics.txt");
    write_manifest(cfg.run.out_dir, "run", cfg, outputs);

    CommandResult res;
    res.summary = "variant " + cfg.planner.variant + ", " + std::to_string(cfg.run.n_episodes) +
                  " episode(s) x " + std::to_string(cfg.run.n_steps) + " steps\n" + table;
    return res;
}

inline CommandResult cmd_fewshot(const ExperimentConfig& cfg) {
    require(cfg.has_env && cfg.has_prior && cfg.has_dynamics && cfg.run.present &&
                cfg.planner.present,
            "fewshot needs env, prior, dynamics, planner and run blocks");
    require(!cfg.dynamics.use_true_dynamics, "fewshot needs a learned model, not true dynamics");
    require(cfg.planner.variant != "prior", "fewshot needs a planning variant, not \"prior\"");
    require(!cfg.dynamics.model_file.empty(), "config: 'dynamics.model_file' is required");
    require(!cfg.dynamics.dataset_file.empty(), "config: 'dynamics.dataset_file' is required");

    auto env = make_env(cfg.env.id, cfg.env.omega, cfg.env.overrides, cfg.env.track_file);
    BuiltPrior prior = build_prior(cfg.prior, *env);
    auto dyn = std::make_shared<LearnedDynamics>(LearnedDynamics::load(cfg.dynamics.model_file));
    require(dyn->env_hash == cfg.env_hash,
            "model env hash " + hash_hex(dyn->env_hash) + " does not match config env hash " +
                hash_hex(cfg.env_hash));
    TransitionDataset data = TransitionDataset::load(cfg.dynamics.dataset_file);
    require(data.env_hash == cfg.env_hash,
            "dataset env hash " + hash_hex(data.env_hash) + " does not match config env hash " +
                hash_hex(cfg.env_hash));
    harness_detail::ensure_out_dir(cfg.run.out_dir);

    BuiltModel model;
    model.learned = dyn;
    model.model = std::make_shared<LearnedDynamicsModel>(*dyn);
    DynamicsTrainConfig tc = cfg.dynamics.train;

    std::vector<std::string> outputs;
    std::string all_tables;
    CommandResult res;
    for (int iter = 0; iter <= cfg.run.iterations; ++iter) {
        // iteration 0 reproduces cmd_run's seed derivation exactly (zero-shot)
        std::uint64_t base =
            iter == 0 ? cfg.run.seed : derive_seed(cfg.run.seed, 0xB000 + iter);
        char stem[32];
        std::snprintf(stem, sizeof stem, "iter%d_ep_", iter);
        std::vector<EpisodeResult> results = harness_detail::run_sweep(
            cfg, *env, prior, model, base, cfg.run.out_dir, stem, &outputs);
        std::string table = format_metrics_table(harness_detail::metrics_of(results));
        all_tables += "# iteration " + std::to_string(iter) + "\n" + table;
        res.summary += "iteration " + std::to_string(iter) + ": dataset " +
                       std::to_string(data.size()) + " transitions\n" + table;
        if (iter == cfg.run.iterations) break;

        TransitionDataset new_data = harness_detail::dataset_from_results(
            results, env->spec().state_dim, env->spec().action_dim, cfg.env_hash);
        require(new_data.size() > 0, "fewshot: evaluation runs produced no transitions");
        tc.seed = derive_seed(cfg.run.seed, 0xA100 + iter);
        finetune_online(*dyn, data, new_data, tc);
        data.merge(new_data);
    }

    write_text_file(cfg.run.out_dir + "/metrics.txt", all_tables);
    outputs.push_back("metrics.txt");
    dyn->save(cfg.run.out_dir + "/model_fewshot.rsa");
    outputs.push_back("model_fewshot.rsa");
    write_manifest(cfg.run.out_dir, "fewshot", cfg, outputs);
    return res;
}

inline CommandResult cmd_oracle_check(const ExperimentConfig& cfg) {
    require(cfg.oracle.present, "oracle-check needs an oracle block");
    const OracleBlock& ob = cfg.oracle;
    require(!ob.fixtures.empty() || ob.random_trials > 0,
            "oracle-check: empty fixture set (list fixtures or set random_trials)");

    std::string report;
    int checks = 0, violations = 0;

    auto prop1_sweep = [&](const OracleFixture& fx) {
        DiscreteMDP prior_mdp = fx.mdp;
        for (auto& r : prior_mdp.reward) r *= fx.omega;
        TabularSolution sol = soft_q_iteration(prior_mdp, fx.alpha, fx.horizon, 1.0);
        double max_tv = 0.0;
        for (int s = 0; s < fx.mdp.n_states; ++s)
            for (int T = 1; T <= fx.horizon; ++T) {
                Vec enumd = enumerated_sequence_distribution(prior_mdp, sol, s, T);
                Vec prod = boltzmann_product(prior_mdp, sol, s, T);
                max_tv = std::max(max_tv, total_variation(enumd, prod));
            }
        ++checks;
        bool ok = max_tv <= ob.prop1_tol;
        if (!ok) ++violations;
        report += std::string(ok ? "[PASS]" : "[FAIL]") + " prop1 " + fx.name +
                  " max_tv=" + fmt_sci(max_tv) + "\n";
    };

    auto rql_sweep = [&](const OracleFixture& fx) {
        double tv =
            check_rql_equivalence(fx.mdp, fx.addon, fx.omega, fx.omega_prime, fx.alpha, fx.horizon)
                .max_tv;
        ++checks;
        if (fx.expect_fail) {
            bool ok = tv > ob.control_min_tv;
            if (!ok) ++violations;
            report += std::string(ok ? "[XFAIL]" : "[FAIL]") + " rql " + fx.name +
                      " max_tv=" + fmt_sci(tv) +
                      (ok ? " (mismatched omega_prime, expected)\n"
                          : " (negative control unexpectedly matched)\n");
        } else {
            bool ok = tv <= ob.rql_tol;
            if (!ok) ++violations;
            report += std::string(ok ? "[PASS]" : "[FAIL]") + " rql " + fx.name +
                      " max_tv=" + fmt_sci(tv) + "\n";
        }
    };

    for (const std::string& path : ob.fixtures) {
        OracleFixture fx = load_oracle_fixture(path);
        prop1_sweep(fx);
        rql_sweep(fx);
    }
    RngStream rng(ob.seed);
    for (int t = 0; t < ob.random_trials; ++t) {
        OracleFixture fx = random_oracle_fixture(rng, 6, 4, 4);
        fx.name = "random/" + std::to_string(t);
        prop1_sweep(fx);
        rql_sweep(fx);
    }

    report += "summary: " + std::to_string(checks) + " checks, " + std::to_string(violations) +
              " violation(s)\n";
    if (!ob.report_file.empty()) {
        std::filesystem::path parent = std::filesystem::path(ob.report_file).parent_path();
        if (!parent.empty()) harness_detail::ensure_out_dir(parent.string());
        write_text_file(ob.report_file, report);
    }

    CommandResult res;
    res.exit_code = violations > 0 ? 2 : 0;
    res.summary = report;
    return res;
}

}  // namespace rmppi
