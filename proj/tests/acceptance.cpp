// Acceptance gate for the planner stack. Each criterion prints one
// [PASS]/[FAIL] line with its measured quantity and wall time; the process
// exits nonzero if any line fails. Frozen fixture constants live at the top
// of each criterion; reference margins come from the committed reference run
// noted next to them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "rmppi/harness.hpp"

using namespace rmppi;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = false;
    std::string detail;
};

std::string g_source_dir;

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fixture_path(const std::string& rel) { return g_source_dir + "/" + rel; }

std::shared_ptr<const PriorPolicy> point_mass_prior() {
    return make_linear_feedback_prior({{0, 0, -0.5, 0}, {0, 0, 0, -0.5}}, {0.3, 0.0}, {0.4, 0.4});
}

PlannerConfig desk_point_mass_cfg(PlannerVariant v) {
    PlannerConfig cfg;
    cfg.variant = v;
    cfg.samples = 48;
    cfg.horizon = 6;
    cfg.noise_std = {0.3, 0.3};
    cfg.lambda = 0.5;
    cfg.gamma = 0.95;
    cfg.omega_prime = 0.5;
    return cfg;
}

// Paired-seed evaluation sweep shared by criteria 8 and 10.
Vec episode_totals(const Env& env, std::shared_ptr<const PriorPolicy> prior,
                   const PlannerConfig& cfg, std::shared_ptr<const PlanningModel> model,
                   std::uint64_t base_seed, int n_episodes, int n_steps) {
    Vec totals;
    for (int ep = 0; ep < n_episodes; ++ep) {
        RngStream reset = RngStream::derived(base_seed, 2 * static_cast<std::uint64_t>(ep));
        State x0 = env.reset(reset);
        Planner planner(cfg, env, prior, model,
                        derive_seed(base_seed, 2 * static_cast<std::uint64_t>(ep) + 1));
        EpisodeResult r = run_episode(env, *prior, &planner, x0, n_steps);
        totals.push_back(r.metrics.total);
    }
    return totals;
}

double mean_of(const Vec& v) {
    double m = 0.0;
    for (double x : v) m += x;
    return m / static_cast<double>(v.size());
}

// 1. Finite-horizon sequence-distribution identity at gamma = 1: enumerated
// soft-optimal sequence weights equal the product of per-step policy masses.
Outcome criterion_1() {
    constexpr double kTol = 1e-10;
    constexpr int kFixtures = 100;
    RngStream rng(0x501);
    double max_tv = 0.0;
    for (int i = 0; i < kFixtures; ++i) {
        OracleFixture fx = random_oracle_fixture(rng, 6, 4, 4);
        DiscreteMDP prior_mdp = fx.mdp;
        for (auto& r : prior_mdp.reward) r *= fx.omega;
        TabularSolution sol = soft_q_iteration(prior_mdp, fx.alpha, fx.horizon, 1.0);
        for (int s = 0; s < fx.mdp.n_states; ++s)
            for (int T = 1; T <= fx.horizon; ++T) {
                Vec enumd = enumerated_sequence_distribution(prior_mdp, sol, s, T);
                Vec prod = boltzmann_product(prior_mdp, sol, s, T);
                max_tv = std::max(max_tv, total_variation(enumd, prod));
            }
    }
    Outcome out;
    out.ok = max_tv <= kTol;
    out.detail = std::to_string(kFixtures) + " random fixtures, max tv " + fmt_sci(max_tv, 3) +
                 " (tol " + fmt_sci(kTol, 0) + ")";
    return out;
}

// 2. Augmented-MDP equivalence on the committed fixtures, plus the
// omega_prime-mismatch negative control.
Outcome criterion_2() {
    constexpr double kPassTol = 1e-8;
    constexpr double kControlMin = 1e-3;
    const char* pass_files[] = {"configs/oracle/chain_pass.txt", "configs/oracle/loop_pass.txt",
                                "configs/oracle/branch_pass.txt"};
    double max_pass_tv = 0.0;
    for (const char* f : pass_files) {
        OracleFixture fx = load_oracle_fixture(fixture_path(f));
        double tv = check_rql_equivalence(fx.mdp, fx.addon, fx.omega, fx.omega_prime, fx.alpha,
                                          fx.horizon)
                        .max_tv;
        max_pass_tv = std::max(max_pass_tv, tv);
    }
    OracleFixture control = load_oracle_fixture(fixture_path("configs/oracle/mismatch_control.txt"));
    double control_tv = check_rql_equivalence(control.mdp, control.addon, control.omega,
                                              control.omega_prime, control.alpha, control.horizon)
                            .max_tv;
    Outcome out;
    out.ok = max_pass_tv <= kPassTol && control_tv > kControlMin;
    out.detail = "pass fixtures max tv " + fmt_sci(max_pass_tv, 3) + " (tol " +
                 fmt_sci(kPassTol, 0) + "), control tv " + fmt_sci(control_tv, 3) + " (min " +
                 fmt_sci(kControlMin, 0) + ")";
    return out;
}

// 3. Softmax-weight algebra: uniform scores, a lambda*ln2 gap, and shift
// invariance of the weights.
Outcome criterion_3() {
    auto rollouts = [](std::initializer_list<double> scores) {
        std::vector<ScoredRollout> rs;
        for (double s : scores) rs.push_back({s, true});
        return rs;
    };
    double worst = 0.0;
    bool shift_exact = true;

    WeightVector uni = compute_weights(rollouts({2.5, 2.5, 2.5, 2.5}), 1.0, 1.0);
    for (double w : uni.weights) worst = std::max(worst, std::fabs(w - 0.25));

    const double lambda = 0.7;
    WeightVector gap = compute_weights(rollouts({1.0, 1.0 + lambda * std::log(2.0)}), lambda, 1.0);
    worst = std::max(worst, std::fabs(gap.weights[0] - 1.0 / 3.0));
    worst = std::max(worst, std::fabs(gap.weights[1] - 2.0 / 3.0));

    WeightVector base = compute_weights(rollouts({3.0, 1.0, 0.0, -2.0}), 0.9, 1.0);
    for (double c : {1.0, -1.0, 1e6, -1e6}) {
        WeightVector shifted =
            compute_weights(rollouts({3.0 + c, 1.0 + c, 0.0 + c, -2.0 + c}), 0.9, 1.0);
        for (int i = 0; i < 4; ++i)
            if (shifted.weights[i] != base.weights[i]) shift_exact = false;
    }

    Outcome out;
    out.ok = worst <= 1e-12 && shift_exact;
    out.detail = "uniform and ln2-gap max deviation " + fmt_sci(worst, 3) +
                 " (tol 1e-12), shift invariance " + (shift_exact ? "exact" : "BROKEN");
    return out;
}

// 4. Every parameter gradient of 50 random MLPs against central finite
// differences of a random linear readout.
Outcome criterion_4() {
    constexpr double kTol = 1e-4;
    RngStream rng(0x6E6E);
    double worst = 0.0;
    std::size_t n_checked = 0;
    for (int i = 0; i < 50; ++i) {
        int in = 2 + static_cast<int>(rng.uniform01() * 3);
        int out_dim = 1 + static_cast<int>(rng.uniform01() * 3);
        std::vector<int> dims{in};
        int depth = 1 + static_cast<int>(rng.uniform01() * 2);
        for (int l = 0; l < depth; ++l) dims.push_back(3 + static_cast<int>(rng.uniform01() * 4));
        dims.push_back(out_dim);
        Mlp net(dims, i % 2 == 0 ? Activation::tanh : Activation::mish);
        net.init(rng);

        Vec x(in), c(out_dim);
        for (auto& v : x) v = rng.uniform(-1.5, 1.5);
        for (auto& v : c) v = rng.uniform(-1.0, 1.0);
        auto loss = [&]() {
            Vec y = net.forward(x);
            double L = 0.0;
            for (int j = 0; j < out_dim; ++j) L += c[j] * y[j];
            return L;
        };

        MlpCache cache;
        net.forward_cached(x, cache);
        Vec grad(net.n_params(), 0.0);
        net.backward(cache, c, grad);

        for (std::size_t p = 0; p < net.n_params(); ++p) {
            double theta = net.params()[p];
            double h = 1e-5 * std::max(1.0, std::fabs(theta));
            net.params()[p] = theta + h;
            double lp = loss();
            net.params()[p] = theta - h;
            double lm = loss();
            net.params()[p] = theta;
            double fd = (lp - lm) / (2.0 * h);
            double rel = std::fabs(grad[p] - fd) / std::max({1.0, std::fabs(grad[p]), std::fabs(fd)});
            worst = std::max(worst, rel);
            ++n_checked;
        }
    }
    Outcome out;
    out.ok = worst < kTol;
    out.detail = std::to_string(n_checked) + " parameters over 50 nets, worst rel err " +
                 fmt_sci(worst, 3) + " (tol " + fmt_sci(kTol, 0) + ")";
    return out;
}

// 5. Modal first action of 2000 seeded plans on the discretized 1D point-mass
// customization fixture equals the augmented-MDP argmax.
Outcome criterion_5() {
    // addon keeps v under 0.6 while the basic task wants v = 1; at v0 = 0.6
    // the customized optimum is to hold (action cell 2), between the prior
    // mode (+1) and what the addon alone would pick
    PointMass1dEnv env(1.0, 8.0, 0.6);
    Grid sg;
    sg.axes = {{0.0, PointMass1dEnv::kPeriod, 1, true}, {-1.0, 1.0, 41, false}};
    Grid ag;
    ag.axes = {{-1.0, 1.0, 5, false}};
    const double alpha = 0.25, gamma = 0.8, omega_prime = 0.4;

    EnvMdp em = discretize_env(env, sg, ag);
    DiscreteMDP prior_mdp = em.mdp;
    for (auto& r : prior_mdp.reward) r *= env.spec().omega;
    TabularSolution prior_sol = soft_q_iteration(prior_mdp, alpha, -1, gamma);

    State x0{0.0, 0.6};
    int x0_cell = em.state_grid.snap(x0);
    AugmentedOptimum oracle =
        augmented_optimal_action(em, prior_sol, omega_prime, alpha, gamma, x0_cell);

    auto tab = std::make_shared<TabularSoftPolicy>(em.state_grid, em.action_grid, prior_sol);
    auto model = std::make_shared<TrueDynamicsModel>(env);
    PlannerConfig cfg;
    cfg.variant = PlannerVariant::residual;
    cfg.samples = 2048;
    cfg.horizon = 4;
    cfg.noise_std = {0.6};
    cfg.lambda = alpha;
    cfg.gamma = gamma;
    cfg.omega_prime = omega_prime;
    Planner planner(cfg, env, tab, model, 0xC5);

    std::vector<int> histogram(static_cast<std::size_t>(ag.axes[0].n), 0);
    for (int i = 0; i < 2000; ++i) {
        PlanResult pr = planner.plan(x0);
        Action u = env.clamp_action(pr.sequence[0]);
        int cell = em.action_grid.snap(u);
        ++histogram[static_cast<std::size_t>(cell)];
    }
    int modal = 0;
    for (std::size_t k = 1; k < histogram.size(); ++k)
        if (histogram[k] > histogram[static_cast<std::size_t>(modal)]) modal = static_cast<int>(k);

    Outcome out;
    out.ok = modal == oracle.argmax_cell;
    out.detail = "modal action cell " + std::to_string(modal) + " (" +
                 std::to_string(histogram[static_cast<std::size_t>(modal)]) +
                 "/2000), oracle argmax cell " + std::to_string(oracle.argmax_cell);
    return out;
}

// 6. Variant coincidences on shared noise: residual(omega_prime = 0) vs
// greedy, and valued(terminal = 0) vs guided.
Outcome criterion_6() {
    PointMassEnv env;
    auto prior = point_mass_prior();
    auto model = std::make_shared<TrueDynamicsModel>(env);
    State x0{0.2, -0.1, 0.3, 0.1};
    auto max_diff = [&](PlannerVariant a, PlannerVariant b, double omega_prime_a,
                        std::uint64_t seed, TerminalEstimator term_a) {
        PlannerConfig ca = desk_point_mass_cfg(a);
        ca.omega_prime = omega_prime_a;
        PlannerConfig cb = desk_point_mass_cfg(b);
        Planner pa(ca, env, prior, model, seed, term_a);
        Planner pb(cb, env, prior, model, seed);
        PlanResult ra = pa.plan(x0);
        PlanResult rb = pb.plan(x0);
        double d = 0.0;
        for (std::size_t t = 0; t < ra.sequence.size(); ++t)
            for (std::size_t k = 0; k < ra.sequence[t].size(); ++k)
                d = std::max(d, std::fabs(ra.sequence[t][k] - rb.sequence[t][k]));
        return d;
    };
    double d1 = max_diff(PlannerVariant::residual, PlannerVariant::greedy, 0.0, 7, nullptr);
    double d2 = max_diff(PlannerVariant::valued, PlannerVariant::guided, 0.5, 8,
                         [](const State&) { return 0.0; });
    Outcome out;
    out.ok = d1 <= 1e-12 && d2 <= 1e-12;
    out.detail = "residual(0)-greedy max diff " + fmt_sci(d1, 3) + ", valued(0)-guided max diff " +
                 fmt_sci(d2, 3) + " (tol 1e-12)";
    return out;
}

// 7. Prior recovery: a huge omega_prime makes the receding-horizon loop
// reproduce the prior-mode closed loop.
Outcome criterion_7() {
    PointMassEnv env;
    auto prior = point_mass_prior();
    auto model = std::make_shared<TrueDynamicsModel>(env);
    PlannerConfig cfg = desk_point_mass_cfg(PlannerVariant::residual);
    cfg.samples = 64;
    cfg.omega_prime = 1e9;
    Planner planner(cfg, env, prior, model, 0xC7);
    State x0{0.0, 0.0, 0.1, -0.05};
    EpisodeResult with_planner = run_episode(env, *prior, &planner, x0, 60);
    EpisodeResult prior_only = run_episode(env, *prior, nullptr, x0, 60);
    double max_dev = 0.0;
    for (std::size_t t = 0; t < with_planner.traj.steps.size(); ++t)
        for (int d = 0; d < 2; ++d)
            max_dev = std::max(max_dev, std::fabs(with_planner.traj.steps[t].u[d] -
                                                  prior_only.traj.steps[t].u[d]));
    Outcome out;
    out.ok = max_dev < 1e-3;
    out.detail = "60 steps, max action deviation " + fmt_sci(max_dev, 3) + " (tol 1e-3)";
    return out;
}

// 8. Dynamics pipeline on point-mass: held-out 8-step open-loop error under
// 1e-3 per dimension, and planning on the learned model moves episode total
// reward by under 5% against true dynamics.
Outcome criterion_8() {
    constexpr double kDimTol = 1e-3;
    constexpr double kRelTol = 0.05;
    PointMassEnv env;
    auto prior = point_mass_prior();
    TransitionDataset ds = collect_rollouts(env, *prior, 6000, 0.5, derive_seed(0xC8, 1), 0xC8);

    DynamicsTrainConfig tc;
    tc.hidden = {64, 64};
    tc.activation = "mish";
    tc.window = 8;
    tc.gamma = 0.9;
    tc.lr = 1e-3;
    tc.batch = 32;
    tc.train_steps = 12000;
    tc.holdout_fraction = 0.2;
    tc.seed = 0xC8;
    DynamicsTrainReport rep;
    LearnedDynamics dyn = train_dynamics(env, ds, tc, &rep);
    double worst_dim = 0.0;
    for (double e : rep.holdout_error) worst_dim = std::max(worst_dim, e);

    PlannerConfig cfg = desk_point_mass_cfg(PlannerVariant::residual);
    auto true_model = std::make_shared<TrueDynamicsModel>(env);
    auto learned_model = std::make_shared<LearnedDynamicsModel>(dyn);
    Vec true_totals = episode_totals(env, prior, cfg, true_model, 0x88, 5, 40);
    Vec learned_totals = episode_totals(env, prior, cfg, learned_model, 0x88, 5, 40);
    double mt = mean_of(true_totals), ml = mean_of(learned_totals);
    double rel = std::fabs(ml - mt) / std::fabs(mt);

    Outcome out;
    out.ok = worst_dim < kDimTol && rel < kRelTol;
    out.detail = "worst held-out dim error " + fmt_sci(worst_dim, 3) + " (tol " +
                 fmt_sci(kDimTol, 0) + "), learned-vs-true total " + fmt_fixed(ml, 4) + " vs " +
                 fmt_fixed(mt, 4) + ", rel " + fmt_sci(rel, 3) + " (tol 5e-2)";
    return out;
}

// 9. Car customization trade-off on the committed pinch track: the residual
// planner on a zero-shot learned model cuts off-course steps by at least 80%
// against the pursuit prior without slowing the lap by more than 10%, and one
// few-shot iteration does not regress off-course steps.
Outcome criterion_9() {
    const int kEpisodes = 4;
    const int kSteps = 240;
    CarTrack track = load_track(fixture_path("configs/tracks/pinch.txt"));
    CarEnv env(track, 1.0, 1e4);
    auto track_sp = std::make_shared<const CarTrack>(env.track());
    auto prior = make_pursuit_prior(track_sp, 1.8, 1.0, CarEnv::kWheelbase, {0.12, 0.3});
    auto run_closed_loop = [&](std::shared_ptr<const PlanningModel> model,
                               const PlannerConfig* cfg, std::uint64_t base) {
        long long off = 0, lap = 0;
        std::vector<EpisodeResult> results;
        for (int ep = 0; ep < kEpisodes; ++ep) {
            RngStream reset = RngStream::derived(base, 2 * static_cast<std::uint64_t>(ep));
            State x0 = env.reset(reset);
            std::unique_ptr<Planner> planner;
            if (cfg)
                planner = std::make_unique<Planner>(
                    *cfg, env, prior, model,
                    derive_seed(base, 2 * static_cast<std::uint64_t>(ep) + 1));
            EpisodeResult r = run_episode(env, *prior, planner.get(), x0, kSteps);
            off += r.metrics.off_course_steps;
            lap += r.metrics.lap_steps;
            results.push_back(std::move(r));
        }
        return std::make_tuple(off, lap, std::move(results));
    };

    auto [off_prior, lap_prior, prior_results] = run_closed_loop(nullptr, nullptr, 0xCA);
    (void)prior_results;

    TransitionDataset ds = collect_rollouts(env, *prior, 6000, 0.15, derive_seed(0xCA, 77), 0xCA);
    DynamicsTrainConfig tc;
    tc.hidden = {64, 64};
    tc.activation = "mish";
    tc.window = 8;
    tc.gamma = 0.9;
    tc.lr = 1e-3;
    tc.batch = 32;
    tc.train_steps = 3000;
    tc.finetune_steps = 800;
    tc.holdout_fraction = 0.2;
    tc.seed = 0xCA;
    LearnedDynamics dyn = train_dynamics(env, ds, tc);

    PlannerConfig cfg;
    cfg.variant = PlannerVariant::residual;
    cfg.samples = 128;
    cfg.horizon = 10;
    cfg.noise_std = {0.08, 0.3};
    cfg.lambda = 0.3;
    cfg.gamma = 0.95;
    cfg.omega_prime = 0.02;

    auto model = std::make_shared<LearnedDynamicsModel>(dyn);
    auto [off_zero, lap_zero, zero_results] = run_closed_loop(model, &cfg, 0xCA);

    TransitionDataset new_data;
    new_data.state_dim = env.spec().state_dim;
    new_data.action_dim = env.spec().action_dim;
    new_data.env_hash = 0xCA;
    for (const auto& r : zero_results) {
        std::vector<Vec> xs, us, nxs;
        for (std::size_t t = 0; t < r.traj.steps.size(); ++t) {
            xs.push_back(r.traj.steps[t].x);
            us.push_back(r.traj.steps[t].u);
            nxs.push_back(t + 1 < r.traj.steps.size() ? r.traj.steps[t + 1].x
                                                      : r.traj.final_state);
        }
        new_data.append_episode(xs, us, nxs);
    }
    tc.seed = derive_seed(0xCA, 0xF5);
    finetune_online(dyn, ds, new_data, tc);
    auto model_few = std::make_shared<LearnedDynamicsModel>(dyn);
    auto [off_few, lap_few, few_results] = run_closed_loop(model_few, &cfg, 0xCA);
    (void)lap_few;
    (void)few_results;

    bool cut = static_cast<double>(off_zero) <= 0.2 * static_cast<double>(off_prior);
    bool pace = static_cast<double>(lap_zero) <= 1.1 * static_cast<double>(lap_prior);
    bool few_ok = off_few <= off_zero;
    Outcome out;
    out.ok = off_prior > 0 && cut && pace && few_ok;
    out.detail = "off-course prior " + std::to_string(off_prior) + " -> zero-shot " +
                 std::to_string(off_zero) + " -> few-shot " + std::to_string(off_few) +
                 "; lap steps " + std::to_string(lap_prior) + " -> " + std::to_string(lap_zero);
    return out;
}

// 10. Comparative ordering on the point-mass customization fixtures.
// Leg (a), velocity-limit fixture (1D): the add-on penalty curves sharply
// above the limit, so selection jitter is what separates the variants; the
// residual planner's prior anchor keeps its executed actions tightest and it
// beats both baselines. Leg (b), y-drift fixture (2D): the greedy planner
// ignores the weighted basic reward and falls well behind. Margins are half
// the committed reference-run gaps (reference totals in the comments below);
// each cleared every probed seed base with room to spare.
Outcome criterion_10() {
    const int kEpisodes = 200;
    const int kSteps = 30;

    // leg (a): 1D velocity-limit fixture, reference totals at seed 0xDA:
    // residual 14.9315, greedy 14.4146, guided 14.3391
    constexpr double kMargin1dGreedy = 0.25;
    constexpr double kMargin1dGuided = 0.30;
    PointMass1dEnv env1(1.0, 8.0, 0.6);
    auto prior1 = make_linear_feedback_prior({{0.0, -0.8}}, {0.8}, {0.4});
    auto model1 = std::make_shared<TrueDynamicsModel>(env1);
    auto sweep1 = [&](PlannerVariant v) {
        PlannerConfig cfg;
        cfg.variant = v;
        cfg.samples = 48;
        cfg.horizon = 8;
        cfg.noise_std = {0.3};
        cfg.lambda = 0.3;
        cfg.gamma = 0.95;
        cfg.omega_prime = 0.5;
        return mean_of(episode_totals(env1, prior1, cfg, model1, 0xDA, kEpisodes, kSteps));
    };
    double r1 = sweep1(PlannerVariant::residual);
    double g1 = sweep1(PlannerVariant::greedy);
    double u1 = sweep1(PlannerVariant::guided);

    // leg (b): 2D y-drift fixture, reference totals at seed 0xDB:
    // residual 51.2434, greedy 25.5619
    constexpr double kMargin2dGreedy = 12.0;
    PointMassEnv env2(10.0);
    auto prior2 = point_mass_prior();
    auto model2 = std::make_shared<TrueDynamicsModel>(env2);
    auto sweep2 = [&](PlannerVariant v) {
        PlannerConfig cfg = desk_point_mass_cfg(v);
        return mean_of(episode_totals(env2, prior2, cfg, model2, 0xDB, kEpisodes, kSteps));
    };
    double r2 = sweep2(PlannerVariant::residual);
    double g2 = sweep2(PlannerVariant::greedy);

    Outcome out;
    out.ok = r1 >= g1 + kMargin1dGreedy && r1 >= u1 + kMargin1dGuided && r2 >= g2 + kMargin2dGreedy;
    out.detail = "1d totals: residual " + fmt_fixed(r1, 4) + ", greedy " + fmt_fixed(g1, 4) +
                 ", guided " + fmt_fixed(u1, 4) + " (margins " + fmt_fixed(kMargin1dGreedy, 2) +
                 ", " + fmt_fixed(kMargin1dGuided, 2) + "); 2d totals: residual " +
                 fmt_fixed(r2, 4) + ", greedy " + fmt_fixed(g2, 4) + " (margin " +
                 fmt_fixed(kMargin2dGreedy, 1) + ")";
    return out;
}

// 11. Byte-identical reruns of every command with the same config and seed.
Outcome criterion_11() {
    fs::path tmp = fs::temp_directory_path() / "rmppi_acceptance_c11";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    std::string dir = tmp.string();

    Json doc;
    doc["env"] = {{"id", "point_mass"}, {"omega", 1.0}};
    doc["prior"] = {{"type", "linear_feedback"},
                    {"matrix", {{0, 0, -0.5, 0}, {0, 0, 0, -0.5}}},
                    {"offset", {0.3, 0.0}},
                    {"std", {0.4, 0.4}}};
    doc["dynamics"] = {{"model_file", dir + "/model.rsa"},
                       {"dataset_file", dir + "/data.rsa"},
                       {"n_transitions", 800},
                       {"exploration_sigma", 0.4},
                       {"hidden", {16, 16}},
                       {"activation", "tanh"},
                       {"window", 3},
                       {"lr", 0.003},
                       {"batch", 8},
                       {"train_steps", 60},
                       {"finetune_steps", 20},
                       {"holdout_fraction", 0.25}};
    doc["planner"] = {{"variant", "residual"}, {"samples", 12},      {"horizon", 3},
                      {"noise_std", {0.3, 0.3}}, {"lambda", 0.5},    {"gamma", 0.95},
                      {"omega_prime", 0.1}};
    doc["run"] = {{"n_episodes", 2}, {"n_steps", 8}, {"seed", 31},
                  {"out_dir", dir + "/out"}, {"iterations", 1}};
    doc["oracle"] = {{"fixtures", {fixture_path("configs/oracle/chain_pass.txt"),
                                   fixture_path("configs/oracle/mismatch_control.txt")}},
                     {"random_trials", 2},
                     {"report_file", dir + "/oracle_report.txt"}};
    ExperimentConfig cfg = parse_config(doc);

    std::vector<std::string> mismatches;
    auto rerun_identical = [&](const char* what, auto command,
                               std::initializer_list<std::string> files) {
        command();
        std::map<std::string, std::string> first;
        for (const std::string& f : files) first[f] = slurp(f);
        command();
        for (const std::string& f : files)
            if (slurp(f) != first[f]) mismatches.push_back(std::string(what) + ":" + f);
    };

    rerun_identical("train-dynamics", [&] { cmd_train_dynamics(cfg); },
                    {dir + "/model.rsa", dir + "/data.rsa", dir + "/out/train_report.txt",
                     dir + "/out/manifest.json"});
    rerun_identical("run", [&] { cmd_run(cfg); },
                    {dir + "/out/metrics.txt", dir + "/out/ep_000.txt", dir + "/out/ep_001.txt"});
    rerun_identical("fewshot", [&] { cmd_fewshot(cfg); },
                    {dir + "/out/metrics.txt", dir + "/out/model_fewshot.rsa"});
    rerun_identical("oracle-check", [&] { cmd_oracle_check(cfg); }, {dir + "/oracle_report.txt"});

    Outcome out;
    out.ok = mismatches.empty();
    out.detail = "4 commands rerun";
    for (const auto& m : mismatches) out.detail += " DIFFERS " + m;
    if (out.ok) out.detail += ", all outputs byte-identical";
    return out;
}

struct Criterion {
    int id;
    const char* label;
    double time_limit_s;
    Outcome (*fn)();
};

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <source_dir>\n");
        return 2;
    }
    g_source_dir = argv[1];

    const Criterion criteria[] = {
        {1, "sequence-distribution identity", 10.0, criterion_1},
        {2, "augmented-mdp equivalence", 10.0, criterion_2},
        {3, "softmax weight algebra", 10.0, criterion_3},
        {4, "mlp gradient checks", 30.0, criterion_4},
        {5, "planner-vs-oracle modal action", 120.0, criterion_5},
        {6, "variant coincidences", 10.0, criterion_6},
        {7, "prior recovery at huge omega_prime", 30.0, criterion_7},
        {8, "dynamics pipeline accuracy", 300.0, criterion_8},
        {9, "car off-course trade-off", 600.0, criterion_9},
        {10, "variant ordering", 600.0, criterion_10},
        {11, "rerun determinism", 600.0, criterion_11},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.fn();
        } catch (const std::exception& e) {
            out.ok = false;
            out.detail = std::string("exception: ") + e.what();
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        bool in_time = secs <= c.time_limit_s;
        bool ok = out.ok && in_time;
        if (!ok) ++failures;
        std::printf("[%s] criterion %2d %s: %s (%.2fs, limit %.0fs)\n", ok ? "PASS" : "FAIL", c.id,
                    c.label, out.detail.c_str(), secs, c.time_limit_s);
        std::fflush(stdout);
    }
    if (failures) {
        std::printf("acceptance: %d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("acceptance: all 11 criteria passed\n");
    return 0;
}
