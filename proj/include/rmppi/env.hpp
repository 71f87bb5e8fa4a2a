#pragma once

// Toy continuous-control environments. All integrate explicit Euler with the
// position-before-velocity update order, clamp actions to bounds before
// dynamics and reward, and keep rewards analytic so tabular oracles can
// evaluate them at cell centers.
//
// Each env carries two rewards:
//   basic_reward  r(x,u)    the task the prior was built for
//   addon_reward  r_R(x,u)  the customization objective added on top

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "rmppi/core.hpp"

namespace rmppi {

using State = Vec;
using Action = Vec;

// Marks a state dimension that lives on a circle of the given period.
// Dynamics learning encodes these as (sin, cos) pairs.
struct PeriodicDim {
    int dim;
    double period;
};

struct EnvSpec {
    std::string id;
    int state_dim = 0;
    int action_dim = 0;
    Vec action_lo;
    Vec action_hi;
    double dt = 0.1;
    double omega = 1.0;  // weight of basic reward in the full-task objective
    int horizon_limit = 200;
    std::vector<std::string> state_cols;   // trajectory header names with units
    std::vector<std::string> action_cols;
    std::vector<PeriodicDim> periodic_dims;
};

inline double wrap_angle(double a) {
    a = std::fmod(a + M_PI, 2.0 * M_PI);
    if (a < 0) a += 2.0 * M_PI;
    return a - M_PI;
}

inline double wrap_periodic(double x, double period) {
    x = std::fmod(x, period);
    if (x < 0) x += period;
    return x;
}

// ---------------------------------------------------------------------------
// Track geometry for the car env.

struct TrackPoint {
    double x;
    double y;
    double half_width;
};

struct TrackQuery {
    double s;         // arc position of the nearest centerline point (m)
    double d_center;  // distance to the centerline (m)
    double d_map;     // track half-width at that point (m)
};

class CarTrack {
public:
    explicit CarTrack(std::vector<TrackPoint> pts) : pts_(std::move(pts)) {
        require(pts_.size() >= 3, "track needs at least 3 waypoints");
        cum_.resize(pts_.size() + 1, 0.0);
        for (std::size_t i = 0; i < pts_.size(); ++i) {
            const auto& a = pts_[i];
            const auto& b = pts_[(i + 1) % pts_.size()];
            double len = std::hypot(b.x - a.x, b.y - a.y);
            require(len > 1e-9, "track has a degenerate segment at waypoint " + std::to_string(i));
            require(a.half_width > 0, "track half_width must be positive at waypoint " + std::to_string(i));
            cum_[i + 1] = cum_[i] + len;
        }
    }

    const std::vector<TrackPoint>& points() const { return pts_; }
    double total_length() const { return cum_.back(); }

    TrackQuery project(double x, double y) const {
        double best_d2 = std::numeric_limits<double>::infinity();
        TrackQuery best{0, 0, 0};
        for (std::size_t i = 0; i < pts_.size(); ++i) {
            const auto& a = pts_[i];
            const auto& b = pts_[(i + 1) % pts_.size()];
            double ex = b.x - a.x, ey = b.y - a.y;
            double seg2 = ex * ex + ey * ey;
            double t = ((x - a.x) * ex + (y - a.y) * ey) / seg2;
            t = clamp(t, 0.0, 1.0);
            double cx = a.x + t * ex, cy = a.y + t * ey;
            double dx = x - cx, dy = y - cy;
            double d2 = dx * dx + dy * dy;
            if (d2 < best_d2) {  // strict: ties keep the lowest segment index
                best_d2 = d2;
                double seg_len = std::sqrt(seg2);
                best.s = cum_[i] + t * seg_len;
                best.d_center = std::sqrt(d2);
                best.d_map = a.half_width + t * (b.half_width - a.half_width);
            }
        }
        return best;
    }

    // Signed arc delta from s0 to s1, wrapped into [-L/2, L/2) so lap
    // crossings do not produce a huge negative progress spike.
    double arc_delta(double s0, double s1) const {
        double L = total_length();
        double d = std::fmod(s1 - s0, L);
        if (d < -L / 2) d += L;
        if (d >= L / 2) d -= L;
        return d;
    }

private:
    std::vector<TrackPoint> pts_;
    std::vector<double> cum_;
};

// Track file: one "x y half_width" triple per line; '#' starts a comment.
// The last waypoint must land back on the first within 1e-6 m and is dropped.
inline CarTrack load_track(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open track file '" + path + "'");
    std::vector<TrackPoint> pts;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ss(line);
        TrackPoint p;
        std::string extra;
        if (!(ss >> p.x >> p.y >> p.half_width) || (ss >> extra))
            throw IoError("track '" + path + "' line " + std::to_string(line_no) +
                          ": expected 'x y half_width'");
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.half_width))
            throw IoError("track '" + path + "' line " + std::to_string(line_no) + ": non-finite value");
        pts.push_back(p);
    }
    require(pts.size() >= 4, "track '" + path + "' needs at least 4 lines (closed loop)");
    double gap = std::hypot(pts.back().x - pts.front().x, pts.back().y - pts.front().y);
    if (gap > 1e-6)
        throw ValidationError("track '" + path + "' is not closed: endpoint gap " + fmt_sci(gap, 3) + " m exceeds 1e-6");
    pts.pop_back();
    return CarTrack(std::move(pts));
}

// Stadium loop: two straights joined by semicircles. Used when a config
// gives no track file.
inline CarTrack make_default_track(double straight = 4.0, double radius = 1.5,
                                   double half_width = 0.35, int arc_points = 24) {
    std::vector<TrackPoint> pts;
    auto push = [&](double x, double y) { pts.push_back({x, y, half_width}); };
    int n_straight = 12;
    for (int i = 0; i < n_straight; ++i)
        push(-straight / 2 + straight * i / n_straight, -radius);
    for (int i = 0; i < arc_points; ++i) {
        double a = -M_PI / 2 + M_PI * i / arc_points;
        push(straight / 2 + radius * std::cos(a), radius * std::sin(a));
    }
    for (int i = 0; i < n_straight; ++i)
        push(straight / 2 - straight * i / n_straight, radius);
    for (int i = 0; i < arc_points; ++i) {
        double a = M_PI / 2 + M_PI * i / arc_points;
        push(-straight / 2 + radius * std::cos(a), radius * std::sin(a));
    }
    return CarTrack(std::move(pts));
}

// ---------------------------------------------------------------------------

class Env {
public:
    virtual ~Env() = default;

    const EnvSpec& spec() const { return spec_; }

    Action clamp_action(const Action& u) const {
        Action c(u);
        for (int i = 0; i < spec_.action_dim; ++i)
            c[i] = clamp(c[i], spec_.action_lo[i], spec_.action_hi[i]);
        return c;
    }

    State step(const State& x, const Action& u) const {
        validate(x, u);
        return step_impl(x, clamp_action(u));
    }

    double basic_reward(const State& x, const Action& u) const {
        validate(x, u);
        return basic_impl(x, clamp_action(u));
    }

    double addon_reward(const State& x, const Action& u) const {
        validate(x, u);
        return addon_impl(x, clamp_action(u));
    }

    virtual State reset(RngStream& rng) const = 0;

protected:
    virtual State step_impl(const State& x, const Action& u) const = 0;
    virtual double basic_impl(const State& x, const Action& u) const = 0;
    virtual double addon_impl(const State& x, const Action& u) const = 0;

    void validate(const State& x, const Action& u) const {
        require(static_cast<int>(x.size()) == spec_.state_dim,
                spec_.id + ": state has dim " + std::to_string(x.size()) + ", expected " +
                    std::to_string(spec_.state_dim));
        require(static_cast<int>(u.size()) == spec_.action_dim,
                spec_.id + ": action has dim " + std::to_string(u.size()) + ", expected " +
                    std::to_string(spec_.action_dim));
        for (int i = 0; i < spec_.state_dim; ++i)
            if (!std::isfinite(x[i]))
                throw ValidationError(spec_.id + ": non-finite state dimension " + std::to_string(i));
        for (int i = 0; i < spec_.action_dim; ++i)
            if (!std::isfinite(u[i]))
                throw ValidationError(spec_.id + ": non-finite action dimension " + std::to_string(i));
    }

    EnvSpec spec_;
};

// Planar double integrator. State (px, py, vx, vy), action = acceleration.
// Basic task: progress along +x with a quadratic control cost. Add-on:
// progress along +y.
class PointMassEnv : public Env {
public:
    explicit PointMassEnv(double omega = 1.0) {
        spec_.id = "point_mass";
        spec_.state_dim = 4;
        spec_.action_dim = 2;
        spec_.action_lo = {-1, -1};
        spec_.action_hi = {1, 1};
        spec_.dt = 0.1;
        spec_.omega = omega;
        spec_.horizon_limit = 200;
        spec_.state_cols = {"px[m]", "py[m]", "vx[m/s]", "vy[m/s]"};
        spec_.action_cols = {"ux[m/s2]", "uy[m/s2]"};
    }

    State reset(RngStream& rng) const override {
        return {0.0, 0.0, 0.05 * rng.normal(), 0.05 * rng.normal()};
    }

protected:
    State step_impl(const State& x, const Action& u) const override {
        double dt = spec_.dt;
        return {x[0] + x[2] * dt, x[1] + x[3] * dt, x[2] + u[0] * dt, x[3] + u[1] * dt};
    }

    // Delta px over dt equals pre-update vx exactly under this update order.
    double basic_impl(const State& x, const Action& u) const override {
        return x[2] - 0.1 * (u[0] * u[0] + u[1] * u[1]);
    }

    double addon_impl(const State& x, const Action&) const override { return x[3]; }
};

// One-dimensional cruise task on a ring road. Position is periodic, velocity
// is drag-limited to [-1, 1], so the whole operating box is compact and a
// 2-D state grid can enumerate it. Add-on: a soft speed limit.
class PointMass1dEnv : public Env {
public:
    static constexpr double kPeriod = 2.0;
    static constexpr double kVMax = 1.0;

    explicit PointMass1dEnv(double omega = 1.0, double addon_coeff = 6.0, double v_limit = 0.6)
        : addon_coeff_(addon_coeff), v_limit_(v_limit) {
        require(addon_coeff >= 0, "point_mass_1d: addon_coeff must be >= 0");
        require(v_limit > 0, "point_mass_1d: v_limit must be > 0");
        spec_.id = "point_mass_1d";
        spec_.state_dim = 2;
        spec_.action_dim = 1;
        spec_.action_lo = {-1};
        spec_.action_hi = {1};
        spec_.dt = 0.1;
        spec_.omega = omega;
        spec_.horizon_limit = 100;
        spec_.state_cols = {"p[m]", "v[m/s]"};
        spec_.action_cols = {"u[m/s2]"};
        spec_.periodic_dims = {{0, kPeriod}};
    }

    double addon_coeff() const { return addon_coeff_; }
    double v_limit() const { return v_limit_; }

    State reset(RngStream& rng) const override {
        return {0.0, clamp(0.6 + 0.05 * rng.normal(), -kVMax, kVMax)};
    }

protected:
    State step_impl(const State& x, const Action& u) const override {
        double dt = spec_.dt;
        double p = wrap_periodic(x[0] + x[1] * dt, kPeriod);
        double v = clamp(x[1] + u[0] * dt, -kVMax, kVMax);
        return {p, v};
    }

    double basic_impl(const State& x, const Action& u) const override {
        return x[1] - 0.1 * u[0] * u[0];
    }

    double addon_impl(const State& x, const Action&) const override {
        double over = x[1] * x[1] - v_limit_ * v_limit_;
        return -addon_coeff_ * (over > 0 ? over : 0.0);
    }

private:
    double addon_coeff_;
    double v_limit_;
};

// Frictionless pendulum, angle measured from upright. Basic task: upright
// regulation. Add-on: keep angular speed down.
class PendulumEnv : public Env {
public:
    static constexpr double kG = 10.0;
    static constexpr double kMass = 1.0;
    static constexpr double kLength = 1.0;
    static constexpr double kSpeedMax = 8.0;

    explicit PendulumEnv(double omega = 1.0) {
        spec_.id = "pendulum";
        spec_.state_dim = 2;
        spec_.action_dim = 1;
        spec_.action_lo = {-2};
        spec_.action_hi = {2};
        spec_.dt = 0.05;
        spec_.omega = omega;
        spec_.horizon_limit = 200;
        spec_.state_cols = {"theta[rad]", "thetadot[rad/s]"};
        spec_.action_cols = {"torque[Nm]"};
        spec_.periodic_dims = {{0, 2.0 * M_PI}};
    }

    State reset(RngStream& rng) const override {
        return {wrap_angle(0.4 * rng.normal()), clamp(0.2 * rng.normal(), -kSpeedMax, kSpeedMax)};
    }

protected:
    State step_impl(const State& x, const Action& u) const override {
        double dt = spec_.dt;
        double acc = (kG / kLength) * std::sin(x[0]) + u[0] / (kMass * kLength * kLength);
        double theta = wrap_angle(x[0] + x[1] * dt);
        double speed = clamp(x[1] + acc * dt, -kSpeedMax, kSpeedMax);
        return {theta, speed};
    }

    double basic_impl(const State& x, const Action& u) const override {
        return -(x[0] * x[0] + 0.1 * x[1] * x[1] + 0.001 * u[0] * u[0]);
    }

    double addon_impl(const State& x, const Action&) const override { return -std::fabs(x[1]); }
};

// Kinematic bicycle on a closed track. State (x, y, heading, speed), action
// (steer, accel). Basic task: arc progress along the centerline with a small
// control cost. Add-on: stay inside the track edges.
class CarEnv : public Env {
public:
    static constexpr double kWheelbase = 0.25;
    static constexpr double kVMax = 2.0;

    CarEnv(CarTrack track, double omega = 1.0, double offcourse_coeff = 1e4)
        : track_(std::move(track)), offcourse_coeff_(offcourse_coeff) {
        require(offcourse_coeff >= 0, "car: offcourse_coeff must be >= 0");
        spec_.id = "car";
        spec_.state_dim = 4;
        spec_.action_dim = 2;
        spec_.action_lo = {-0.5, -1};
        spec_.action_hi = {0.5, 1};
        spec_.dt = 0.1;
        spec_.omega = omega;
        spec_.horizon_limit = 400;
        spec_.state_cols = {"x[m]", "y[m]", "heading[rad]", "speed[m/s]"};
        spec_.action_cols = {"steer[rad]", "accel[m/s2]"};
        spec_.periodic_dims = {{2, 2.0 * M_PI}};
    }

    const CarTrack& track() const { return track_; }
    double offcourse_coeff() const { return offcourse_coeff_; }

    State reset(RngStream& rng) const override {
        const auto& pts = track_.points();
        double hx = pts[1].x - pts[0].x, hy = pts[1].y - pts[0].y;
        double heading = std::atan2(hy, hx);
        return {pts[0].x, pts[0].y, wrap_angle(heading + 0.02 * rng.normal()), 1.0};
    }

protected:
    State step_impl(const State& x, const Action& u) const override {
        double dt = spec_.dt;
        double nx = x[0] + x[3] * std::cos(x[2]) * dt;
        double ny = x[1] + x[3] * std::sin(x[2]) * dt;
        double nh = wrap_angle(x[2] + x[3] / kWheelbase * std::tan(u[0]) * dt);
        double nv = clamp(x[3] + u[1] * dt, 0.0, kVMax);
        return {nx, ny, nh, nv};
    }

    double basic_impl(const State& x, const Action& u) const override {
        State next = step_impl(x, u);
        double s0 = track_.project(x[0], x[1]).s;
        double s1 = track_.project(next[0], next[1]).s;
        return track_.arc_delta(s0, s1) / spec_.dt - 0.01 * (u[0] * u[0] + u[1] * u[1]);
    }

    double addon_impl(const State& x, const Action&) const override {
        TrackQuery q = track_.project(x[0], x[1]);
        double over = q.d_center * q.d_center - q.d_map * q.d_map;
        return -offcourse_coeff_ * (over > 0 ? over : 0.0);
    }

private:
    CarTrack track_;
    double offcourse_coeff_;
};

// Factory used by the harness. `overrides` carries env-specific numeric
// knobs; unknown keys are rejected.
inline std::unique_ptr<Env> make_env(const std::string& id, double omega,
                                     const std::map<std::string, double>& overrides = {},
                                     const std::string& track_file = "") {
    auto reject_unknown = [&](std::initializer_list<const char*> allowed) {
        for (const auto& [k, v] : overrides) {
            bool ok = false;
            for (const char* a : allowed)
                if (k == a) ok = true;
            require(ok, "env '" + id + "': unknown parameter '" + k + "'");
        }
    };
    auto get = [&](const char* k, double dflt) {
        auto it = overrides.find(k);
        return it == overrides.end() ? dflt : it->second;
    };
    if (id == "point_mass") {
        reject_unknown({});
        require(track_file.empty(), "env 'point_mass' takes no track_file");
        return std::make_unique<PointMassEnv>(omega);
    }
    if (id == "point_mass_1d") {
        reject_unknown({"addon_coeff", "v_limit"});
        require(track_file.empty(), "env 'point_mass_1d' takes no track_file");
        return std::make_unique<PointMass1dEnv>(omega, get("addon_coeff", 6.0), get("v_limit", 0.6));
    }
    if (id == "pendulum") {
        reject_unknown({});
        require(track_file.empty(), "env 'pendulum' takes no track_file");
        return std::make_unique<PendulumEnv>(omega);
    }
    if (id == "car") {
        reject_unknown({"offcourse_coeff"});
        CarTrack track = track_file.empty() ? make_default_track() : load_track(track_file);
        return std::make_unique<CarEnv>(std::move(track), omega, get("offcourse_coeff", 1e4));
    }
    throw ValidationError("unknown env id '" + id + "'");
}

}  // namespace rmppi
