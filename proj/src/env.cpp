#include "retrace/env.hpp"

#include "retrace/error.hpp"
#include "retrace/policy.hpp"
#include "retrace/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <utility>

namespace retrace {

namespace {

constexpr double kPi = 3.14159265358979323846;

double deg2rad(double d) { return d * kPi / 180.0; }

double wrap_angle(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a <= -kPi) a += 2.0 * kPi;
    return a;
}

double dist3(const Vec3& a, const Vec3& b) {
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                     (a.z - b.z) * (a.z - b.z));
}

} // namespace

const char* task_name(Task task) {
    return task == Task::CurtainOpen ? "curtain_open" : "gap_cover";
}

Task task_from_name(const std::string& name) {
    if (name == "curtain_open") return Task::CurtainOpen;
    if (name == "gap_cover") return Task::GapCover;
    throw DataError("unknown task: " + name);
}

Vec3 WorldState::arm_tip() const {
    const double c = std::cos(heading), s = std::sin(heading);
    return Vec3{base_x + c * arm_dx - s * arm_dy, base_y + s * arm_dx + c * arm_dy, arm_dz};
}

EnvConfig default_config(Task task) {
    EnvConfig cfg;
    cfg.task = task;
    if (task == Task::CurtainOpen) {
        cfg.dist_min = 1.0;
        cfg.dist_max = 3.0;
        cfg.lateral_max = 2.0;
        cfg.angle_dev_deg = 15.0;
        cfg.curtain_width = 1.10;
        cfg.gap_width = 1.10; // doorway == curtain span
    } else {
        cfg.dist_min = 1.0;
        cfg.dist_max = 2.0;
        cfg.lateral_max = 0.8;
        cfg.angle_dev_deg = 0.0;
        cfg.curtain_width = 1.20;
        cfg.gap_width = 1.00;
    }
    return cfg;
}

int intrinsic_dim(int particles) {
    // 5 landmarks x2 + heading x2 + arm x3 + gripper + color + particles x3
    return 17 + 3 * particles;
}

ObservationModel make_observation_model(const EnvConfig& config) {
    ObservationModel model;
    model.dim = config.feature_dim;
    model.intrinsic_dim = intrinsic_dim(config.particles);
    model.seed = config.feature_seed;
    model.noise_scale = config.noise_scale;
    model.fov_half_deg = config.fov_half_deg;
    model.fov_range = config.fov_range;
    model.lift.resize(static_cast<std::size_t>(model.dim) * model.intrinsic_dim);
    SplitMix64 rng(config.feature_seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(model.intrinsic_dim));
    for (double& v : model.lift) v = rng.normal() * scale;
    return model;
}

WorldState reset(const EnvConfig& config, std::uint64_t seed) {
    if (config.particles < 2)
        throw DataError("reset: need at least two curtain particles");
    WorldState s;
    s.task = config.task;
    s.rail_y = 0.0;
    s.rail_z = config.rail_z;
    s.max_strain = config.max_strain;
    s.rest_length = config.curtain_width / static_cast<double>(config.particles - 1);

    SplitMix64 rng(seed);
    if (config.randomize_elastic) {
        s.rest_length *= rng.uniform(0.97, 1.08);
        s.max_strain *= rng.uniform(0.85, 1.30);
    }
    const double width = s.rest_length * static_cast<double>(config.particles - 1);

    if (config.task == Task::CurtainOpen) {
        s.gap_x0 = -config.gap_width / 2.0; // doorway
        s.gap_x1 = config.gap_width / 2.0;
        s.rail_x0 = s.gap_x0;
        s.rail_x1 = s.gap_x1 + width + 0.25;
        s.handle = 0;
        s.particles.resize(config.particles);
        for (int i = 0; i < config.particles; ++i)
            s.particles[i] = Vec3{s.gap_x0 + i * s.rest_length, s.rail_y, s.rail_z};
        double dist = rng.uniform(config.dist_min, config.dist_max);
        double lat = rng.uniform(-config.lateral_max, config.lateral_max);
        double dev = rng.uniform(-deg2rad(config.angle_dev_deg), deg2rad(config.angle_dev_deg));
        s.base_x = lat;
        s.base_y = s.rail_y - dist;
        s.heading = wrap_angle(kPi / 2.0 + dev);
    } else {
        s.gap_x0 = -config.gap_width / 2.0;
        s.gap_x1 = config.gap_width / 2.0;
        if (width < config.gap_width + 0.08)
            throw DataError("reset: infeasible geometry, gap wider than curtain reach");
        s.rail_x0 = s.gap_x0 - 0.1 - width - 0.1;
        s.rail_x1 = s.gap_x1 + 0.30;
        s.handle = config.particles - 1;
        s.particles.resize(config.particles);
        const double tail = s.gap_x0 - 0.1 - width;
        for (int i = 0; i < config.particles; ++i)
            s.particles[i] = Vec3{tail + i * s.rest_length, s.rail_y, s.rail_z};
        double dist = rng.uniform(config.dist_min, config.dist_max);
        double lat = rng.uniform(-config.lateral_max, config.lateral_max);
        double dev = config.angle_dev_deg > 0.0
                         ? rng.uniform(-deg2rad(config.angle_dev_deg), deg2rad(config.angle_dev_deg))
                         : 0.0;
        s.base_x = lat;
        s.base_y = s.rail_y - dist;
        s.heading = wrap_angle(kPi / 2.0 + dev);
    }

    if (config.continuous_color) {
        s.color_code = rng.uniform();
    } else {
        s.color_code = 0.25 * static_cast<double>(rng.uniform_int(5));
    }

    s.arm_dx = config.arm_home_dx;
    s.arm_dy = config.arm_home_dy;
    s.arm_dz = config.arm_home_dz;
    return s;
}

namespace {

// Quasi-static relaxation: grasp pin, stretch projection toward rest length,
// rail projection, then a hard sweep that enforces the strain cap exactly.
void relax_curtain(WorldState& s, const EnvConfig& config) {
    const int P = static_cast<int>(s.particles.size());
    const double rest = s.rest_length;
    const double cap = rest * (1.0 + s.max_strain);
    const Vec3 tip = s.arm_tip();

    if (s.grasped >= 0) {
        // grasp slips when no rail point is within fabric reach of the tip
        double rx = std::clamp(tip.x, s.rail_x0, s.rail_x1);
        Vec3 rail_pt{rx, s.rail_y, s.rail_z};
        if (dist3(tip, rail_pt) > cap) s.grasped = -1;
    }

    auto project_rail = [&](int i) {
        s.particles[i].x = std::clamp(s.particles[i].x, s.rail_x0, s.rail_x1);
        s.particles[i].y = s.rail_y;
        s.particles[i].z = s.rail_z;
    };

    for (int iter = 0; iter < config.solver_iters; ++iter) {
        if (s.grasped >= 0) s.particles[s.grasped] = tip;
        for (int i = 0; i + 1 < P; ++i) {
            Vec3& a = s.particles[i];
            Vec3& b = s.particles[i + 1];
            double d = dist3(a, b);
            if (d <= rest || d == 0.0) continue;
            double corr = (d - rest) / d;
            double wx = (b.x - a.x) * corr, wy = (b.y - a.y) * corr, wz = (b.z - a.z) * corr;
            if (i == s.grasped) {
                b.x -= wx; b.y -= wy; b.z -= wz;
            } else if (i + 1 == s.grasped) {
                a.x += wx; a.y += wy; a.z += wz;
            } else {
                a.x += 0.5 * wx; a.y += 0.5 * wy; a.z += 0.5 * wz;
                b.x -= 0.5 * wx; b.y -= 0.5 * wy; b.z -= 0.5 * wz;
            }
        }
        for (int i = 0; i < P; ++i)
            if (i != s.grasped) project_rail(i);
    }

    // exact strain cap, swept outward from the pinned particle
    if (s.grasped >= 0) s.particles[s.grasped] = tip;
    const int pin = s.grasped >= 0 ? s.grasped : 0;
    auto cap_neighbor = [&](int from, int to) {
        const Vec3& a = s.particles[from];
        Vec3& b = s.particles[to];
        if (to == s.grasped) return;
        // b lives on the rail line; bound its x so the 3d gap stays <= cap
        double h2 = (s.rail_y - a.y) * (s.rail_y - a.y) + (s.rail_z - a.z) * (s.rail_z - a.z);
        double r2 = cap * cap - h2;
        double r = r2 > 0.0 ? std::sqrt(r2) : 0.0;
        b.x = std::clamp(b.x, a.x - r, a.x + r);
        project_rail(to);
    };
    for (int i = pin; i + 1 < P; ++i) cap_neighbor(i, i + 1);
    for (int i = pin; i > 0; --i) cap_neighbor(i, i - 1);
}

} // namespace

WorldState env_step(const WorldState& state, int action, const EnvConfig& config) {
    if (action < 0 || action >= kActionCount)
        throw DataError("env_step: invalid action " + std::to_string(action));
    WorldState s = state;
    const double c = std::cos(s.heading), sn = std::sin(s.heading);
    auto move_base = [&](double fx, double fy) {
        s.base_x += c * fx - sn * fy;
        s.base_y += sn * fx + c * fy;
        s.base_x = std::clamp(s.base_x, -config.arena_half, config.arena_half);
        s.base_y = std::clamp(s.base_y, -config.arena_half, config.arena_half);
    };

    switch (action) {
        case kBodyForward: move_base(config.body_step, 0.0); break;
        case kBodyLeft: move_base(0.0, config.body_step); break;
        case kBodyRight: move_base(0.0, -config.body_step); break;
        case kBodyBackward: move_base(-config.body_step, 0.0); break;
        case kTurnLeft: s.heading = wrap_angle(s.heading + deg2rad(config.turn_step_deg)); break;
        case kTurnRight: s.heading = wrap_angle(s.heading - deg2rad(config.turn_step_deg)); break;
        case kHandForward: s.arm_dx += config.hand_step; break;
        case kHandBackward: s.arm_dx -= config.hand_step; break;
        case kHandLeft: s.arm_dy += config.hand_step; break;
        case kHandRight: s.arm_dy -= config.hand_step; break;
        case kHandUp: s.arm_dz += config.hand_step; break;
        case kHandDown: s.arm_dz -= config.hand_step; break;
        case kGrasp:
            if (!s.gripper_closed) {
                Vec3 tip = s.arm_tip();
                if (dist3(tip, s.particles[s.handle]) <= config.grasp_radius) {
                    s.gripper_closed = true;
                    s.grasped = s.handle;
                }
                // grasp on nothing: no state change
            }
            break;
        case kRelease:
            s.gripper_closed = false;
            s.grasped = -1;
            break;
        default: break;
    }
    s.arm_dx = std::clamp(s.arm_dx, config.arm_dx_min, config.arm_dx_max);
    s.arm_dy = std::clamp(s.arm_dy, config.arm_dy_min, config.arm_dy_max);
    s.arm_dz = std::clamp(s.arm_dz, config.arm_dz_min, config.arm_dz_max);

    relax_curtain(s, config);
    s.step_count = state.step_count + 1;
    return s;
}

std::vector<double> intrinsic_vector(const WorldState& state, const ObservationModel& model) {
    std::vector<double> v;
    v.reserve(model.intrinsic_dim);
    const double c = std::cos(state.heading), sn = std::sin(state.heading);
    auto to_base = [&](double wx, double wy) {
        double dx = wx - state.base_x, dy = wy - state.base_y;
        return std::pair<double, double>{c * dx + sn * dy, -sn * dx + c * dy};
    };
    auto push_landmark = [&](double wx, double wy) {
        auto [bx, by] = to_base(wx, wy);
        v.push_back(bx);
        v.push_back(by);
    };
    push_landmark(0.5 * (state.rail_x0 + state.rail_x1), state.rail_y);
    push_landmark(state.rail_x0, state.rail_y);
    push_landmark(state.rail_x1, state.rail_y);
    push_landmark(state.gap_x0, state.rail_y);
    push_landmark(state.gap_x1, state.rail_y);
    v.push_back(c);
    v.push_back(sn);
    v.push_back(state.arm_dx);
    v.push_back(state.arm_dy);
    v.push_back(state.arm_dz);
    v.push_back(state.gripper_closed ? 1.0 : 0.0);
    v.push_back(state.color_code);

    const double fov = deg2rad(model.fov_half_deg);
    for (const auto& p : state.particles) {
        auto [bx, by] = to_base(p.x, p.y);
        double range = std::sqrt(bx * bx + by * by);
        bool visible = range <= model.fov_range && std::abs(std::atan2(by, bx)) <= fov;
        if (visible) {
            v.push_back(bx);
            v.push_back(by);
            v.push_back(p.z);
        } else {
            v.push_back(0.0);
            v.push_back(0.0);
            v.push_back(0.0);
        }
    }
    return v;
}

FeatureVector observe(const WorldState& state, const ObservationModel& model) {
    std::vector<double> v = intrinsic_vector(state, model);
    FeatureVector out(model.dim, 0.0);
    for (int i = 0; i < model.dim; ++i) {
        const double* row = model.lift.data() + static_cast<std::size_t>(i) * model.intrinsic_dim;
        double acc = 0.0;
        for (int j = 0; j < model.intrinsic_dim; ++j) acc += row[j] * v[j];
        out[i] = acc;
    }
    if (model.noise_scale > 0.0) {
        // noise is a pure function of the scene encoding, so identical states
        // observe identically and rigid translations stay invariant
        std::uint64_t h = model.seed;
        for (double x : v) h = hash_double(h, x);
        SplitMix64 rng(h);
        for (double& x : out) x += rng.uniform(-model.noise_scale, model.noise_scale);
    }
    return out;
}

bool success(const WorldState& state) {
    if (state.task == Task::CurtainOpen) {
        if (state.base_y <= state.rail_y) return false;
        for (const auto& p : state.particles) {
            double d = std::hypot(p.x - state.base_x, p.y - state.base_y);
            if (d < 0.30) return false;
        }
        return true;
    }
    double min_x = state.particles.front().x, max_x = min_x;
    for (const auto& p : state.particles) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
    }
    return min_x <= state.gap_x0 && max_x >= state.gap_x1 && !state.gripper_closed;
}

// --- scripted expert ---------------------------------------------------------

namespace {

struct BaseFrameErr {
    double x, y;
};

BaseFrameErr world_to_base(const WorldState& s, double wx, double wy) {
    const double c = std::cos(s.heading), sn = std::sin(s.heading);
    return {c * wx + sn * wy, -sn * wx + c * wy};
}

// Body move that most reduces the distance from `from` to the world target.
int greedy_body_move(const WorldState& s, double from_x, double from_y, double tx, double ty,
                     double step) {
    const double c = std::cos(s.heading), sn = std::sin(s.heading);
    struct Option {
        int action;
        double dx, dy;
    };
    const Option options[4] = {
        {kBodyForward, c * step, sn * step},
        {kBodyLeft, -sn * step, c * step},
        {kBodyRight, sn * step, -c * step},
        {kBodyBackward, -c * step, -sn * step},
    };
    int best = options[0].action;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& o : options) {
        double d = std::hypot(from_x + o.dx - tx, from_y + o.dy - ty);
        if (d < best_d) {
            best_d = d;
            best = o.action;
        }
    }
    return best;
}

double curtain_min_x(const WorldState& s) {
    double m = s.particles.front().x;
    for (const auto& p : s.particles) m = std::min(m, p.x);
    return m;
}

double curtain_max_x(const WorldState& s) {
    double m = s.particles.front().x;
    for (const auto& p : s.particles) m = std::max(m, p.x);
    return m;
}

// largest-axis hand move toward a base-frame arm target, half-step deadband
std::optional<int> hand_toward(const WorldState& s, double tdx, double tdy, double tdz,
                               double step) {
    double ex = tdx - s.arm_dx, ey = tdy - s.arm_dy, ez = tdz - s.arm_dz;
    double ax = std::abs(ex), ay = std::abs(ey), az = std::abs(ez);
    const double dead = step / 2.0;
    if (ax >= ay && ax >= az && ax > dead) return ex > 0 ? kHandForward : kHandBackward;
    if (ay >= az && ay > dead) return ey > 0 ? kHandLeft : kHandRight;
    if (az > dead) return ez > 0 ? kHandUp : kHandDown;
    return std::nullopt;
}

} // namespace

std::optional<int> ScriptedExpert::act(const WorldState& s) const {
    const EnvConfig& cfg = config_;
    if (success(s)) return std::nullopt;

    if (s.step_count == 0) {
        // collection-range sanity; generous slack so wider evaluation
        // profiles still drive
        double dist = s.rail_y - s.base_y;
        if (dist < cfg.dist_min - 0.3 || dist > cfg.dist_max + 0.6 ||
            std::abs(s.base_x) > cfg.lateral_max + 0.5)
            throw DataError("scripted expert: initial pose outside collection range");
    }

    // seeded micro-jitter for demo diversity, skipped while holding fabric
    if (s.grasped < 0 && s.step_count > 0 && s.step_count % 25 == 24) {
        SplitMix64 rng(hash_mix(seed_, static_cast<std::uint64_t>(s.step_count)));
        static const int jitter[6] = {kHandUp,   kHandDown, kHandLeft,
                                      kHandRight, kTurnLeft, kTurnRight};
        return jitter[rng.uniform_int(6)];
    }

    const Vec3 tip = s.arm_tip();
    const Vec3 handle = s.particles[s.handle];
    const double face = kPi / 2.0;
    const double heading_err = wrap_angle(s.heading - face);

    const bool parked = s.task == Task::CurtainOpen &&
                        curtain_min_x(s) >= s.gap_x1 + 0.15;
    const bool covered = s.task == Task::GapCover && curtain_min_x(s) <= s.gap_x0 - 0.02 &&
                         curtain_max_x(s) >= s.gap_x1 + 0.02;

    if (s.grasped >= 0) {
        // dragging: release when the task-side condition is met, otherwise
        // keep the tip near the rail plane and haul along +x
        if (s.task == Task::CurtainOpen && curtain_min_x(s) >= s.gap_x1 + 0.17) return kRelease;
        if (covered) return kRelease;
        if (std::abs(tip.y - s.rail_y) > 0.025) {
            auto err = world_to_base(s, 0.0, s.rail_y - tip.y);
            if (std::abs(err.x) >= std::abs(err.y))
                return err.x > 0 ? kHandForward : kHandBackward;
            return err.y > 0 ? kHandLeft : kHandRight;
        }
        double target_x = s.task == Task::CurtainOpen
                              ? s.gap_x1 + 0.17 + (handle.x - curtain_min_x(s)) + 0.05
                              : s.gap_x1 + 0.10;
        target_x = std::min(target_x, s.rail_x1 - 0.03);
        return greedy_body_move(s, tip.x, tip.y, target_x, tip.y, cfg.body_step);
    }

    if (s.gripper_closed) return kRelease; // lost the fabric mid-drag

    if (s.task == Task::GapCover && covered) return std::nullopt;

    if (s.task == Task::CurtainOpen && parked) {
        // stow the arm, line up with the doorway, walk through
        if (auto mv = hand_toward(s, cfg.arm_home_dx, cfg.arm_home_dy, cfg.arm_home_dz,
                                  cfg.hand_step))
            return *mv;
        if (std::abs(heading_err) > deg2rad(12.0))
            return heading_err > 0 ? kTurnRight : kTurnLeft;
        const double cross_x = 0.5 * (s.gap_x0 + s.gap_x1);
        if (std::abs(s.base_x - cross_x) > 0.2 || s.base_y < s.rail_y - 0.6)
            return greedy_body_move(s, s.base_x, s.base_y, cross_x, s.rail_y - 0.5,
                                    cfg.body_step);
        return greedy_body_move(s, s.base_x, s.base_y, cross_x, s.rail_y + 0.45, cfg.body_step);
    }

    // approach and grasp the handle
    if (std::abs(heading_err) > deg2rad(12.0))
        return heading_err > 0 ? kTurnRight : kTurnLeft;
    const double pre_x = handle.x, pre_y = s.rail_y - 0.45;
    if (std::hypot(s.base_x - pre_x, s.base_y - pre_y) > 0.12)
        return greedy_body_move(s, s.base_x, s.base_y, pre_x, pre_y, cfg.body_step);

    double err3 = dist3(tip, handle);
    if (err3 <= 0.045) return kGrasp;
    auto want = world_to_base(s, handle.x - s.base_x, handle.y - s.base_y);
    if (auto mv = hand_toward(s, want.x, want.y, handle.z, cfg.hand_step)) return *mv;
    return kGrasp; // within the deadband everywhere: close enough
}

DemoDataset gen_demos(Task task, int n, const EnvConfig& config, std::uint64_t seed) {
    if (n < 1)
        throw DataError("gen_demos: n must be >= 1");
    ObservationModel model = make_observation_model(config);
    DemoDataset dataset;
    dataset.feature_dim = config.feature_dim;
    dataset.meta.emplace_back("task", task_name(task));
    dataset.meta.emplace_back("lift_seed", std::to_string(config.feature_seed));
    dataset.meta.emplace_back("noise_scale", std::to_string(config.noise_scale));
    dataset.meta.emplace_back("particles", std::to_string(config.particles));
    dataset.meta.emplace_back("demo_seed", std::to_string(seed));

    for (int i = 0; i < n; ++i) {
        std::uint64_t ep_seed = hash_mix(seed, static_cast<std::uint64_t>(i));
        WorldState state = reset(config, ep_seed);
        ScriptedExpert expert(config, ep_seed);
        DemoTrajectory traj;
        char id[32];
        std::snprintf(id, sizeof(id), "demo_%03d", i);
        traj.traj_id = id;
        traj.task_tag = task_name(task);
        int t = 0;
        while (!success(state) && t < config.max_steps) {
            auto action = expert.act(state);
            if (!action)
                break;
            Step step;
            step.t = ++t;
            step.action = *action;
            step.feature = observe(state, model);
            traj.steps.push_back(std::move(step));
            state = env_step(state, *action, config);
        }
        if (!success(state))
            throw DataError("gen_demos: expert failed on episode seed " + std::to_string(i));
        dataset.trajectories.push_back(std::move(traj));
    }
    validate_dataset(dataset);
    return dataset;
}

} // namespace retrace
