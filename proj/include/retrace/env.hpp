#pragma once

#include "retrace/dataset.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace retrace {

enum class Task {
    CurtainOpen,
    GapCover,
};

const char* task_name(Task task);
Task task_from_name(const std::string& name);

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

// Desk-scale surrogate world: a planar kinematic robot with a 3-dof arm
// offset and a chain of curtain rings sliding on an overhead rail. Rings not
// held by the gripper are constrained to the rail line; fabric between
// consecutive rings limits their separation.
struct WorldState {
    Task task = Task::CurtainOpen;
    double base_x = 0.0, base_y = 0.0, heading = 0.0;
    double arm_dx = 0.0, arm_dy = 0.0, arm_dz = 0.0; // base frame
    bool gripper_closed = false;
    int grasped = -1; // particle index held by the gripper, -1 if none
    std::vector<Vec3> particles;
    // scene geometry (world frame)
    double rail_x0 = 0.0, rail_x1 = 0.0, rail_y = 0.0, rail_z = 0.0;
    double gap_x0 = 0.0, gap_x1 = 0.0; // doorway extents for curtain-open
    int handle = 0;                    // designated handle particle
    double rest_length = 0.0, max_strain = 0.0;
    double color_code = 0.0;
    int step_count = 0;

    Vec3 arm_tip() const;
};

struct EnvConfig {
    Task task = Task::CurtainOpen;

    // start-pose randomization (distances from the rail plane)
    double dist_min = 1.0, dist_max = 3.0;
    double lateral_max = 2.0;
    double angle_dev_deg = 15.0;

    // geometry
    int particles = 16;
    double curtain_width = 1.10;
    double gap_width = 1.10; // doorway width; the gap between objects for gap-cover
    double max_strain = 0.25;
    double rail_z = 1.20;

    // material
    bool continuous_color = false; // demo collection uses 5 discrete colors
    bool randomize_elastic = false;

    // robot
    double body_step = 0.10;
    double turn_step_deg = 10.0;
    double hand_step = 0.05;
    double grasp_radius = 0.08;
    double clear_radius = 0.30;
    double arm_dx_min = 0.10, arm_dx_max = 0.80;
    double arm_dy_min = -0.60, arm_dy_max = 0.60;
    double arm_dz_min = 0.10, arm_dz_max = 1.40;
    double arm_home_dx = 0.30, arm_home_dy = 0.0, arm_home_dz = 0.50;
    double arena_half = 4.0;

    int solver_iters = 8;

    // observation model
    int feature_dim = 64;
    std::uint64_t feature_seed = 42;
    double noise_scale = 0.01;
    double fov_half_deg = 60.0;
    double fov_range = 4.0;

    int max_steps = 500;
};

EnvConfig default_config(Task task);

// Fixed seeded lift from the intrinsic scene vector to the retrieval feature
// space, emulating a frozen pretrained encoder.
struct ObservationModel {
    int dim = 0;
    int intrinsic_dim = 0;
    std::uint64_t seed = 0;
    double noise_scale = 0.0;
    double fov_half_deg = 60.0;
    double fov_range = 4.0;
    std::vector<double> lift; // dim x intrinsic_dim, row-major
};

int intrinsic_dim(int particles);
ObservationModel make_observation_model(const EnvConfig& config);

WorldState reset(const EnvConfig& config, std::uint64_t seed);
WorldState env_step(const WorldState& state, int action, const EnvConfig& config);

// Egocentric scene encoding before the lift: landmarks and particles in the
// base frame, heading relative to the rail axis, arm offset, gripper flag
// and material code. Particles outside the frontal field of view or beyond
// range contribute zeros.
std::vector<double> intrinsic_vector(const WorldState& state, const ObservationModel& model);

FeatureVector observe(const WorldState& state, const ObservationModel& model);

bool success(const WorldState& state);

// Deterministic finite-state expert; nullopt once the task is done. Throws
// DataError when handed an initial state outside the collection ranges.
class ScriptedExpert {
public:
    ScriptedExpert(const EnvConfig& config, std::uint64_t seed)
        : config_(config), seed_(seed) {}

    std::optional<int> act(const WorldState& state) const;

private:
    EnvConfig config_;
    std::uint64_t seed_;
};

DemoDataset gen_demos(Task task, int n, const EnvConfig& config, std::uint64_t seed);

// Single closed-loop rollout used by both demo generation and evaluation.
struct Rollout {
    bool succeeded = false;
    int steps = 0;
    WorldState final_state;
};

} // namespace retrace
