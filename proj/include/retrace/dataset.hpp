#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace retrace {

// Retrieval-space state. Entries must be finite and the vector non-zero.
using FeatureVector = std::vector<double>;

constexpr int kActionCount = 14;

// One demonstration record. `action` is the command the expert executed at
// this state (for the first step of a trajectory it is the episode's first
// command). Timesteps are 1-based.
struct Step {
    int t = 0;
    int action = 0;
    FeatureVector feature;
};

struct DemoTrajectory {
    std::string traj_id;
    std::string task_tag;
    std::vector<Step> steps;

    int length() const { return static_cast<int>(steps.size()); }
};

struct DemoDataset {
    std::vector<DemoTrajectory> trajectories;
    int feature_dim = 0;
    int action_count = kActionCount;
    // Free-form header metadata (observation model seed, task, ...), kept in
    // file order so save/load round-trips byte-identically.
    std::vector<std::pair<std::string, std::string>> meta;

    std::size_t total_steps() const;
    const std::string* meta_value(const std::string& key) const;
};

// Reference to one step of one trajectory, by index into the dataset.
struct EntryRef {
    int traj = 0; // index into dataset.trajectories
    int step = 0; // 0-based index into trajectory.steps

    friend bool operator==(const EntryRef&, const EntryRef&) = default;
};

// Flattened view of every demonstration step, features laid out densely for
// scanning. Order is (trajectory position, timestep), so deterministic.
struct RetrievalBatch {
    int dim = 0;
    std::vector<EntryRef> refs;
    std::vector<double> features; // refs.size() * dim, row-major

    std::size_t size() const { return refs.size(); }
    const double* feature(std::size_t i) const { return features.data() + i * dim; }
};

// Throws DataError when an invariant does not hold (empty trajectory,
// mixed dimensions, non-consecutive timesteps, bad action ids, non-finite
// or zero-norm features, duplicate trajectory ids).
void validate_dataset(const DemoDataset& dataset);

DemoDataset load_dataset(const std::string& path);
void save_dataset(const DemoDataset& dataset, const std::string& path);

RetrievalBatch flatten(const DemoDataset& dataset);

const Step& resolve(const DemoDataset& dataset, const EntryRef& ref);

} // namespace retrace
