#pragma once

#include "retrace/dataset.hpp"
#include "retrace/reachability.hpp"
#include "retrace/similarity.hpp"
#include "retrace/transport.hpp"

#include <optional>

namespace retrace {

// The robot's online visited state sequence (features only, no actions).
struct LiveTrajectory {
    std::vector<FeatureVector> steps;

    const FeatureVector& current() const { return steps.back(); }
};

struct SubgoalParams {
    int k = 10;
    double filter_quantile = 0.5;
    std::optional<double> filter_absolute; // overrides the quantile rule
    int live_window = 50;                  // most recent states entering Eq. 3
    GroundMetric metric = GroundMetric::SquaredEuclidean;
};

struct CandidateAudit {
    EntryRef entry;
    double similarity = 0.0;
    double wasserstein = 0.0;
    double reach_value = 0.0;
    int node = -1;
    bool filtered = false; // removed by threshold or visited-node exclusion
};

struct SubgoalDecision {
    EntryRef chosen;
    std::vector<CandidateAudit> candidates;
    bool fallback_used = false;
    double threshold = 0.0;
    int live_node = -1;

    const CandidateAudit& chosen_audit() const;
};

// Full sub-goal retrieval: k-NN state identification around the last live
// state, Wasserstein prefix filtering against the live history, visited-node
// exclusion, then argmax forward reachability (ties: similarity, then lower
// (traj_id, t)). When the filter empties the set the decision falls back to
// the highest-similarity raw candidate and is flagged.
// Per-candidate scoring runs OpenMP-parallel; select_subgoal_serial is the
// reference kept for testing.
SubgoalDecision select_subgoal(const LiveTrajectory& live, const RetrievalBatch& batch,
                               const DemoDataset& dataset, const StateGraph& graph,
                               const ValueTable& table, const SubgoalParams& params);
SubgoalDecision select_subgoal_serial(const LiveTrajectory& live, const RetrievalBatch& batch,
                                      const DemoDataset& dataset, const StateGraph& graph,
                                      const ValueTable& table, const SubgoalParams& params);

// One-line audit record for episode logs.
std::string decision_to_text(const SubgoalDecision& decision, const DemoDataset& dataset);

} // namespace retrace
