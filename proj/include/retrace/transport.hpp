#pragma once

#include "retrace/dataset.hpp"
#include "retrace/similarity.hpp"

namespace retrace {

enum class GroundMetric {
    SquaredEuclidean, // |a-b|^2, the normative choice
    CosineDistance,   // 1 - cosine_similarity
};

double ground_cost(const FeatureVector& a, const FeatureVector& b,
                   GroundMetric metric = GroundMetric::SquaredEuclidean);

// Optimal coupling between two uniform empirical measures. mass is t x n
// row-major; row sums are 1/t and column sums 1/n.
struct TransportPlan {
    int rows = 0;
    int cols = 0;
    std::vector<double> mass;

    double at(int i, int j) const { return mass[static_cast<std::size_t>(i) * cols + j]; }
};

struct TrajectoryDistance {
    double value = 0.0;
    TransportPlan plan;
};

// Exact Wasserstein distance between two feature sequences under uniform
// marginals. Solved as a min-cost flow on the bipartite t x n graph with
// supplies scaled by lcm(t, n) to integers, so the returned plan is exactly
// feasible. Throws DataError on empty input or mixed dimensions.
TrajectoryDistance wasserstein(const std::vector<FeatureVector>& live,
                               const std::vector<FeatureVector>& expert,
                               GroundMetric metric = GroundMetric::SquaredEuclidean,
                               bool keep_plan = true);

TrajectoryDistance wasserstein(const DemoTrajectory& live, const DemoTrajectory& expert,
                               GroundMetric metric = GroundMetric::SquaredEuclidean,
                               bool keep_plan = true);

struct ScoredCandidate {
    Neighbor neighbor;
    double wasserstein = 0.0;
};

// Candidates whose expert-prefix distance to the live trajectory is within
// `threshold`. Distances for distinct candidates are computed in parallel;
// trajectory_filter_serial is the reference kept for testing.
std::vector<ScoredCandidate> trajectory_filter(const CandidateSet& candidates,
                                               const std::vector<FeatureVector>& live,
                                               const DemoDataset& dataset, double threshold,
                                               GroundMetric metric = GroundMetric::SquaredEuclidean);
std::vector<ScoredCandidate> trajectory_filter_serial(
    const CandidateSet& candidates, const std::vector<FeatureVector>& live,
    const DemoDataset& dataset, double threshold,
    GroundMetric metric = GroundMetric::SquaredEuclidean);

// q-quantile of the candidate distances (the adaptive tau_throd rule): the
// ceil(q*m)-th smallest value, so q = 0.6 over 5 keeps exactly 3.
double distance_quantile(std::vector<double> distances, double q);

} // namespace retrace
