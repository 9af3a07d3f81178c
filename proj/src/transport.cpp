#include "retrace/transport.hpp"

#include "retrace/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>

namespace retrace {

double ground_cost(const FeatureVector& a, const FeatureVector& b, GroundMetric metric) {
    if (a.size() != b.size())
        throw DataError("ground_cost: dimension mismatch");
    if (metric == GroundMetric::SquaredEuclidean) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            double d = a[i] - b[i];
            s += d * d;
        }
        return s;
    }
    return 1.0 - cosine_similarity(a, b);
}

namespace {

// Min-cost flow by successive shortest paths with potentials, specialized to
// the dense bipartite transportation problem. Supplies and demands are
// integers; arc costs are non-negative reals. Every augmentation pushes the
// bottleneck amount along a shortest path, so the result is an exact optimum.
class TransportSolver {
public:
    TransportSolver(int rows, int cols, const std::vector<double>& cost)
        : rows_(rows), cols_(cols), cost_(cost), flow_(static_cast<std::size_t>(rows) * cols, 0),
          potential_(rows + cols, 0.0) {}

    // supply[i] units leave row i, demand[j] units enter column j.
    void solve(std::vector<std::int64_t> supply, std::vector<std::int64_t> demand) {
        std::int64_t pending = std::accumulate(supply.begin(), supply.end(), std::int64_t{0});
        while (pending > 0) {
            auto [src, snk, amount] = augment(supply, demand);
            supply[src] -= amount;
            demand[snk] -= amount;
            pending -= amount;
        }
    }

    std::int64_t flow_at(int i, int j) const {
        return flow_[static_cast<std::size_t>(i) * cols_ + j];
    }

private:
    struct PathEnd {
        int src;
        int snk;
        std::int64_t amount;
    };

    double cost_at(int i, int j) const { return cost_[static_cast<std::size_t>(i) * cols_ + j]; }

    // One Dijkstra over the residual graph from all sources with remaining
    // supply, then a max augmentation along the best path.
    PathEnd augment(const std::vector<std::int64_t>& supply,
                    const std::vector<std::int64_t>& demand) {
        const int n_nodes = rows_ + cols_;
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> dist(n_nodes, inf);
        std::vector<int> parent(n_nodes, -1);
        std::vector<char> done(n_nodes, 0);
        using QE = std::pair<double, int>;
        std::priority_queue<QE, std::vector<QE>, std::greater<>> queue;

        for (int i = 0; i < rows_; ++i) {
            if (supply[i] > 0) {
                dist[i] = 0.0;
                queue.push({0.0, i});
            }
        }

        while (!queue.empty()) {
            auto [d, u] = queue.top();
            queue.pop();
            if (done[u]) continue;
            done[u] = 1;
            if (u < rows_) {
                // forward arcs row u -> every column
                for (int j = 0; j < cols_; ++j) {
                    int v = rows_ + j;
                    if (done[v]) continue;
                    double rc = cost_at(u, j) + potential_[u] - potential_[v];
                    if (rc < 0.0) rc = 0.0; // guard fp drift
                    if (d + rc < dist[v]) {
                        dist[v] = d + rc;
                        parent[v] = u;
                        queue.push({dist[v], v});
                    }
                }
            } else {
                // residual arcs column -> rows with positive flow
                int j = u - rows_;
                for (int i = 0; i < rows_; ++i) {
                    if (done[i] || flow_at(i, j) <= 0) continue;
                    double rc = -cost_at(i, j) + potential_[u] - potential_[i];
                    if (rc < 0.0) rc = 0.0;
                    if (d + rc < dist[i]) {
                        dist[i] = d + rc;
                        parent[i] = u;
                        queue.push({dist[i], i});
                    }
                }
            }
        }

        // cheapest reachable sink with remaining demand
        int best = -1;
        for (int j = 0; j < cols_; ++j) {
            int v = rows_ + j;
            if (demand[j] > 0 && dist[v] < inf && (best == -1 || dist[v] < dist[rows_ + best]))
                best = j;
        }
        if (best == -1)
            throw InternalError("transport: no augmenting path in feasible problem");

        for (int u = 0; u < n_nodes; ++u)
            if (dist[u] < inf) potential_[u] += dist[u];

        // Walk rows_+best back to its source row. A row whose parent is a
        // column was reached through a residual arc, which is bounded by the
        // flow it drains.
        std::int64_t amount = demand[best];
        int v = rows_ + best;
        while (parent[v] != -1) {
            int u = parent[v];
            if (v < rows_ && u >= rows_)
                amount = std::min(amount, flow_at(v, u - rows_));
            v = u;
        }
        const int src = v;
        amount = std::min(amount, supply[src]);

        v = rows_ + best;
        while (parent[v] != -1) {
            int u = parent[v];
            if (v >= rows_ && u < rows_)
                flow_[static_cast<std::size_t>(u) * cols_ + (v - rows_)] += amount;
            else
                flow_[static_cast<std::size_t>(v) * cols_ + (u - rows_)] -= amount;
            v = u;
        }
        return {src, best, amount};
    }

    int rows_;
    int cols_;
    std::vector<double> cost_;
    std::vector<std::int64_t> flow_;
    std::vector<double> potential_;
};

std::int64_t lcm64(std::int64_t a, std::int64_t b) {
    return a / std::gcd(a, b) * b;
}

} // namespace

TrajectoryDistance wasserstein(const std::vector<FeatureVector>& live,
                               const std::vector<FeatureVector>& expert, GroundMetric metric,
                               bool keep_plan) {
    if (live.empty() || expert.empty())
        throw DataError("wasserstein: empty trajectory");
    const int t = static_cast<int>(live.size());
    const int n = static_cast<int>(expert.size());

    std::vector<double> cost(static_cast<std::size_t>(t) * n);
    for (int i = 0; i < t; ++i)
        for (int j = 0; j < n; ++j)
            cost[static_cast<std::size_t>(i) * n + j] = ground_cost(live[i], expert[j], metric);

    const std::int64_t scale = lcm64(t, n);
    TransportSolver solver(t, n, cost);
    solver.solve(std::vector<std::int64_t>(t, scale / t), std::vector<std::int64_t>(n, scale / n));

    TrajectoryDistance result;
    double total = 0.0;
    TransportPlan plan;
    plan.rows = t;
    plan.cols = n;
    plan.mass.resize(static_cast<std::size_t>(t) * n);
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < n; ++j) {
            double m = static_cast<double>(solver.flow_at(i, j)) / static_cast<double>(scale);
            plan.mass[static_cast<std::size_t>(i) * n + j] = m;
            total += m * cost[static_cast<std::size_t>(i) * n + j];
        }
    }
    result.value = total;
    if (keep_plan) result.plan = std::move(plan);
    return result;
}

TrajectoryDistance wasserstein(const DemoTrajectory& live, const DemoTrajectory& expert,
                               GroundMetric metric, bool keep_plan) {
    std::vector<FeatureVector> a, b;
    a.reserve(live.steps.size());
    b.reserve(expert.steps.size());
    for (const auto& s : live.steps) a.push_back(s.feature);
    for (const auto& s : expert.steps) b.push_back(s.feature);
    return wasserstein(a, b, metric, keep_plan);
}

namespace {

std::vector<ScoredCandidate> filter_impl(const CandidateSet& candidates,
                                         const std::vector<FeatureVector>& live,
                                         const DemoDataset& dataset, double threshold,
                                         GroundMetric metric, bool parallel) {
    const auto m = static_cast<std::ptrdiff_t>(candidates.neighbors.size());
    std::vector<double> dist(m);
    auto score_one = [&](std::ptrdiff_t i) {
        DemoTrajectory prefix = expert_prefix(candidates.neighbors[i].entry, dataset);
        std::vector<FeatureVector> pf;
        pf.reserve(prefix.steps.size());
        for (const auto& s : prefix.steps) pf.push_back(s.feature);
        dist[i] = wasserstein(live, pf, metric, false).value;
    };
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < m; ++i) score_one(i);
    } else {
        for (std::ptrdiff_t i = 0; i < m; ++i) score_one(i);
    }

    std::vector<ScoredCandidate> kept;
    for (std::ptrdiff_t i = 0; i < m; ++i)
        if (dist[i] <= threshold)
            kept.push_back(ScoredCandidate{candidates.neighbors[i], dist[i]});
    return kept;
}

} // namespace

std::vector<ScoredCandidate> trajectory_filter(const CandidateSet& candidates,
                                               const std::vector<FeatureVector>& live,
                                               const DemoDataset& dataset, double threshold,
                                               GroundMetric metric) {
    return filter_impl(candidates, live, dataset, threshold, metric, true);
}

std::vector<ScoredCandidate> trajectory_filter_serial(const CandidateSet& candidates,
                                                      const std::vector<FeatureVector>& live,
                                                      const DemoDataset& dataset, double threshold,
                                                      GroundMetric metric) {
    return filter_impl(candidates, live, dataset, threshold, metric, false);
}

double distance_quantile(std::vector<double> distances, double q) {
    if (distances.empty())
        throw DataError("distance_quantile: empty input");
    if (q <= 0.0 || q > 1.0)
        throw DataError("distance_quantile: q must be in (0, 1]");
    std::sort(distances.begin(), distances.end());
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(distances.size())));
    if (rank == 0) rank = 1;
    return distances[rank - 1];
}

} // namespace retrace
