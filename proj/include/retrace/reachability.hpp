#pragma once

#include "retrace/dataset.hpp"
#include "retrace/transport.hpp"

namespace retrace {

struct GraphNode {
    int id = 0;
    FeatureVector representative; // mean of member features
    std::vector<EntryRef> members;
};

// Demonstration transition graph. Steps whose features lie within merge_eps
// of an existing node member (greedy single-linkage, dataset order) share a
// node, which is what lets value iteration stitch across trajectories.
struct StateGraph {
    std::vector<GraphNode> nodes;
    std::vector<std::vector<int>> successors; // adjacency, deduplicated, sorted
    double merge_eps = 0.0;
    GroundMetric metric = GroundMetric::SquaredEuclidean;
    std::vector<std::vector<int>> step_node; // step_node[traj][step] -> node id

    int node_of(const EntryRef& ref) const { return step_node[ref.traj][ref.step]; }
    // Nearest node to an arbitrary feature, ties to the lower node id.
    int nearest_node(const FeatureVector& f) const;
};

// merge_eps < 0 selects the default rule: 0.05 x median nearest-neighbor
// distance among all demo features under `metric`.
StateGraph build_graph(const DemoDataset& dataset, double merge_eps,
                       GroundMetric metric = GroundMetric::SquaredEuclidean);

double auto_merge_eps(const DemoDataset& dataset,
                      GroundMetric metric = GroundMetric::SquaredEuclidean,
                      double factor = 0.05);

// Goal-conditioned values V(node, goal). Reaching the goal terminates with
// reward 0; every other step costs -1, so V = -(1-gamma^d)/(1-gamma) at
// shortest-path distance d and -1/(1-gamma) when the goal is unreachable.
class ValueTable {
public:
    ValueTable() = default;
    ValueTable(int nodes, double gamma);

    double at(int node, int goal) const {
        return values_[static_cast<std::size_t>(goal) * nodes_ + node];
    }
    double& at(int node, int goal) {
        return values_[static_cast<std::size_t>(goal) * nodes_ + node];
    }
    double gamma() const { return gamma_; }
    int node_count() const { return nodes_; }
    double unreachable_value() const { return -1.0 / (1.0 - gamma_); }

private:
    int nodes_ = 0;
    double gamma_ = 0.0;
    std::vector<double> values_;
};

// Exact dynamic programming over the graph; goal columns are independent and
// run OpenMP-parallel. value_iteration_serial is the reference for tests.
ValueTable value_iteration(const StateGraph& graph, double gamma, double tol = 1e-10);
ValueTable value_iteration_serial(const StateGraph& graph, double gamma, double tol = 1e-10);

// V for arbitrary query features: both are resolved to their nearest node.
double value(const FeatureVector& s, const FeatureVector& g, const StateGraph& graph,
             const ValueTable& table);

// Graph + table persistence (structured text: nodes with members, edges,
// dense value matrix).
void save_graph_artifact(const StateGraph& graph, const ValueTable& table,
                         const std::string& path);
std::pair<StateGraph, ValueTable> load_graph_artifact(const std::string& path);

} // namespace retrace
