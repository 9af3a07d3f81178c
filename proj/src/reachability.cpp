#include "retrace/reachability.hpp"

#include "retrace/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace retrace {

int StateGraph::nearest_node(const FeatureVector& f) const {
    if (nodes.empty())
        throw DataError("nearest_node: empty graph");
    int best = 0;
    double best_d = ground_cost(f, nodes[0].representative, metric);
    for (int i = 1; i < static_cast<int>(nodes.size()); ++i) {
        double d = ground_cost(f, nodes[i].representative, metric);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

double auto_merge_eps(const DemoDataset& dataset, GroundMetric metric, double factor) {
    RetrievalBatch batch = flatten(dataset);
    const auto n = batch.size();
    if (n < 2) return 0.0;
    std::vector<double> nn(n, std::numeric_limits<double>::infinity());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        const Step& a = resolve(dataset, batch.refs[i]);
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (static_cast<std::size_t>(i) == j) continue;
            double d = ground_cost(a.feature, resolve(dataset, batch.refs[j]).feature, metric);
            if (d < best) best = d;
        }
        nn[i] = best;
    }
    std::sort(nn.begin(), nn.end());
    double median = nn[n / 2];
    if (!std::isfinite(median)) return 0.0;
    return factor * median;
}

StateGraph build_graph(const DemoDataset& dataset, double merge_eps, GroundMetric metric) {
    validate_dataset(dataset);
    if (merge_eps < 0.0) merge_eps = auto_merge_eps(dataset, metric);

    StateGraph graph;
    graph.merge_eps = merge_eps;
    graph.metric = metric;
    graph.step_node.resize(dataset.trajectories.size());

    // Greedy single-linkage in dataset order: a step joins the first node
    // holding any member within merge_eps, else starts a new node.
    for (int ti = 0; ti < static_cast<int>(dataset.trajectories.size()); ++ti) {
        const auto& traj = dataset.trajectories[ti];
        graph.step_node[ti].resize(traj.steps.size(), -1);
        for (int si = 0; si < traj.length(); ++si) {
            const FeatureVector& f = traj.steps[si].feature;
            int assigned = -1;
            for (auto& node : graph.nodes) {
                for (const auto& m : node.members) {
                    double d = ground_cost(f, resolve(dataset, m).feature, metric);
                    if (d <= merge_eps) {
                        assigned = node.id;
                        break;
                    }
                }
                if (assigned >= 0) break;
            }
            if (assigned < 0) {
                GraphNode node;
                node.id = static_cast<int>(graph.nodes.size());
                graph.nodes.push_back(std::move(node));
                assigned = graph.nodes.back().id;
            }
            graph.nodes[assigned].members.push_back(EntryRef{ti, si});
            graph.step_node[ti][si] = assigned;
        }
    }

    // representatives = member means
    for (auto& node : graph.nodes) {
        FeatureVector mean(dataset.feature_dim, 0.0);
        for (const auto& m : node.members) {
            const auto& f = resolve(dataset, m).feature;
            for (int d = 0; d < dataset.feature_dim; ++d) mean[d] += f[d];
        }
        for (double& v : mean) v /= static_cast<double>(node.members.size());
        node.representative = std::move(mean);
    }

    // edges from consecutive demo steps
    graph.successors.resize(graph.nodes.size());
    for (int ti = 0; ti < static_cast<int>(dataset.trajectories.size()); ++ti) {
        const auto& ids = graph.step_node[ti];
        for (std::size_t si = 0; si + 1 < ids.size(); ++si)
            graph.successors[ids[si]].push_back(ids[si + 1]);
    }
    for (auto& succ : graph.successors) {
        std::sort(succ.begin(), succ.end());
        succ.erase(std::unique(succ.begin(), succ.end()), succ.end());
    }
    return graph;
}

ValueTable::ValueTable(int nodes, double gamma) : nodes_(nodes), gamma_(gamma) {
    values_.assign(static_cast<std::size_t>(nodes) * nodes, 0.0);
}

namespace {

// One goal column: Bellman iteration from the unreachable limit upward.
// Initialized at -1/(1-gamma), a node at shortest-path distance d reaches its
// exact closed-form value after d sweeps and unreachable nodes never move.
void iterate_goal(const StateGraph& graph, int goal, double gamma, double tol, ValueTable& table) {
    const int n = static_cast<int>(graph.nodes.size());
    const double floor_value = -1.0 / (1.0 - gamma);
    std::vector<double> cur(n, floor_value), next(n);
    cur[goal] = 0.0;
    while (true) {
        double max_delta = 0.0;
        for (int s = 0; s < n; ++s) {
            if (s == goal) {
                next[s] = 0.0;
                continue;
            }
            double best = floor_value;
            for (int succ : graph.successors[s])
                if (cur[succ] > best) best = cur[succ];
            double v = -1.0 + gamma * best;
            if (v < floor_value) v = floor_value;
            next[s] = v;
            double delta = std::fabs(v - cur[s]);
            if (delta > max_delta) max_delta = delta;
        }
        cur.swap(next);
        if (max_delta <= tol) break;
    }
    for (int s = 0; s < n; ++s) table.at(s, goal) = cur[s];
}

ValueTable value_iteration_impl(const StateGraph& graph, double gamma, double tol,
                                bool parallel) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw DataError("value_iteration: gamma must be in (0, 1)");
    if (tol <= 0.0)
        throw DataError("value_iteration: tol must be positive");
    const int n = static_cast<int>(graph.nodes.size());
    ValueTable table(n, gamma);
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (int g = 0; g < n; ++g) iterate_goal(graph, g, gamma, tol, table);
    } else {
        for (int g = 0; g < n; ++g) iterate_goal(graph, g, gamma, tol, table);
    }
    return table;
}

} // namespace

ValueTable value_iteration(const StateGraph& graph, double gamma, double tol) {
    return value_iteration_impl(graph, gamma, tol, true);
}

ValueTable value_iteration_serial(const StateGraph& graph, double gamma, double tol) {
    return value_iteration_impl(graph, gamma, tol, false);
}

double value(const FeatureVector& s, const FeatureVector& g, const StateGraph& graph,
             const ValueTable& table) {
    return table.at(graph.nearest_node(s), graph.nearest_node(g));
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void save_graph_artifact(const StateGraph& graph, const ValueTable& table,
                         const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw DataError("cannot open for writing: " + path);
    out << "reachgraph v1 nodes " << graph.nodes.size() << " gamma " << fmt(table.gamma())
        << " merge_eps " << fmt(graph.merge_eps) << " metric "
        << (graph.metric == GroundMetric::SquaredEuclidean ? "sqeuclidean" : "cosine") << "\n";
    for (const auto& node : graph.nodes) {
        out << "node " << node.id << " members";
        for (const auto& m : node.members) out << " " << m.traj << ":" << m.step;
        out << " repr";
        for (double v : node.representative) out << " " << fmt(v);
        out << "\n";
    }
    for (std::size_t s = 0; s < graph.successors.size(); ++s)
        for (int d : graph.successors[s]) out << "edge " << s << " " << d << "\n";
    for (int g = 0; g < table.node_count(); ++g) {
        out << "values " << g;
        for (int s = 0; s < table.node_count(); ++s) out << " " << fmt(table.at(s, g));
        out << "\n";
    }
    if (!out)
        throw DataError("write failure: " + path);
}

std::pair<StateGraph, ValueTable> load_graph_artifact(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open graph artifact: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw DataError(path + ": missing header");
    StateGraph graph;
    double gamma = 0.0;
    std::size_t node_count = 0;
    {
        std::istringstream hs(line);
        std::string magic, version, kw, metric_name;
        if (!(hs >> magic >> version >> kw >> node_count) || magic != "reachgraph")
            throw DataError(path + ": malformed header");
        double eps;
        if (!(hs >> kw >> gamma >> kw >> eps >> kw >> metric_name))
            throw DataError(path + ": malformed header");
        graph.merge_eps = eps;
        graph.metric = metric_name == "cosine" ? GroundMetric::CosineDistance
                                               : GroundMetric::SquaredEuclidean;
    }
    graph.successors.resize(node_count);
    ValueTable table(static_cast<int>(node_count), gamma);
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "node") {
            GraphNode node;
            std::string kw, tok;
            ls >> node.id >> kw;
            while (ls >> tok) {
                if (tok == "repr") break;
                auto colon = tok.find(':');
                node.members.push_back(
                    EntryRef{std::stoi(tok.substr(0, colon)), std::stoi(tok.substr(colon + 1))});
            }
            double v;
            while (ls >> v) node.representative.push_back(v);
            graph.nodes.push_back(std::move(node));
        } else if (kind == "edge") {
            int a, b;
            if (!(ls >> a >> b))
                throw DataError(path + ":" + std::to_string(line_no) + ": malformed edge");
            graph.successors[a].push_back(b);
        } else if (kind == "values") {
            int g;
            ls >> g;
            for (std::size_t s = 0; s < node_count; ++s) {
                double v;
                if (!(ls >> v))
                    throw DataError(path + ":" + std::to_string(line_no) + ": short value row");
                table.at(static_cast<int>(s), g) = v;
            }
        } else {
            throw DataError(path + ":" + std::to_string(line_no) + ": unknown record '" + kind +
                            "'");
        }
    }
    // step_node map is rebuildable from members
    for (const auto& node : graph.nodes) {
        for (const auto& m : node.members) {
            if (graph.step_node.size() <= static_cast<std::size_t>(m.traj))
                graph.step_node.resize(m.traj + 1);
            auto& v = graph.step_node[m.traj];
            if (v.size() <= static_cast<std::size_t>(m.step)) v.resize(m.step + 1, -1);
            v[m.step] = node.id;
        }
    }
    return {std::move(graph), std::move(table)};
}

} // namespace retrace
