#include "retrace/subgoal.hpp"

#include "retrace/error.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace retrace {

const CandidateAudit& SubgoalDecision::chosen_audit() const {
    for (const auto& c : candidates)
        if (c.entry == chosen) return c;
    throw InternalError("SubgoalDecision: chosen entry missing from audit list");
}

namespace {

SubgoalDecision select_impl(const LiveTrajectory& live, const RetrievalBatch& batch,
                            const DemoDataset& dataset, const StateGraph& graph,
                            const ValueTable& table, const SubgoalParams& params,
                            bool parallel) {
    if (live.steps.empty())
        throw DataError("select_subgoal: empty live trajectory");
    if (batch.size() == 0)
        throw DataError("select_subgoal: empty retrieval batch");

    const FeatureVector& query = live.current();
    CandidateSet cands = parallel ? knn(query, batch, params.k)
                                  : knn_serial(query, batch, params.k);

    // recent history only; Wasserstein cost grows with live length
    std::vector<FeatureVector> window;
    {
        std::size_t start = live.steps.size() > static_cast<std::size_t>(params.live_window)
                                ? live.steps.size() - params.live_window
                                : 0;
        window.assign(live.steps.begin() + start, live.steps.end());
    }

    const int live_node = graph.nearest_node(query);
    const auto m = static_cast<std::ptrdiff_t>(cands.neighbors.size());
    std::vector<CandidateAudit> audit(m);

    auto score_one = [&](std::ptrdiff_t i) {
        const Neighbor& nb = cands.neighbors[i];
        CandidateAudit& a = audit[i];
        a.entry = nb.entry;
        a.similarity = nb.similarity;
        a.node = graph.node_of(nb.entry);
        DemoTrajectory prefix = expert_prefix(nb.entry, dataset);
        std::vector<FeatureVector> pf;
        pf.reserve(prefix.steps.size());
        for (const auto& s : prefix.steps) pf.push_back(s.feature);
        a.wasserstein = wasserstein(window, pf, params.metric, false).value;
        a.reach_value = table.at(live_node, a.node);
    };
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t i = 0; i < m; ++i) score_one(i);
    } else {
        for (std::ptrdiff_t i = 0; i < m; ++i) score_one(i);
    }

    double threshold;
    if (params.filter_absolute) {
        threshold = *params.filter_absolute;
    } else {
        std::vector<double> dists(m);
        for (std::ptrdiff_t i = 0; i < m; ++i) dists[i] = audit[i].wasserstein;
        threshold = distance_quantile(std::move(dists), params.filter_quantile);
    }

    for (auto& a : audit)
        a.filtered = a.wasserstein > threshold || a.node == live_node;

    // argmax V, ties by similarity then batch order (audit preserves it)
    int best = -1;
    for (int i = 0; i < static_cast<int>(audit.size()); ++i) {
        if (audit[i].filtered) continue;
        if (best < 0 || audit[i].reach_value > audit[best].reach_value ||
            (audit[i].reach_value == audit[best].reach_value &&
             audit[i].similarity > audit[best].similarity))
            best = i;
    }

    SubgoalDecision decision;
    decision.candidates = std::move(audit);
    decision.threshold = threshold;
    decision.live_node = live_node;
    if (best >= 0) {
        decision.chosen = decision.candidates[best].entry;
        decision.fallback_used = false;
    } else {
        // filter emptied the set: highest-similarity raw candidate, flagged
        decision.chosen = decision.candidates.front().entry; // knn order is sim-desc
        decision.fallback_used = true;
    }
    return decision;
}

} // namespace

SubgoalDecision select_subgoal(const LiveTrajectory& live, const RetrievalBatch& batch,
                               const DemoDataset& dataset, const StateGraph& graph,
                               const ValueTable& table, const SubgoalParams& params) {
    return select_impl(live, batch, dataset, graph, table, params, true);
}

SubgoalDecision select_subgoal_serial(const LiveTrajectory& live, const RetrievalBatch& batch,
                                      const DemoDataset& dataset, const StateGraph& graph,
                                      const ValueTable& table, const SubgoalParams& params) {
    return select_impl(live, batch, dataset, graph, table, params, false);
}

std::string decision_to_text(const SubgoalDecision& decision, const DemoDataset& dataset) {
    std::ostringstream out;
    const auto& chosen_traj = dataset.trajectories[decision.chosen.traj];
    out << "chosen " << chosen_traj.traj_id << " t " << (decision.chosen.step + 1)
        << " fallback " << (decision.fallback_used ? 1 : 0) << " threshold "
        << decision.threshold << " live_node " << decision.live_node;
    for (const auto& c : decision.candidates) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), " | %s:%d sim %.6g w %.6g v %.6g%s",
                      dataset.trajectories[c.entry.traj].traj_id.c_str(), c.entry.step + 1,
                      c.similarity, c.wasserstein, c.reach_value, c.filtered ? " filtered" : "");
        out << buf;
    }
    return out.str();
}

} // namespace retrace
