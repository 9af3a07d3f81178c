#include "retrace/similarity.hpp"

#include "retrace/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace retrace {

namespace {

double cosine_raw(const double* a, const double* b, int n) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (int i = 0; i < n; ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa <= 0.0 || bb <= 0.0)
        throw DataError("cosine_similarity: zero-norm input");
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

CandidateSet knn_impl(const FeatureVector& query, const RetrievalBatch& batch, int k,
                      bool parallel) {
    if (batch.size() == 0)
        throw DataError("knn: empty retrieval batch");
    if (k < 1)
        throw DataError("knn: k must be >= 1");
    if (static_cast<int>(query.size()) != batch.dim)
        throw DataError("knn: query dimension mismatch");

    const auto n = static_cast<std::ptrdiff_t>(batch.size());
    std::vector<double> sims(n);
    if (parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            sims[i] = cosine_raw(query.data(), batch.feature(i), batch.dim);
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i)
            sims[i] = cosine_raw(query.data(), batch.feature(i), batch.dim);
    }

    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), batch.size());
    auto better = [&](std::size_t a, std::size_t b) {
        if (sims[a] != sims[b]) return sims[a] > sims[b];
        return a < b; // batch order == (traj_id, t) order
    };
    std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(), better);

    CandidateSet out;
    out.query = query;
    out.k = k;
    out.neighbors.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i)
        out.neighbors.push_back(Neighbor{batch.refs[idx[i]], idx[i], sims[idx[i]]});
    return out;
}

} // namespace

double cosine_similarity(const FeatureVector& a, const FeatureVector& b) {
    if (a.size() != b.size())
        throw DataError("cosine_similarity: dimension mismatch");
    if (a.empty())
        throw DataError("cosine_similarity: empty vectors");
    return cosine_raw(a.data(), b.data(), static_cast<int>(a.size()));
}

CandidateSet knn(const FeatureVector& query, const RetrievalBatch& batch, int k) {
    return knn_impl(query, batch, k, true);
}

CandidateSet knn_serial(const FeatureVector& query, const RetrievalBatch& batch, int k) {
    return knn_impl(query, batch, k, false);
}

DemoTrajectory expert_prefix(const EntryRef& entry, const DemoDataset& dataset) {
    const Step& last = resolve(dataset, entry); // throws on dangling refs
    const auto& traj = dataset.trajectories[entry.traj];
    DemoTrajectory prefix;
    prefix.traj_id = traj.traj_id;
    prefix.task_tag = traj.task_tag;
    prefix.steps.assign(traj.steps.begin(), traj.steps.begin() + last.t);
    return prefix;
}

} // namespace retrace
