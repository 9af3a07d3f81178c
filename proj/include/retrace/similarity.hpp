#pragma once

#include "retrace/dataset.hpp"

namespace retrace {

struct Neighbor {
    EntryRef entry;
    std::size_t batch_index = 0;
    double similarity = 0.0;
};

struct CandidateSet {
    FeatureVector query;
    std::vector<Neighbor> neighbors; // descending similarity
    int k = 0;
};

// (a.b) / (|a||b|). Inputs are L2-normalized on the fly, never mutated.
// Throws DataError on dimension mismatch or zero-norm input.
double cosine_similarity(const FeatureVector& a, const FeatureVector& b);

// The k batch entries most similar to `query`. Equal similarities break
// toward the lower batch index, i.e. lower (traj_id, t). The scan over the
// batch is OpenMP-parallel; knn_serial is the reference kept for testing.
CandidateSet knn(const FeatureVector& query, const RetrievalBatch& batch, int k);
CandidateSet knn_serial(const FeatureVector& query, const RetrievalBatch& batch, int k);

// Demonstration prefix terminated at (and including) the referenced step.
DemoTrajectory expert_prefix(const EntryRef& entry, const DemoDataset& dataset);

} // namespace retrace
