#pragma once

#include "retrace/dataset.hpp"
#include "retrace/subgoal.hpp"

#include <cstdint>
#include <string>

namespace retrace {

// The fixed 14-command interface shared by datasets, policies and the
// surrogate environment.
enum Action : int {
    kBodyForward = 0,
    kBodyLeft = 1,
    kBodyRight = 2,
    kBodyBackward = 3,
    kTurnLeft = 4,
    kTurnRight = 5,
    kHandForward = 6,
    kHandBackward = 7,
    kHandLeft = 8,
    kHandRight = 9,
    kHandUp = 10,
    kHandDown = 11,
    kGrasp = 12,
    kRelease = 13,
};

const char* action_name(int action);
int action_from_name(const std::string& name);

// Replays the action stored at the chosen sub-goal step.
int retrieval_action(const SubgoalDecision& decision, const DemoDataset& dataset);

enum class ValueAggregation { Sum, Mean };

// Groups the surviving candidates by stored action and returns the action
// with the highest aggregated reachability value. Ties go to the action of
// the single highest-value candidate, then the lowest action id.
int valued_retrieval_action(const std::vector<CandidateAudit>& survivors,
                            const DemoDataset& dataset,
                            ValueAggregation aggregation = ValueAggregation::Sum);

// --- goal-conditioned behavior cloning -----------------------------------

struct GcbcHyperparams {
    int hidden = 64;
    double learning_rate = 1e-3;
    int epochs = 100;
    int batch_size = 32;
    int goal_horizon = 10;
};

// Small feed-forward classifier p(a | s, s_g): input is s ++ s_g, two ReLU
// hidden layers, 14 logits. Trained from scratch with Adam on hindsight goal
// tuples; fully deterministic given the seed.
class GcbcModel {
public:
    GcbcModel() = default;
    GcbcModel(int feature_dim, int hidden, std::uint64_t seed);

    std::vector<double> logits(const FeatureVector& s, const FeatureVector& s_g) const;
    std::vector<double> softmax(const FeatureVector& s, const FeatureVector& s_g) const;

    int feature_dim() const { return feature_dim_; }
    int hidden() const { return hidden_; }

    std::vector<double>& parameters() { return params_; }
    const std::vector<double>& parameters() const { return params_; }

    // Mean cross-entropy over a batch plus its gradient w.r.t. all
    // parameters; the training loop and the finite-difference checks share
    // this path.
    double loss_and_gradient(const std::vector<std::pair<FeatureVector, FeatureVector>>& inputs,
                             const std::vector<int>& targets, std::vector<double>* grad) const;

    void save(const std::string& path) const;
    static GcbcModel load(const std::string& path);

private:
    friend struct GcbcLayout;
    int feature_dim_ = 0;
    int hidden_ = 0;
    std::vector<double> params_;
};

struct GcbcTrainResult {
    GcbcModel model;
    std::vector<double> epoch_loss; // mean cross-entropy per epoch
    double final_loss = 0.0;
    double train_accuracy = 0.0;
};

GcbcTrainResult gcbc_train(const DemoDataset& dataset, const GcbcHyperparams& hparams,
                           std::uint64_t seed);

// Argmax-logit action; logit ties break to the lowest action id.
int gcbc_action(const GcbcModel& model, const FeatureVector& s, const FeatureVector& s_g);

} // namespace retrace
