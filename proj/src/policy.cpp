#include "retrace/policy.hpp"

#include "retrace/error.hpp"
#include "retrace/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace retrace {

namespace {

const char* kActionNames[kActionCount] = {
    "body-move-forward", "body-move-left", "body-move-right", "body-move-backward",
    "body-turn-left",    "body-turn-right", "hand-move-forward", "hand-move-backward",
    "hand-move-left",    "hand-move-right", "hand-move-up",      "hand-move-down",
    "hand-grasp",        "hand-release",
};

} // namespace

const char* action_name(int action) {
    if (action < 0 || action >= kActionCount)
        throw DataError("action id out of range: " + std::to_string(action));
    return kActionNames[action];
}

int action_from_name(const std::string& name) {
    for (int i = 0; i < kActionCount; ++i)
        if (name == kActionNames[i]) return i;
    throw DataError("unknown action name: " + name);
}

int retrieval_action(const SubgoalDecision& decision, const DemoDataset& dataset) {
    return resolve(dataset, decision.chosen).action;
}

int valued_retrieval_action(const std::vector<CandidateAudit>& survivors,
                            const DemoDataset& dataset, ValueAggregation aggregation) {
    if (survivors.empty())
        throw DataError("valued_retrieval_action: empty candidate list");

    struct Group {
        double total = 0.0;
        int count = 0;
        double best_value = -std::numeric_limits<double>::infinity();
    };
    std::map<int, Group> groups;
    for (const auto& c : survivors) {
        int action = resolve(dataset, c.entry).action;
        auto& g = groups[action];
        g.total += c.reach_value;
        g.count += 1;
        g.best_value = std::max(g.best_value, c.reach_value);
    }

    int best_action = -1;
    double best_score = 0.0, best_single = 0.0;
    for (const auto& [action, g] : groups) {
        double score = aggregation == ValueAggregation::Sum ? g.total : g.total / g.count;
        if (best_action < 0 || score > best_score ||
            (score == best_score && g.best_value > best_single)) {
            best_action = action;
            best_score = score;
            best_single = g.best_value;
        }
        // equal score and equal best single value: keep the lower action id,
        // which map iteration order already guarantees
    }
    return best_action;
}

// --- GCBC ------------------------------------------------------------------

// Parameter block offsets for the 2-hidden-layer MLP.
struct GcbcLayout {
    int in, h, out;
    int w1, b1, w2, b2, w3, b3, total;

    GcbcLayout(int feature_dim, int hidden) {
        in = 2 * feature_dim;
        h = hidden;
        out = kActionCount;
        w1 = 0;
        b1 = w1 + h * in;
        w2 = b1 + h;
        b2 = w2 + h * h;
        w3 = b2 + h;
        b3 = w3 + out * h;
        total = b3 + out;
    }
};

GcbcModel::GcbcModel(int feature_dim, int hidden, std::uint64_t seed)
    : feature_dim_(feature_dim), hidden_(hidden) {
    GcbcLayout L(feature_dim, hidden);
    params_.resize(L.total);
    SplitMix64 rng(seed);
    auto init_block = [&](int offset, int count, int fan_in) {
        double bound = std::sqrt(2.0 / fan_in);
        for (int i = 0; i < count; ++i) params_[offset + i] = rng.uniform(-bound, bound);
    };
    init_block(L.w1, L.h * L.in, L.in);
    init_block(L.w2, L.h * L.h, L.h);
    init_block(L.w3, L.out * L.h, L.h);
    // biases start at zero
}

namespace {

// forward pass, keeping activations when `grad` is requested
struct Forward {
    std::vector<double> x, a1, a2, logits, probs;
};

void forward_pass(const std::vector<double>& p, const GcbcLayout& L, const FeatureVector& s,
                  const FeatureVector& g, Forward& f) {
    f.x.resize(L.in);
    std::copy(s.begin(), s.end(), f.x.begin());
    std::copy(g.begin(), g.end(), f.x.begin() + s.size());

    f.a1.assign(L.h, 0.0);
    for (int i = 0; i < L.h; ++i) {
        double z = p[L.b1 + i];
        const double* w = &p[L.w1 + i * L.in];
        for (int j = 0; j < L.in; ++j) z += w[j] * f.x[j];
        f.a1[i] = z > 0.0 ? z : 0.0;
    }
    f.a2.assign(L.h, 0.0);
    for (int i = 0; i < L.h; ++i) {
        double z = p[L.b2 + i];
        const double* w = &p[L.w2 + i * L.h];
        for (int j = 0; j < L.h; ++j) z += w[j] * f.a1[j];
        f.a2[i] = z > 0.0 ? z : 0.0;
    }
    f.logits.assign(L.out, 0.0);
    for (int i = 0; i < L.out; ++i) {
        double z = p[L.b3 + i];
        const double* w = &p[L.w3 + i * L.h];
        for (int j = 0; j < L.h; ++j) z += w[j] * f.a2[j];
        f.logits[i] = z;
    }
    // stable softmax
    double mx = *std::max_element(f.logits.begin(), f.logits.end());
    double sum = 0.0;
    f.probs.assign(L.out, 0.0);
    for (int i = 0; i < L.out; ++i) {
        f.probs[i] = std::exp(f.logits[i] - mx);
        sum += f.probs[i];
    }
    for (double& v : f.probs) v /= sum;
}

} // namespace

std::vector<double> GcbcModel::logits(const FeatureVector& s, const FeatureVector& s_g) const {
    if (static_cast<int>(s.size()) != feature_dim_ || static_cast<int>(s_g.size()) != feature_dim_)
        throw DataError("gcbc: feature dimension mismatch");
    GcbcLayout L(feature_dim_, hidden_);
    Forward f;
    forward_pass(params_, L, s, s_g, f);
    return f.logits;
}

std::vector<double> GcbcModel::softmax(const FeatureVector& s, const FeatureVector& s_g) const {
    if (static_cast<int>(s.size()) != feature_dim_ || static_cast<int>(s_g.size()) != feature_dim_)
        throw DataError("gcbc: feature dimension mismatch");
    GcbcLayout L(feature_dim_, hidden_);
    Forward f;
    forward_pass(params_, L, s, s_g, f);
    return f.probs;
}

double GcbcModel::loss_and_gradient(
    const std::vector<std::pair<FeatureVector, FeatureVector>>& inputs,
    const std::vector<int>& targets, std::vector<double>* grad) const {
    if (inputs.size() != targets.size() || inputs.empty())
        throw DataError("gcbc: batch size mismatch");
    GcbcLayout L(feature_dim_, hidden_);
    if (grad) grad->assign(L.total, 0.0);

    double loss = 0.0;
    Forward f;
    std::vector<double> dlogits(L.out), da2(L.h), da1(L.h);
    const double inv_n = 1.0 / static_cast<double>(inputs.size());

    for (std::size_t n = 0; n < inputs.size(); ++n) {
        forward_pass(params_, L, inputs[n].first, inputs[n].second, f);
        int y = targets[n];
        double p = std::max(f.probs[y], 1e-300);
        loss += -std::log(p) * inv_n;
        if (!grad) continue;

        for (int i = 0; i < L.out; ++i)
            dlogits[i] = (f.probs[i] - (i == y ? 1.0 : 0.0)) * inv_n;

        std::vector<double>& G = *grad;
        std::fill(da2.begin(), da2.end(), 0.0);
        for (int i = 0; i < L.out; ++i) {
            const double d = dlogits[i];
            G[L.b3 + i] += d;
            double* gw = &G[L.w3 + i * L.h];
            const double* w = &params_[L.w3 + i * L.h];
            for (int j = 0; j < L.h; ++j) {
                gw[j] += d * f.a2[j];
                da2[j] += d * w[j];
            }
        }
        std::fill(da1.begin(), da1.end(), 0.0);
        for (int i = 0; i < L.h; ++i) {
            if (f.a2[i] <= 0.0) continue; // ReLU gate
            const double d = da2[i];
            G[L.b2 + i] += d;
            double* gw = &G[L.w2 + i * L.h];
            const double* w = &params_[L.w2 + i * L.h];
            for (int j = 0; j < L.h; ++j) {
                gw[j] += d * f.a1[j];
                da1[j] += d * w[j];
            }
        }
        for (int i = 0; i < L.h; ++i) {
            if (f.a1[i] <= 0.0) continue;
            const double d = da1[i];
            G[L.b1 + i] += d;
            double* gw = &G[L.w1 + i * L.in];
            for (int j = 0; j < L.in; ++j) gw[j] += d * f.x[j];
        }
    }
    return loss;
}

GcbcTrainResult gcbc_train(const DemoDataset& dataset, const GcbcHyperparams& hparams,
                           std::uint64_t seed) {
    validate_dataset(dataset);
    if (dataset.total_steps() < 2)
        throw DataError("gcbc_train: dataset has no transitions");

    // hindsight tuples (s_t, s_{t+h}, a_t), h drawn uniformly in
    // [1, goal_horizon]; h = 0 pairs are excluded by construction
    SplitMix64 rng(seed);
    std::vector<std::pair<FeatureVector, FeatureVector>> inputs;
    std::vector<int> targets;
    for (const auto& traj : dataset.trajectories) {
        const int n = traj.length();
        for (int t = 0; t + 1 < n; ++t) {
            int max_h = std::min(hparams.goal_horizon, n - 1 - t);
            int h = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_h)));
            inputs.emplace_back(traj.steps[t].feature, traj.steps[t + h].feature);
            targets.push_back(traj.steps[t].action);
        }
    }
    if (inputs.empty())
        throw DataError("gcbc_train: all trajectories are single-step");

    GcbcTrainResult result;
    result.model = GcbcModel(dataset.feature_dim, hparams.hidden, rng.next());
    GcbcLayout L(dataset.feature_dim, hparams.hidden);

    // Adam
    std::vector<double> m(L.total, 0.0), v(L.total, 0.0), grad;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;

    std::vector<std::size_t> order(inputs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < hparams.epochs; ++epoch) {
        // Fisher-Yates with our own rng, deterministic across platforms
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += hparams.batch_size) {
            std::size_t end = std::min(order.size(), start + hparams.batch_size);
            std::vector<std::pair<FeatureVector, FeatureVector>> bx;
            std::vector<int> by;
            bx.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                bx.push_back(inputs[order[i]]);
                by.push_back(targets[order[i]]);
            }
            double loss = result.model.loss_and_gradient(bx, by, &grad);
            epoch_loss += loss;
            ++batches;
            ++step;
            auto& p = result.model.parameters();
            const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (int i = 0; i < L.total; ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                p[i] -= hparams.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
            }
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
    }
    result.final_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();

    std::size_t correct = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        if (gcbc_action(result.model, inputs[i].first, inputs[i].second) == targets[i]) ++correct;
    result.train_accuracy = static_cast<double>(correct) / static_cast<double>(inputs.size());
    return result;
}

int gcbc_action(const GcbcModel& model, const FeatureVector& s, const FeatureVector& s_g) {
    std::vector<double> z = model.logits(s, s_g);
    int best = 0;
    for (int i = 1; i < static_cast<int>(z.size()); ++i)
        if (z[i] > z[best]) best = i; // ties keep the lower id
    return best;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

void GcbcModel::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw DataError("cannot open for writing: " + path);
    out << "gcbc v1 dim " << feature_dim_ << " hidden " << hidden_ << " actions " << kActionCount
        << " params " << params_.size() << "\n";
    for (double p : params_) out << fmt(p) << "\n";
    if (!out)
        throw DataError("write failure: " + path);
}

GcbcModel GcbcModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open model file: " + path);
    std::string magic, version, kw;
    int dim = 0, hidden = 0, actions = 0;
    std::size_t count = 0;
    in >> magic >> version >> kw >> dim >> kw >> hidden >> kw >> actions >> kw >> count;
    if (!in || magic != "gcbc" || version != "v1" || actions != kActionCount)
        throw DataError(path + ": malformed model header");
    GcbcModel model;
    model.feature_dim_ = dim;
    model.hidden_ = hidden;
    model.params_.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!(in >> model.params_[i]))
            throw DataError(path + ": short parameter block");
    }
    GcbcLayout L(dim, hidden);
    if (static_cast<int>(count) != L.total)
        throw DataError(path + ": parameter count does not match layout");
    return model;
}

} // namespace retrace
