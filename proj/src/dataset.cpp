#include "retrace/dataset.hpp"

#include "retrace/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace retrace {

std::size_t DemoDataset::total_steps() const {
    std::size_t n = 0;
    for (const auto& traj : trajectories) n += traj.steps.size();
    return n;
}

const std::string* DemoDataset::meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
        if (k == key) return &v;
    return nullptr;
}

void validate_dataset(const DemoDataset& dataset) {
    if (dataset.feature_dim <= 0)
        throw DataError("dataset: feature_dim must be positive");
    if (dataset.action_count != kActionCount)
        throw DataError("dataset: action_count must be " + std::to_string(kActionCount));

    std::set<std::string> ids;
    for (const auto& traj : dataset.trajectories) {
        if (traj.steps.empty())
            throw DataError("trajectory " + traj.traj_id + ": empty");
        if (!ids.insert(traj.traj_id).second)
            throw DataError("duplicate trajectory id " + traj.traj_id);
        int expected_t = 1;
        for (const auto& step : traj.steps) {
            if (step.t != expected_t)
                throw DataError("trajectory " + traj.traj_id + ": timestep " +
                                std::to_string(step.t) + " breaks consecutive 1..n order");
            ++expected_t;
            if (step.action < 0 || step.action >= dataset.action_count)
                throw DataError("trajectory " + traj.traj_id + " t=" + std::to_string(step.t) +
                                ": action " + std::to_string(step.action) + " out of range");
            if (static_cast<int>(step.feature.size()) != dataset.feature_dim)
                throw DataError("trajectory " + traj.traj_id + " t=" + std::to_string(step.t) +
                                ": feature dimension " + std::to_string(step.feature.size()) +
                                " != dataset dim " + std::to_string(dataset.feature_dim));
            double norm_sq = 0.0;
            for (double v : step.feature) {
                if (!std::isfinite(v))
                    throw DataError("trajectory " + traj.traj_id + " t=" +
                                    std::to_string(step.t) + ": non-finite feature entry");
                norm_sq += v * v;
            }
            if (norm_sq <= 0.0)
                throw DataError("trajectory " + traj.traj_id + " t=" + std::to_string(step.t) +
                                ": zero-norm feature");
        }
    }
}

namespace {

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

[[noreturn]] void parse_fail(const std::string& path, int line_no, const std::string& what) {
    throw DataError(path + ":" + std::to_string(line_no) + ": " + what);
}

} // namespace

DemoDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open dataset file: " + path);

    DemoDataset dataset;
    std::string line;
    int line_no = 0;

    if (!std::getline(in, line))
        parse_fail(path, 1, "missing header");
    ++line_no;
    {
        std::istringstream hs(line);
        std::string magic, version, dim_kw, actions_kw;
        int dim = 0, actions = 0;
        if (!(hs >> magic >> version >> dim_kw >> dim >> actions_kw >> actions) ||
            magic != "demoset" || version != "v1" || dim_kw != "dim" || actions_kw != "actions")
            parse_fail(path, line_no, "malformed header, expected 'demoset v1 dim <D> actions <A>'");
        dataset.feature_dim = dim;
        dataset.action_count = actions;
    }

    DemoTrajectory* current = nullptr;
    int declared_steps = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "meta") {
            std::string key;
            ls >> key;
            std::string value;
            std::getline(ls, value);
            if (!value.empty() && value[0] == ' ') value.erase(0, 1);
            if (key.empty()) parse_fail(path, line_no, "meta line missing key");
            dataset.meta.emplace_back(key, value);
        } else if (kind == "traj") {
            if (current && current->length() != declared_steps)
                parse_fail(path, line_no, "trajectory " + current->traj_id + " declared " +
                                              std::to_string(declared_steps) + " steps, found " +
                                              std::to_string(current->length()));
            DemoTrajectory traj;
            if (!(ls >> traj.traj_id >> traj.task_tag >> declared_steps))
                parse_fail(path, line_no, "malformed traj line");
            dataset.trajectories.push_back(std::move(traj));
            current = &dataset.trajectories.back();
        } else if (kind == "step") {
            if (!current) parse_fail(path, line_no, "step record before any traj line");
            Step step;
            if (!(ls >> step.t >> step.action))
                parse_fail(path, line_no, "malformed step line");
            step.feature.reserve(dataset.feature_dim);
            double v;
            while (ls >> v) step.feature.push_back(v);
            if (static_cast<int>(step.feature.size()) != dataset.feature_dim)
                parse_fail(path, line_no, "step has " + std::to_string(step.feature.size()) +
                                              " features, dataset dim is " +
                                              std::to_string(dataset.feature_dim));
            current->steps.push_back(std::move(step));
        } else {
            parse_fail(path, line_no, "unknown record kind '" + kind + "'");
        }
    }
    if (current && current->length() != declared_steps)
        parse_fail(path, line_no, "trajectory " + current->traj_id + " declared " +
                                      std::to_string(declared_steps) + " steps, found " +
                                      std::to_string(current->length()));

    validate_dataset(dataset);
    return dataset;
}

void save_dataset(const DemoDataset& dataset, const std::string& path) {
    validate_dataset(dataset);
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw DataError("cannot open for writing: " + path);

    out << "demoset v1 dim " << dataset.feature_dim << " actions " << dataset.action_count << "\n";
    for (const auto& [k, v] : dataset.meta) out << "meta " << k << " " << v << "\n";
    for (const auto& traj : dataset.trajectories) {
        out << "traj " << traj.traj_id << " " << traj.task_tag << " " << traj.length() << "\n";
        for (const auto& step : traj.steps) {
            out << "step " << step.t << " " << step.action;
            for (double v : step.feature) out << " " << format_real(v);
            out << "\n";
        }
    }
    if (!out)
        throw DataError("write failure: " + path);
}

RetrievalBatch flatten(const DemoDataset& dataset) {
    validate_dataset(dataset);
    // Entries ordered by (traj_id, t); batch index order doubles as the
    // deterministic tie-break order used by knn.
    std::vector<int> order(dataset.trajectories.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return dataset.trajectories[a].traj_id < dataset.trajectories[b].traj_id;
    });

    RetrievalBatch batch;
    batch.dim = dataset.feature_dim;
    batch.refs.reserve(dataset.total_steps());
    batch.features.reserve(dataset.total_steps() * dataset.feature_dim);
    for (int ti : order) {
        const auto& traj = dataset.trajectories[ti];
        for (int si = 0; si < traj.length(); ++si) {
            batch.refs.push_back(EntryRef{ti, si});
            const auto& f = traj.steps[si].feature;
            batch.features.insert(batch.features.end(), f.begin(), f.end());
        }
    }
    return batch;
}

const Step& resolve(const DemoDataset& dataset, const EntryRef& ref) {
    if (ref.traj < 0 || ref.traj >= static_cast<int>(dataset.trajectories.size()))
        throw DataError("dangling batch reference: trajectory index " + std::to_string(ref.traj));
    const auto& traj = dataset.trajectories[ref.traj];
    if (ref.step < 0 || ref.step >= traj.length())
        throw DataError("dangling batch reference: step " + std::to_string(ref.step) +
                        " in trajectory " + traj.traj_id);
    return traj.steps[ref.step];
}

} // namespace retrace
