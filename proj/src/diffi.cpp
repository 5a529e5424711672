#include "dockflow/diffi.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "dockflow/errors.hpp"

namespace dockflow::diffi {

using iforest::ForestModel;
using iforest::IsolationTree;
using iforest::TreeNode;

std::vector<std::size_t> rank_descending(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return order;
}

ImportanceVector local_diffi(const ForestModel& model, std::span<const double> row,
                             std::string subject, bool* degenerate) {
    if (row.size() != static_cast<std::size_t>(model.feature_count))
        throw Error(Errc::data, "row dimension does not match the model");

    const std::size_t cols = static_cast<std::size_t>(model.feature_count);
    ImportanceVector iv;
    iv.kind = Kind::Local;
    iv.subject = std::move(subject);
    iv.scores.assign(cols, 0.0);
    if (degenerate) *degenerate = false;

    if (model.depth_cap == 0) {
        // Single-leaf forest: no path exists anywhere, nothing to attribute.
        if (degenerate) *degenerate = true;
        iv.ranking = rank_descending(iv.scores);
        return iv;
    }

    std::vector<double> counter(cols, 0.0);
    const double inv_dmax = 1.0 / static_cast<double>(model.depth_cap);
    std::vector<int> path;
    for (const IsolationTree& tree : model.trees) {
        path.clear();
        int idx = 0;
        while (!tree.nodes[static_cast<std::size_t>(idx)].is_leaf()) {
            path.push_back(idx);
            const TreeNode& n = tree.nodes[static_cast<std::size_t>(idx)];
            idx = row[static_cast<std::size_t>(n.split_feature)] < n.split_value ? n.left
                                                                                 : n.right;
        }
        if (path.empty()) continue;
        const double update = 1.0 / static_cast<double>(path.size()) - inv_dmax;
        for (int node_idx : path) {
            const std::size_t f = static_cast<std::size_t>(
                tree.nodes[static_cast<std::size_t>(node_idx)].split_feature);
            iv.scores[f] += update;
            counter[f] += 1.0;
        }
    }
    for (std::size_t f = 0; f < cols; ++f) {
        iv.scores[f] = counter[f] > 0 ? iv.scores[f] / counter[f] : 0.0;
    }
    iv.ranking = rank_descending(iv.scores);
    return iv;
}

double induced_imbalance(std::size_t n_left, std::size_t n_right) {
    if (n_left == 0 || n_right == 0) return 0.0;
    const double total = static_cast<double>(n_left + n_right);
    const double raw = static_cast<double>(std::max(n_left, n_right)) / total;
    const double lambda_min = std::ceil(total / 2.0) / total;
    const double lambda_max = (total - 1.0) / total;
    if (lambda_max == lambda_min) return 1.0;
    return 0.5 + 0.5 * (raw - lambda_min) / (lambda_max - lambda_min);
}

namespace {

// Imbalance-weighted, depth-weighted accumulation of one class of rows
// through the whole forest.
struct ClassAccumulators {
    std::vector<double> importance;
    std::vector<double> counter;
};

ClassAccumulators accumulate_class(const ForestModel& model, const NumericMatrix& matrix,
                                   const std::vector<std::size_t>& members) {
    const std::size_t cols = static_cast<std::size_t>(model.feature_count);
    ClassAccumulators acc;
    acc.importance.assign(cols, 0.0);
    acc.counter.assign(cols, 0.0);

    std::vector<std::size_t> node_counts;
    std::vector<int> path;
    for (const IsolationTree& tree : model.trees) {
        // Class counts per node, for the imbalance coefficients.
        node_counts.assign(tree.nodes.size(), 0);
        for (std::size_t r : members) {
            const auto row = matrix.row(r);
            int idx = 0;
            ++node_counts[0];
            while (!tree.nodes[static_cast<std::size_t>(idx)].is_leaf()) {
                const TreeNode& n = tree.nodes[static_cast<std::size_t>(idx)];
                idx = row[static_cast<std::size_t>(n.split_feature)] < n.split_value ? n.left
                                                                                     : n.right;
                ++node_counts[static_cast<std::size_t>(idx)];
            }
        }

        for (std::size_t r : members) {
            const auto row = matrix.row(r);
            path.clear();
            int idx = 0;
            while (!tree.nodes[static_cast<std::size_t>(idx)].is_leaf()) {
                path.push_back(idx);
                const TreeNode& n = tree.nodes[static_cast<std::size_t>(idx)];
                idx = row[static_cast<std::size_t>(n.split_feature)] < n.split_value ? n.left
                                                                                     : n.right;
            }
            const double h =
                static_cast<double>(path.size()) +
                iforest::average_path_length_c(
                    static_cast<std::size_t>(tree.nodes[static_cast<std::size_t>(idx)].size));
            if (!(h > 0)) continue;  // empty path with size<=1 leaf cannot occur in practice
            for (int node_idx : path) {
                const TreeNode& n = tree.nodes[static_cast<std::size_t>(node_idx)];
                const double lambda = induced_imbalance(
                    node_counts[static_cast<std::size_t>(n.left)],
                    node_counts[static_cast<std::size_t>(n.right)]);
                const std::size_t f = static_cast<std::size_t>(n.split_feature);
                acc.importance[f] += lambda / h;
                acc.counter[f] += 1.0;
            }
        }
    }
    return acc;
}

}  // namespace

ImportanceVector global_diffi(const ForestModel& model, const NumericMatrix& matrix,
                              double threshold) {
    const std::vector<iforest::ScoredRow> scored = iforest::score(model, matrix);
    std::vector<std::size_t> outliers, inliers;
    for (const iforest::ScoredRow& s : scored) {
        (s.anomaly_score > threshold ? outliers : inliers).push_back(s.row_index);
    }
    if (outliers.empty())
        throw Error(Errc::data,
                    "no rows score above the threshold; raise contamination to produce a "
                    "non-empty outlier set");

    const ClassAccumulators out_acc = accumulate_class(model, matrix, outliers);
    const ClassAccumulators in_acc = accumulate_class(model, matrix, inliers);

    const std::size_t cols = static_cast<std::size_t>(model.feature_count);
    ImportanceVector iv;
    iv.kind = Kind::Global;
    iv.scores.assign(cols, 0.0);
    for (std::size_t f = 0; f < cols; ++f) {
        if (out_acc.counter[f] == 0.0) {
            iv.scores[f] = 0.0;
            continue;
        }
        const double out_mean = out_acc.importance[f] / out_acc.counter[f];
        if (in_acc.counter[f] == 0.0) {
            iv.scores[f] = out_mean;  // no inlier normalization available
            continue;
        }
        const double in_mean = in_acc.importance[f] / in_acc.counter[f];
        iv.scores[f] = in_mean > 0.0 ? out_mean / in_mean : out_mean;
    }
    iv.ranking = rank_descending(iv.scores);
    return iv;
}

ImportanceVector aggregate_local(std::span<const ImportanceVector> locals, std::string subject) {
    if (locals.empty()) throw Error(Errc::data, "cannot aggregate zero importance vectors");
    const std::size_t cols = locals.front().scores.size();
    for (const ImportanceVector& iv : locals) {
        if (iv.kind != Kind::Local)
            throw Error(Errc::data, "aggregate_local accepts only local vectors");
        if (iv.scores.size() != cols)
            throw Error(Errc::data, "importance vectors have mismatched column counts");
    }
    ImportanceVector out;
    out.kind = Kind::Local;
    out.subject = std::move(subject);
    out.scores.assign(cols, 0.0);
    for (const ImportanceVector& iv : locals) {
        for (std::size_t f = 0; f < cols; ++f) out.scores[f] += iv.scores[f];
    }
    for (double& v : out.scores) v /= static_cast<double>(locals.size());
    out.ranking = rank_descending(out.scores);
    return out;
}

nlohmann::json importance_to_json(const ImportanceVector& iv,
                                  std::span<const std::string> column_names) {
    return nlohmann::json{
        {"kind", iv.kind == Kind::Local ? "local" : "global"},
        {"subject", iv.subject},
        {"columns", std::vector<std::string>(column_names.begin(), column_names.end())},
        {"scores", iv.scores},
        {"ranking", iv.ranking}};
}

ImportanceVector importance_from_json(const nlohmann::json& doc) {
    ImportanceVector iv;
    const std::string kind = doc.at("kind").get<std::string>();
    if (kind == "local") iv.kind = Kind::Local;
    else if (kind == "global") iv.kind = Kind::Global;
    else throw Error(Errc::data, "unknown importance kind: " + kind);
    iv.subject = doc.value("subject", "");
    iv.scores = doc.at("scores").get<std::vector<double>>();
    iv.ranking = doc.at("ranking").get<std::vector<std::size_t>>();
    if (iv.ranking.size() != iv.scores.size())
        throw Error(Errc::data, "importance ranking length mismatch");
    return iv;
}

}  // namespace dockflow::diffi
