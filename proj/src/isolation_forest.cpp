#include "dockflow/isolation_forest.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "dockflow/errors.hpp"

namespace dockflow::iforest {

namespace {

constexpr double kEulerGamma = 0.5772156649;

int ceil_log2(std::size_t n) {
    int bits = 0;
    std::size_t v = 1;
    while (v < n) {
        v <<= 1;
        ++bits;
    }
    return bits;
}

struct TreeBuilder {
    const NumericMatrix& m;
    int depth_cap;
    Rng rng;
    std::vector<TreeNode> nodes;

    // Appends the subtree for `items` (training row indices) and returns its
    // node index.  The node is created before its children, so storage order
    // is pre-order and the recursion root is index 0.
    int build(std::vector<std::size_t>& items, int depth) {
        const int idx = static_cast<int>(nodes.size());
        nodes.emplace_back();

        if (depth >= depth_cap || items.size() <= 1) {
            nodes[idx].size = static_cast<int>(items.size());
            return idx;
        }

        // Column extents over this node's samples; constant columns are not
        // split candidates.
        const std::size_t cols = m.cols;
        std::vector<double> lo(cols), hi(cols);
        for (std::size_t c = 0; c < cols; ++c) {
            lo[c] = hi[c] = m.at(items[0], c);
        }
        for (std::size_t i = 1; i < items.size(); ++i) {
            for (std::size_t c = 0; c < cols; ++c) {
                const double v = m.at(items[i], c);
                lo[c] = std::min(lo[c], v);
                hi[c] = std::max(hi[c], v);
            }
        }
        std::vector<std::size_t> candidates;
        candidates.reserve(cols);
        for (std::size_t c = 0; c < cols; ++c) {
            if (hi[c] > lo[c]) candidates.push_back(c);
        }
        if (candidates.empty()) {
            nodes[idx].size = static_cast<int>(items.size());
            return idx;
        }

        const std::size_t feature = candidates[rng.uniform_index(candidates.size())];
        const double split = rng.uniform_open(lo[feature], hi[feature]);

        std::vector<std::size_t> left_items, right_items;
        left_items.reserve(items.size());
        right_items.reserve(items.size());
        for (std::size_t i : items) {
            (m.at(i, feature) < split ? left_items : right_items).push_back(i);
        }
        items.clear();
        items.shrink_to_fit();

        const int left = build(left_items, depth + 1);
        const int right = build(right_items, depth + 1);
        nodes[idx].split_feature = static_cast<int>(feature);
        nodes[idx].split_value = split;
        nodes[idx].left = left;
        nodes[idx].right = right;
        return idx;
    }
};

}  // namespace

double Rng::uniform_open(double lo, double hi) {
    // A draw rounding onto lo would leave the left child empty (the strict
    // `value < split` rule); v == hi is harmless, both children stay
    // non-empty.
    double v = lo + uniform01() * (hi - lo);
    if (!(v > lo)) v = std::nextafter(lo, hi);
    return v;
}

int IsolationTree::leaf_index(std::span<const double> row) const {
    int idx = 0;
    while (!nodes[idx].is_leaf()) {
        const TreeNode& n = nodes[idx];
        idx = row[static_cast<std::size_t>(n.split_feature)] < n.split_value ? n.left : n.right;
    }
    return idx;
}

int IsolationTree::leaf_depth(std::span<const double> row) const {
    int idx = 0;
    int depth = 0;
    while (!nodes[idx].is_leaf()) {
        const TreeNode& n = nodes[idx];
        idx = row[static_cast<std::size_t>(n.split_feature)] < n.split_value ? n.left : n.right;
        ++depth;
    }
    return depth;
}

double average_path_length_c(std::size_t n) {
    if (n <= 1) return 0.0;
    if (n == 2) return 1.0;
    const double nd = static_cast<double>(n);
    return 2.0 * (std::log(nd - 1.0) + kEulerGamma) - 2.0 * (nd - 1.0) / nd;
}

ForestModel fit(const NumericMatrix& matrix, const ForestConfig& config) {
    const std::size_t rows = matrix.rows();
    if (rows < 2) throw Error(Errc::data, "forest fit needs at least 2 rows");
    if (matrix.cols == 0) throw Error(Errc::data, "forest fit needs at least 1 column");
    if (config.n_trees < 1) throw Error(Errc::usage, "n_trees must be >= 1");
    if (config.subsample < 2) throw Error(Errc::usage, "subsample must be >= 2");

    ForestModel model;
    model.n_trees = config.n_trees;
    model.subsample_size = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(config.subsample), rows));
    model.depth_cap = ceil_log2(static_cast<std::size_t>(model.subsample_size));
    model.feature_count = static_cast<int>(matrix.cols);
    model.rng_seed = config.seed;
    model.column_names = matrix.column_names;

    const std::size_t psi = static_cast<std::size_t>(model.subsample_size);
    model.trees.resize(static_cast<std::size_t>(config.n_trees));
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        TreeBuilder builder{matrix, model.depth_cap, Rng::tree_stream(config.seed, t), {}};

        // Partial Fisher-Yates: psi swap draws happen even when psi == rows,
        // so the stream consumed per tree is independent of the clip.
        std::vector<std::size_t> pool(rows);
        for (std::size_t i = 0; i < rows; ++i) pool[i] = i;
        for (std::size_t i = 0; i < psi; ++i) {
            const std::size_t j = i + builder.rng.uniform_index(rows - i);
            std::swap(pool[i], pool[j]);
        }
        std::vector<std::size_t> sample(pool.begin(), pool.begin() + static_cast<long>(psi));

        builder.build(sample, 0);
        model.trees[t].nodes = std::move(builder.nodes);
    }
    return model;
}

double path_length(const ForestModel& model, std::span<const double> row) {
    if (row.size() != static_cast<std::size_t>(model.feature_count))
        throw Error(Errc::data, "row dimension does not match the model");
    double total = 0;
    for (const IsolationTree& tree : model.trees) {
        int idx = 0;
        int depth = 0;
        while (!tree.nodes[static_cast<std::size_t>(idx)].is_leaf()) {
            const TreeNode& n = tree.nodes[static_cast<std::size_t>(idx)];
            idx = row[static_cast<std::size_t>(n.split_feature)] < n.split_value ? n.left
                                                                                 : n.right;
            ++depth;
        }
        total += depth + average_path_length_c(
                             static_cast<std::size_t>(tree.nodes[static_cast<std::size_t>(idx)].size));
    }
    return total / static_cast<double>(model.trees.size());
}

std::vector<ScoredRow> score(const ForestModel& model, const NumericMatrix& matrix) {
    if (matrix.cols != static_cast<std::size_t>(model.feature_count))
        throw Error(Errc::data, "matrix dimension does not match the model");
    const double norm = average_path_length_c(static_cast<std::size_t>(model.subsample_size));
    std::vector<ScoredRow> out;
    out.reserve(matrix.rows());
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        ScoredRow s;
        s.row_index = r;
        s.expected_path_length = path_length(model, matrix.row(r));
        s.anomaly_score = std::exp2(-s.expected_path_length / norm);
        out.push_back(s);
    }
    return out;
}

ThresholdResult threshold_by_contamination(std::vector<ScoredRow>& scores, double contamination) {
    if (scores.empty()) throw Error(Errc::data, "cannot threshold zero scores");
    if (!(contamination > 0.0 && contamination < 1.0))
        throw Error(Errc::usage, "contamination must be inside (0, 1)");

    std::vector<double> sorted;
    sorted.reserve(scores.size());
    for (const ScoredRow& s : scores) sorted.push_back(s.anomaly_score);
    std::sort(sorted.begin(), sorted.end());

    const std::size_t n = sorted.size();
    const std::size_t k = static_cast<std::size_t>(
        std::floor(contamination * static_cast<double>(n)));
    // (1 - contamination) empirical quantile: the largest score NOT in the
    // top-k tail.  k == n cannot happen since contamination < 1.
    const double threshold = sorted[n - k - 1];

    ThresholdResult result{threshold, 0};
    for (ScoredRow& s : scores) {
        s.is_anomaly = s.anomaly_score > threshold;
        if (s.is_anomaly) ++result.flagged;
    }
    return result;
}

nlohmann::json model_to_json(const ForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const IsolationTree& tree : model.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const TreeNode& n : tree.nodes) {
            if (n.is_leaf()) {
                nodes.push_back(nlohmann::json::array({n.size}));
            } else {
                nodes.push_back(nlohmann::json::array({n.split_feature, n.split_value, n.left,
                                                       n.right}));
            }
        }
        trees.push_back(std::move(nodes));
    }
    return nlohmann::json{{"format", "dockflow.forest"},
                          {"version", 1},
                          {"n_trees", model.n_trees},
                          {"subsample_size", model.subsample_size},
                          {"depth_cap", model.depth_cap},
                          {"feature_count", model.feature_count},
                          {"rng_seed", model.rng_seed},
                          {"column_names", model.column_names},
                          {"trees", std::move(trees)}};
}

ForestModel model_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("format", "") != "dockflow.forest")
        throw Error(Errc::data, "not a forest model document");
    if (doc.value("version", 0) != 1)
        throw Error(Errc::data, "unsupported forest model version");

    ForestModel model;
    model.n_trees = doc.at("n_trees").get<int>();
    model.subsample_size = doc.at("subsample_size").get<int>();
    model.depth_cap = doc.at("depth_cap").get<int>();
    model.feature_count = doc.at("feature_count").get<int>();
    model.rng_seed = doc.at("rng_seed").get<std::uint64_t>();
    model.column_names = doc.at("column_names").get<std::vector<std::string>>();
    for (const nlohmann::json& tree_json : doc.at("trees")) {
        IsolationTree tree;
        tree.nodes.reserve(tree_json.size());
        for (const nlohmann::json& nj : tree_json) {
            TreeNode n;
            if (nj.size() == 1) {
                n.size = nj[0].get<int>();
            } else if (nj.size() == 4) {
                n.split_feature = nj[0].get<int>();
                n.split_value = nj[1].get<double>();
                n.left = nj[2].get<int>();
                n.right = nj[3].get<int>();
            } else {
                throw Error(Errc::data, "malformed tree node");
            }
            tree.nodes.push_back(n);
        }
        model.trees.push_back(std::move(tree));
    }
    if (model.trees.size() != static_cast<std::size_t>(model.n_trees))
        throw Error(Errc::data, "tree count does not match n_trees");
    return model;
}

}  // namespace dockflow::iforest
