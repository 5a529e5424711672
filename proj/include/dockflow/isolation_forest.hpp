#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dockflow/matrix.hpp"

namespace dockflow::iforest {

// SplitMix64.  The generator, the per-tree stream derivation, and the draw
// order (subsample, then per node: feature draw, split draw, left subtree
// before right) are all part of the model contract: a fixed seed must
// reproduce bit-identical forests anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Stream for tree t, decorrelated from the base seed and from other trees.
    static Rng tree_stream(std::uint64_t seed, std::uint64_t tree_index) {
        return Rng(seed + (tree_index + 1) * 0x9E3779B97F4A7C15ull);
    }

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, n).  n must be > 0.
    std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

    // Uniform in [0, 1) with 53 bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform in (lo, hi); a draw landing exactly on lo is nudged up so the
    // left child is never empty.
    double uniform_open(double lo, double hi);

private:
    std::uint64_t state_;
};

// Flat node storage; nodes appear in creation (pre-)order with the root at
// index 0.  Leaves have split_feature == -1.
struct TreeNode {
    int split_feature = -1;
    double split_value = 0;
    int left = -1;
    int right = -1;
    int size = 0;  // leaves only

    bool is_leaf() const { return split_feature < 0; }
};

struct IsolationTree {
    std::vector<TreeNode> nodes;

    // Index of the leaf a row lands in, following value < split -> left.
    int leaf_index(std::span<const double> row) const;

    // Raw edge count from the root to that leaf.
    int leaf_depth(std::span<const double> row) const;
};

struct ForestConfig {
    int n_trees = 100;
    int subsample = 256;
    std::uint64_t seed = 0;
};

struct ForestModel {
    std::vector<IsolationTree> trees;
    int n_trees = 0;
    int subsample_size = 0;  // after clipping to the training row count
    int depth_cap = 0;       // ceil(log2(subsample_size))
    int feature_count = 0;
    std::uint64_t rng_seed = 0;
    std::vector<std::string> column_names;
};

struct ScoredRow {
    std::size_t row_index = 0;
    double expected_path_length = 0;
    double anomaly_score = 0;
    bool is_anomaly = false;
};

struct ThresholdResult {
    double threshold = 0;
    std::size_t flagged = 0;
};

/// Average unsuccessful-search path length in a binary tree of n points:
/// c(0) = c(1) = 0, c(2) = 1, and the harmonic form above that.  Used both
/// as the leaf-size adjustment and the score normalizer.
double average_path_length_c(std::size_t n);

/// Builds `config.n_trees` trees, each on a uniform subsample without
/// replacement of min(config.subsample, rows) rows.  Needs at least 2 rows
/// and 1 column.  Deterministic in (seed, input).
ForestModel fit(const NumericMatrix& matrix, const ForestConfig& config = {});

/// Mean over trees of (edges to the leaf + c(leaf.size)).
double path_length(const ForestModel& model, std::span<const double> row);

/// Scores every row: s = 2^(-E[h]/c(psi)), strictly inside (0,1).
std::vector<ScoredRow> score(const ForestModel& model, const NumericMatrix& matrix);

/// Sets the threshold at the (1 - contamination) empirical quantile and
/// flags rows with score strictly above it, in place.
ThresholdResult threshold_by_contamination(std::vector<ScoredRow>& scores, double contamination);

nlohmann::json model_to_json(const ForestModel& model);
ForestModel model_from_json(const nlohmann::json& doc);

}  // namespace dockflow::iforest
