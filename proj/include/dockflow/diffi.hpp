#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dockflow/isolation_forest.hpp"
#include "dockflow/matrix.hpp"

namespace dockflow::diffi {

enum class Kind { Global, Local };

struct ImportanceVector {
    Kind kind = Kind::Local;
    std::string subject;             // dataset id, row id, or predicate name
    std::vector<double> scores;      // one per feature column
    std::vector<std::size_t> ranking;  // column indices, descending score
};

/// Column indices sorted by descending score; ties broken by column index.
std::vector<std::size_t> rank_descending(std::span<const double> scores);

/// Depth-based importance of one row's isolation paths.  For each tree the
/// row reaches a leaf at raw edge depth d; every internal node with split
/// feature f on that path contributes (1/d - 1/depth_cap) to f's
/// accumulator and bumps its counter.  Scores are accumulator / counter
/// (0 when a feature was never traversed).  A depth_cap of 0 yields all
/// zeros and sets `degenerate`.
ImportanceVector local_diffi(const iforest::ForestModel& model, std::span<const double> row,
                             std::string subject = "", bool* degenerate = nullptr);

/// Imbalance coefficient of a split that routed (n_left, n_right) samples:
/// 0 for a useless split (one side empty), otherwise max/total rescaled
/// linearly from its feasible range onto [0.5, 1].  When only one feasible
/// value exists (totals 2 and 3) it maps to 1.
double induced_imbalance(std::size_t n_left, std::size_t n_right);

/// Dataset-level importance: rows are split by `threshold` into predicted
/// outliers and inliers; each class is routed through every tree, and each
/// internal node on a sample's path adds imbalance(node) / h(x), h(x) the
/// adjusted path length of that sample in that tree.  The final score is
/// the outlier mean divided by the inlier mean per feature.  Throws when no
/// row scores above the threshold.
ImportanceVector global_diffi(const iforest::ForestModel& model, const NumericMatrix& matrix,
                              double threshold);

/// Per-feature arithmetic mean of local vectors, re-ranked.
ImportanceVector aggregate_local(std::span<const ImportanceVector> locals,
                                 std::string subject = "");

nlohmann::json importance_to_json(const ImportanceVector& iv,
                                  std::span<const std::string> column_names);
ImportanceVector importance_from_json(const nlohmann::json& doc);

}  // namespace dockflow::diffi
