#pragma once

#include <span>
#include <string>
#include <vector>

namespace dockflow::svg {

// All charts format coordinates with two decimals and derive colors with
// integer math, so identical inputs produce byte-identical documents.

/// Grid heatmap; `values` is row-major with -1 marking absent cells.
/// Value 0 maps to white, `max_value` to full saturation.
std::string heatmap(const std::string& title, std::span<const std::string> row_labels,
                    std::span<const std::string> col_labels, std::span<const double> values,
                    double max_value, const std::string& unit);

/// Horizontal bar chart of labeled non-negative values, longest bar first
/// as given (caller orders).
std::string bar_chart(const std::string& title, std::span<const std::string> labels,
                      std::span<const double> values);

/// Line chart of `mean` over integer x positions with a shaded band of
/// +/- half_width, plus a secondary stepped series (e.g. anomaly counts)
/// on its own scale.
std::string line_band_chart(const std::string& title, std::span<const std::string> x_labels,
                            std::span<const double> mean, std::span<const double> half_width,
                            std::span<const double> secondary,
                            const std::string& secondary_label);

}  // namespace dockflow::svg
