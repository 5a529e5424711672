#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dockflow {

// Dense row-major numeric matrix with named columns.
struct NumericMatrix {
    std::vector<double> values;
    std::size_t cols = 0;
    std::vector<std::string> column_names;

    std::size_t rows() const { return cols == 0 ? 0 : values.size() / cols; }

    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(values.data() + r * cols, cols);
    }

    void push_row(std::span<const double> row) {
        values.insert(values.end(), row.begin(), row.end());
    }
};

}  // namespace dockflow
