#pragma once

#include <istream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dockflow {

// Streaming CSV reader: quoted fields, embedded commas/quotes/newlines,
// CRLF line endings, and a UTF-8 BOM on the first row.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    // Reads one record into `fields`.  Returns false at end of input.
    bool next_row(std::vector<std::string>& fields);

    // 1-based number of the last physical line a record started on.
    long line_number() const { return line_; }

private:
    std::istream& in_;
    long line_ = 0;
    bool first_ = true;
};

// Case-insensitive header lookup for name-addressed columns.
class HeaderIndex {
public:
    explicit HeaderIndex(const std::vector<std::string>& header);

    std::optional<std::size_t> find(const std::string& name) const;

    // find() or throw Error{data} naming the missing column.
    std::size_t require(const std::string& name) const;

    std::size_t size() const { return count_; }

private:
    std::unordered_map<std::string, std::size_t> by_name_;
    std::size_t count_;
};

std::string trim(const std::string& s);
std::string to_lower(std::string s);

std::optional<double> parse_double(const std::string& s);
std::optional<long> parse_long(const std::string& s);

// Fixed-format numeric fields used by every text artifact, so that repeated
// runs are byte-identical.
std::string fmt6(double v);   // "%.6f"
std::string fmt2(double v);   // "%.2f"

// Quotes a field only when it needs it.
std::string csv_escape(const std::string& field);

}  // namespace dockflow
