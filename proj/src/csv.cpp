#include "dockflow/csv.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>

#include "dockflow/errors.hpp"

namespace dockflow {

bool CsvReader::next_row(std::vector<std::string>& fields) {
    fields.clear();
    int c = in_.get();
    if (c == EOF) return false;
    ++line_;
    if (first_) {
        first_ = false;
        // UTF-8 BOM
        if (c == 0xEF && in_.peek() == 0xBB) {
            in_.get();
            if (in_.peek() == 0xBF) {
                in_.get();
                c = in_.get();
                if (c == EOF) return false;
            }
        }
    }

    std::string field;
    bool quoted = false;
    while (true) {
        if (c == EOF) break;
        char ch = static_cast<char>(c);
        if (quoted) {
            if (ch == '"') {
                if (in_.peek() == '"') {
                    in_.get();
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                if (ch == '\n') ++line_;
                field.push_back(ch);
            }
        } else if (ch == '"' && field.empty()) {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n') {
            break;
        } else if (ch == '\r') {
            if (in_.peek() == '\n') in_.get();
            break;
        } else {
            field.push_back(ch);
        }
        c = in_.get();
    }
    fields.push_back(std::move(field));
    return true;
}

HeaderIndex::HeaderIndex(const std::vector<std::string>& header) : count_(header.size()) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        std::string key = to_lower(trim(header[i]));
        by_name_.emplace(std::move(key), i);  // first occurrence wins
    }
}

std::optional<std::size_t> HeaderIndex::find(const std::string& name) const {
    auto it = by_name_.find(to_lower(trim(name)));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
}

std::size_t HeaderIndex::require(const std::string& name) const {
    auto idx = find(name);
    if (!idx) throw Error(Errc::data, "missing required column: " + name);
    return *idx;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::optional<double> parse_double(const std::string& s) {
    std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    double v;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

std::optional<long> parse_long(const std::string& s) {
    std::string t = trim(s);
    if (t.empty()) return std::nullopt;
    long v;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string fmt2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

}  // namespace dockflow
