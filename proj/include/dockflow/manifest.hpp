#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace dockflow::artifact {

inline constexpr const char* kToolVersion = "1.0.0";

std::uint64_t fnv1a64(std::string_view bytes);

// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

inline std::string hash_bytes(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

/// Whole file contents.  A missing or unreadable path raises
/// Errc::missing_artifact naming the file.
std::string read_file(const std::filesystem::path& path);

/// Creates parent directories as needed; write failures raise Errc::generic.
void write_file(const std::filesystem::path& path, std::string_view content);

std::string hash_file(const std::filesystem::path& path);

// Per-run provenance record: what ran, on which inputs (content hashes),
// with which parameters, producing which outputs (content hashes).  Keys are
// serialized in sorted order so equal runs give byte-identical manifests.
struct Manifest {
    std::string command;
    std::string tool_version = kToolVersion;
    nlohmann::json params = nlohmann::json::object();
    std::map<std::string, std::string> inputs;   // label -> content hash
    std::map<std::string, std::string> outputs;  // filename -> content hash

    void add_input(const std::string& label, std::string_view bytes);
    void add_input_file(const std::string& label, const std::filesystem::path& path);
    void add_output(const std::string& filename, std::string_view bytes);

    nlohmann::json to_json() const;

    /// Writes <dir>/manifest.json.
    void write(const std::filesystem::path& dir) const;
};

/// Exclusive advisory lock on an output directory, held for the lifetime of
/// the object.  A second concurrent acquisition raises Errc::locked.
class LockFile {
  public:
    explicit LockFile(const std::filesystem::path& dir);
    ~LockFile();

    LockFile(const LockFile&) = delete;
    LockFile& operator=(const LockFile&) = delete;

  private:
    std::filesystem::path path_;
    int fd_ = -1;
};

}  // namespace dockflow::artifact
