#include "dockflow/manifest.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dockflow/errors.hpp"

namespace dockflow::artifact {

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::missing_artifact, "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw Error(Errc::missing_artifact, "cannot read " + path.string());
    return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::generic, "cannot open " + path.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(Errc::generic, "write failed: " + path.string());
}

std::string hash_file(const std::filesystem::path& path) { return hash_bytes(read_file(path)); }

void Manifest::add_input(const std::string& label, std::string_view bytes) {
    inputs[label] = hash_bytes(bytes);
}

void Manifest::add_input_file(const std::string& label, const std::filesystem::path& path) {
    inputs[label] = hash_file(path);
}

void Manifest::add_output(const std::string& filename, std::string_view bytes) {
    outputs[filename] = hash_bytes(bytes);
}

nlohmann::json Manifest::to_json() const {
    return nlohmann::json{{"command", command},
                          {"tool_version", tool_version},
                          {"hash", "fnv1a64"},
                          {"params", params},
                          {"inputs", inputs},
                          {"outputs", outputs}};
}

void Manifest::write(const std::filesystem::path& dir) const {
    write_file(dir / "manifest.json", to_json().dump(1) + "\n");
}

LockFile::LockFile(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    path_ = dir / ".lock";
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0) {
        if (errno == EEXIST)
            throw Error(Errc::locked, "output directory is locked by another run: " +
                                          dir.string() + " (delete " + path_.string() +
                                          " if no other run is active)");
        throw Error(Errc::generic, "cannot create lock file " + path_.string());
    }
}

LockFile::~LockFile() {
    if (fd_ >= 0) {
        ::close(fd_);
        ::unlink(path_.c_str());
    }
}

}  // namespace dockflow::artifact
