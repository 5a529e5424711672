#pragma once

#include <stdexcept>
#include <string>

namespace dockflow {

// Exit-code classes surfaced by the CLI; library code throws these too.
enum class Errc {
    generic = 1,
    usage = 2,             // bad flags, bad config file
    data = 3,              // fatal schema/parse problems
    missing_artifact = 4,  // a required stage output does not exist
    locked = 5,            // output directory already in use
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    explicit Error(const std::string& what) : Error(Errc::generic, what) {}

    Errc code() const { return code_; }

private:
    Errc code_;
};

}  // namespace dockflow
