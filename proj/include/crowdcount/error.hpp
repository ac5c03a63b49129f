#pragma once

#include <stdexcept>
#include <string>

namespace crowdcount {

// Bad user input: malformed files, out-of-range values, impossible configs.
// The CLI maps this to exit code 1; everything else exits 2.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace crowdcount
