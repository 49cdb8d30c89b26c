#pragma once

#include <stdexcept>
#include <string>

namespace vlmbind {

// Bad user-supplied configuration (grid too small, missing file, ...).
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A documented module invariant failed at runtime. Messages are
// module-qualified ("scenegen: ...") so CLI output names the culprit.
struct invariant_violation : std::runtime_error {
    explicit invariant_violation(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse (calling an operation with arguments it rejects by contract).
struct usage_error : std::runtime_error {
    explicit usage_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Backend adapter lookup failure.
struct adapter_error : std::runtime_error {
    explicit adapter_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace vlmbind
