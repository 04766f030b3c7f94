#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hdn {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy shared by the library and the CLI. Each type maps to one
// machine-parsable category and a stable exit code.
struct Error : std::runtime_error {
    Error(std::string cat, const std::string& msg, int code)
        : std::runtime_error(msg), category(std::move(cat)), exit_code(code) {}
    std::string category;
    int exit_code;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config-error", msg, 1) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape-error", msg, 5) {}
};

struct CheckpointNotFoundError : Error {
    explicit CheckpointNotFoundError(const std::string& msg)
        : Error("checkpoint-not-found", msg, 2) {}
};

struct CheckpointVersionError : Error {
    explicit CheckpointVersionError(const std::string& msg)
        : Error("checkpoint-version-mismatch", msg, 3) {}
};

struct FileNotFoundError : Error {
    explicit FileNotFoundError(const std::string& msg) : Error("file-not-found", msg, 4) {}
};

struct NumericsError : Error {
    explicit NumericsError(const std::string& msg) : Error("numerics-error", msg, 6) {}
};

} // namespace hdn
