#pragma once

#include <stdexcept>
#include <string>

namespace grevnet {

/// Error categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind { shape, value, config, data, numeric, checkpoint };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};
struct ValueError : Error {
    explicit ValueError(const std::string& what) : Error(ErrorKind::value, what) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};
struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};
struct CheckpointError : Error {
    explicit CheckpointError(const std::string& what) : Error(ErrorKind::checkpoint, what) {}
};

inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::numeric: return 4;
    case ErrorKind::checkpoint: return 5;
    case ErrorKind::shape:
    case ErrorKind::value: return 1;
    }
    return 1;
}

} // namespace grevnet
