#pragma once

#include <stdexcept>
#include <string>

namespace robstop {

// Exit-code family each error maps to at the CLI boundary.
enum class ErrorKind { Config, Cap, Io, Check };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

#define ROBSTOP_ERROR(Name, Kind)                                                   \
    struct Name : Error {                                                           \
        explicit Name(const std::string& what) : Error(ErrorKind::Kind, #Name ": " + what) {} \
    }

ROBSTOP_ERROR(CapExceeded, Cap);
ROBSTOP_ERROR(BadControl, Config);
ROBSTOP_ERROR(BadDelta, Config);
ROBSTOP_ERROR(BadWindow, Config);
ROBSTOP_ERROR(BadGrid, Config);
ROBSTOP_ERROR(ConfigError, Config);
ROBSTOP_ERROR(NotAdapted, Check);
ROBSTOP_ERROR(HypothesisFailed, Check);
ROBSTOP_ERROR(OptimalityGap, Check);
ROBSTOP_ERROR(IoError, Io);

#undef ROBSTOP_ERROR

}  // namespace robstop
