#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dag {

// Values are stable: the C API and the CLI exit codes are derived from them.
enum class ErrorCode : int {
    Internal = 1,
    Config = 2,
    MissingInput = 3,
    Acceptance = 4,
    InvalidArgument = 10,
    DegenerateShape = 11,
    AlignmentDegenerate = 12,
    SingularConfiguration = 13,
    NoNeighbor = 14,
    DegenerateVector = 15,
    InsufficientPairs = 16,
    Io = 17,
    Cache = 18,
    NonFiniteLoss = 19,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

const char* error_code_name(ErrorCode code) noexcept;

}  // namespace dag
