#include "common.hpp"

namespace dag {

const char* error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Internal: return "internal";
        case ErrorCode::Config: return "config";
        case ErrorCode::MissingInput: return "missing_input";
        case ErrorCode::Acceptance: return "acceptance";
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::DegenerateShape: return "degenerate_shape";
        case ErrorCode::AlignmentDegenerate: return "alignment_degenerate";
        case ErrorCode::SingularConfiguration: return "singular_configuration";
        case ErrorCode::NoNeighbor: return "no_neighbor";
        case ErrorCode::DegenerateVector: return "degenerate_vector";
        case ErrorCode::InsufficientPairs: return "insufficient_pairs";
        case ErrorCode::Io: return "io";
        case ErrorCode::Cache: return "cache";
        case ErrorCode::NonFiniteLoss: return "non_finite_loss";
    }
    return "unknown";
}

}  // namespace dag
