#include "givt/error.hpp"

namespace givt {

std::string_view to_string(ErrorCode code) noexcept
{
    switch (code) {
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::domain: return "domain";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::non_scalar: return "non_scalar";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::config_mismatch: return "config_mismatch";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
{
}

} // namespace givt
