#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace givt {

enum class ErrorCode {
    shape_mismatch,
    domain,
    non_finite,
    non_scalar,
    invalid_argument,
    unsupported,
    io,
    format,
    config_mismatch,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so callers
/// (and the CLI) can react to the category without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace givt
