#pragma once

#include <stdexcept>
#include <string>

namespace align {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  boundary_allocation,
  simplex_violation,
  overflow,
  empty_input,
  strategy_mismatch,
  schema,
  incomplete_subject,
  sum_violation,
  unknown_principle,
  unknown_id,
  stage_order,
  not_found,
  io,
};

const char* to_string(Errc code) noexcept;

// Every failure raised by the library carries a machine-readable code so the
// CLI and the HTTP service can map it onto exit codes and status codes.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace align
