#include "align/error.hpp"

namespace align {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::boundary_allocation: return "boundary allocation";
    case Errc::simplex_violation: return "simplex violation";
    case Errc::overflow: return "overflow";
    case Errc::empty_input: return "empty input";
    case Errc::strategy_mismatch: return "strategy/parameter mismatch";
    case Errc::schema: return "schema error";
    case Errc::incomplete_subject: return "incomplete subject";
    case Errc::sum_violation: return "sum violation";
    case Errc::unknown_principle: return "unknown principle";
    case Errc::unknown_id: return "unknown id";
    case Errc::stage_order: return "stage-order violation";
    case Errc::not_found: return "not found";
    case Errc::io: return "i/o error";
  }
  return "unknown error";
}

}  // namespace align
