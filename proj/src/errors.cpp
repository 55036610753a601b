#include "chartwave/errors.hpp"

#include <utility>

namespace chartwave {

namespace {

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

}  // namespace

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error("invalid configuration: " + join(violations, "; ")),
      violations_(std::move(violations)) {}

RecordError::RecordError(std::string message, std::vector<std::string> offending_ids)
    : Error(message + (offending_ids.empty() ? "" : ": " + join(offending_ids, ", "))),
      offending_(std::move(offending_ids)) {}

}  // namespace chartwave
