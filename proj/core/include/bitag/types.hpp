#pragma once

#include <compare>
#include <stdexcept>
#include <string>

namespace bitag {

// Error taxonomy mapped to CLI exit codes: ConfigError -> 2, DataError -> 3,
// anything else -> 4.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Inclusive token span [start, end].
struct Span {
  int start = 0;
  int end = 0;
  auto operator<=>(const Span&) const = default;
};

struct SpanTriple {
  Span subject;
  Span object;
  int relation = 0;
  auto operator<=>(const SpanTriple&) const = default;
};

enum class MatchStandard { Partial, Exact };

MatchStandard parse_match_standard(const std::string& name);
std::string to_string(MatchStandard standard);

}  // namespace bitag
