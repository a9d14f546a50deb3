#include "ensdiff/aggregate.hpp"

namespace ensdiff {

std::string to_string(AggregationRule rule) {
  switch (rule) {
    case AggregationRule::Arithmetic: return "arithmetic";
    case AggregationRule::Geometric: return "geometric";
    case AggregationRule::Median: return "median";
    case AggregationRule::Dominant: return "dominant";
    case AggregationRule::Sum: return "sum";
  }
  return "unknown";
}

AggregationRule parse_rule(std::string_view name) {
  for (auto rule : kAllRules)
    if (to_string(rule) == name) return rule;
  throw DomainError("unknown aggregation rule '" + std::string(name) + "'");
}

}  // namespace ensdiff
