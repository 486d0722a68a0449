#pragma once

#include <string>
#include <vector>

namespace statefuse {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Reduced-size property suite behind `statefuse check`.
std::vector<CheckResult> run_property_checks();

}  // namespace statefuse
