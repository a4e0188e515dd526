#pragma once

#include <string>
#include <vector>

#include "infnet/gradcheck.hpp"

namespace infnet {

struct ComponentReport {
  std::string component;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Central-difference audit of every op and composite, bottom of the stack
/// to the full two-block model on a small fixed schema. Deterministic.
std::vector<ComponentReport> run_grad_check_suite();

bool all_pass(const std::vector<ComponentReport>& reports);

}  // namespace infnet
