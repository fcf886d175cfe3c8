#pragma once

#include <functional>
#include <string>
#include <vector>

namespace driftnet {

struct SelfCheck {
  std::string name;
  std::string description;
  // Empty on success, otherwise what went wrong.
  std::function<std::string()> run;
};

const std::vector<SelfCheck>& self_checks();

}  // namespace driftnet
