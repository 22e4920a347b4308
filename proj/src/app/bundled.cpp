#include <map>

#include "ctstl/cli.hpp"
#include "ctstl/errors.hpp"

namespace ctstl {

namespace {

#include "bundled_scenarios.inc"

}  // namespace

std::vector<std::string> bundled_names() {
  std::vector<std::string> out;
  for (const auto& [name, text] : kBundled) out.push_back(name);
  return out;
}

const std::string& bundled_text(const std::string& name) {
  static const std::map<std::string, std::string> table(std::begin(kBundled), std::end(kBundled));
  const auto it = table.find(name);
  if (it == table.end()) throw InvalidScenario("no bundled scenario named '" + name + "'");
  return it->second;
}

}  // namespace ctstl
