#include <cstdlib>
#include <iostream>

#include "acceptance_suite.hpp"

int main() {
  ttamon::acceptance::Options options;
  if (const char* scale = std::getenv("TTAMON_ACCEPTANCE_SCALE")) options.scale = std::atof(scale);
  bool all_pass = true;
  for (const auto& r : ttamon::acceptance::run_all(options)) {
    std::cout << ttamon::acceptance::format(r) << '\n';
    all_pass = all_pass && r.pass;
  }
  return all_pass ? 0 : 1;
}
