#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace ttamon::acceptance {

struct Options {
  /// Multiplies every Monte Carlo repetition count (1 = full suite).
  double scale = 1.0;
  /// Worker threads for independent repetitions; 0 = hardware concurrency.
  std::size_t threads = 0;
  /// Directory holding the shipped experiment configs.
  std::string config_dir;
  /// Progress messages, one per criterion, when set.
  std::ostream* log = nullptr;
};

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Directory of the configs in the source tree this binary was built from.
std::string default_config_dir();

std::vector<CriterionResult> run_all(const Options& options);

/// "PASS <id> <name>: <detail>" or "FAIL ...".
std::string format(const CriterionResult& result);

}  // namespace ttamon::acceptance
