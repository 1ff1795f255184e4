#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace varconet {

struct GradcheckRow {
  std::string name;
  int points = 0;
  long coordinates = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradcheckOptions {
  int points = 20;
  double h = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

// Central-difference checks of every layer, the cosine FC, NT-Xent and the
// full encoder + NT-Xent composite at random points.
std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& options = {});

}  // namespace varconet
