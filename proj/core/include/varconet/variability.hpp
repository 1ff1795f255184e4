#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "varconet/types.hpp"

namespace varconet {

struct IccResult {
  double icc = 0.0;
  double msb = 0.0;  // between-subject mean square
  double msw = 0.0;  // within-subject mean square
  bool degenerate = false;
};

// One-way random-effects ICC(1,1) of an N x k (subjects x sessions) table.
// The raw value is returned, negative values included. A table with no
// variance at all yields icc = 0 with the degenerate flag set.
IccResult icc_oneway(const Matrix& x);

struct ConnectionVariation {
  double within_var = 0.0;   // MSW
  double between_var = 0.0;  // max(0, (MSB - MSW) / k)
  double icc = 0.0;
  bool degenerate = false;
};

struct VariationField {
  std::vector<ConnectionVariation> connections;
};

// sessions[s] is N x D: row i holds subject i's FC vector from session s.
VariationField variation_field(const std::vector<Matrix>& sessions);

enum class Quadrant { UpperLeft, LowerRight, MixedImproved, MixedDeclined, Unchanged };

const char* to_string(Quadrant q);

struct ConnectionDelta {
  double within_reduction = 0.0;  // within_baseline - within_target
  double between_increase = 0.0;  // between_target - between_baseline
  double delta_icc = 0.0;
  Quadrant quadrant = Quadrant::Unchanged;
};

// Upper-left: lower within- and higher between-subject variance; lower-right
// the opposite. Mixed cases are labeled by the sign of the ICC change.
std::vector<ConnectionDelta> delta_icc_flow(const VariationField& baseline,
                                            const VariationField& target);

struct FlowSummary {
  double mean_icc_baseline = 0.0;
  double mean_icc_target = 0.0;
  double percent_improved = 0.0;
  std::vector<std::pair<Quadrant, int>> census;
};

FlowSummary summarize_flow(const VariationField& baseline, const VariationField& target,
                           const std::vector<ConnectionDelta>& deltas);

nlohmann::json to_json(const FlowSummary& s);

}  // namespace varconet
