#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "emarig/anim_db.hpp"

namespace emarig {

struct RequestItem {
  std::string label;
  double duration = 0.0;  // seconds
};

struct SynthesisRequest {
  std::vector<RequestItem> items;
  double w_target = 1.0;
  double w_join = 1.0;
  double blend_window = 0.04;  // seconds

  void validate() const;
};

// `label duration; label duration; ...`
std::vector<RequestItem> parse_request_items(std::string_view text);

// |log(d / requested)|
double target_cost(const AnimationUnit& unit, double requested);

// 0 for corpus neighbours, otherwise |dp| + lambda * |dv| over the stacked
// boundary features (left's last against right's first).
double join_cost(const AnimationUnit& left, const AnimationUnit& right, double lambda = 0.01);

// Override either hook to change the cost function; select_units only sees
// this interface.
class CostModel {
 public:
  explicit CostModel(double lambda = 0.01) : lambda_(lambda) {}
  virtual ~CostModel() = default;

  virtual double target(const AnimationUnit& unit, double requested) const {
    return target_cost(unit, requested);
  }
  virtual double join(const AnimationUnit& left, const AnimationUnit& right) const {
    return join_cost(left, right, lambda_);
  }
  double lambda() const { return lambda_; }

 private:
  double lambda_;
};

struct PlannedUnit {
  std::size_t unit = 0;  // index into the database
  std::size_t source_index = 0;
  std::string label;
  double start = 0.0;
  double end = 0.0;
  double requested = 0.0;
  double warp = 1.0;  // requested / unit duration
};

struct SynthesisPlan {
  std::vector<PlannedUnit> chosen;
  std::vector<double> target_costs;  // per slot, unweighted
  std::vector<double> join_costs;    // per junction, unweighted
  double total = 0.0;                // weighted, accumulated slot by slot

  std::vector<std::size_t> source_sequence() const;
};

// Exact minimum of w_t * sum(target) + w_j * sum(join) by Viterbi over
// slots x candidates. Equal totals go to the lexicographically smallest
// source-index sequence.
SynthesisPlan select_units(const std::vector<AnimationUnit>& db, const SynthesisRequest& request,
                           const CostModel& model = CostModel{});

// Enumerates every assignment. Only meant for small instances.
SynthesisPlan select_units_exhaustive(const std::vector<AnimationUnit>& db,
                                      const SynthesisRequest& request,
                                      const CostModel& model = CostModel{});

// Costs of a fixed assignment (database indices, one per slot).
SynthesisPlan evaluate_plan(const std::vector<AnimationUnit>& db, const SynthesisRequest& request,
                            const std::vector<std::size_t>& units,
                            const CostModel& model = CostModel{});

// Time-warps the chosen source intervals back to back and cross-fades the
// junctions over min(blend_window, half of either warped unit). Near a
// junction each unit is faded toward a copy of itself shifted by the boundary
// mismatch, so both sides meet at the mid pose and matching boundaries are
// left untouched.
AnimationClip render_plan(const SynthesisPlan& plan, const AnimationClip& clip,
                          double blend_window = 0.04);

}  // namespace emarig
