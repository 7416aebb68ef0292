#include "emarig/unit_synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "emarig/error.hpp"
#include "emarig/kv_config.hpp"

namespace emarig {

namespace {

constexpr const char* kModule = "unit_synth";
constexpr double kTimeEps = 1e-9;

double stacked_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).squaredNorm();
  return std::sqrt(sum);
}

std::vector<std::vector<std::size_t>> candidates_for(const std::vector<AnimationUnit>& db,
                                                     const SynthesisRequest& request) {
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < db.size(); ++i) by_label[db[i].label].push_back(i);
  for (auto& [label, list] : by_label) {
    std::stable_sort(list.begin(), list.end(), [&db](std::size_t a, std::size_t b) {
      return db[a].source_index < db[b].source_index;
    });
  }
  std::vector<std::vector<std::size_t>> out;
  for (const auto& item : request.items) {
    const auto it = by_label.find(item.label);
    if (it == by_label.end()) {
      throw Error(kModule, "NoCandidate", fmt::format("no unit labelled '{}' in the database", item.label));
    }
    out.push_back(it->second);
  }
  return out;
}

// `frame` carried along by the change from pose `from` to pose `to`.
// Identity when the two poses agree.
ClipFrame displace(const ClipFrame& frame, const ClipFrame& from, const ClipFrame& to) {
  ClipFrame out = frame;
  for (std::size_t k = 0; k < frame.bones.size(); ++k) {
    const Quat d = to.bones[k].rotation * from.bones[k].rotation.conjugate();
    out.bones[k].rotation = (d * frame.bones[k].rotation).normalized();
    out.bones[k].head += to.bones[k].head - from.bones[k].head;
    out.bones[k].stretch += to.bones[k].stretch - from.bones[k].stretch;
  }
  const RigidTransform d = to.jaw.transform() * from.jaw.transform().inverse();
  out.jaw = JawKey::from(d * frame.jaw.transform());
  return out;
}

bool lex_less(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

void SynthesisRequest::validate() const {
  if (items.empty()) throw Error(kModule, "BadRequest", "request has no items");
  for (const auto& it : items) {
    if (!(it.duration > 0.0) || !std::isfinite(it.duration)) {
      throw Error(kModule, "BadRequest", fmt::format("duration of '{}' must be positive", it.label));
    }
  }
  if (!(w_target >= 0.0) || !(w_join >= 0.0) || !std::isfinite(w_target) || !std::isfinite(w_join)) {
    throw Error(kModule, "BadRequest", "weights must be finite and non-negative");
  }
  if (!(blend_window >= 0.0)) throw Error(kModule, "BadRequest", "blend window must be non-negative");
}

std::vector<RequestItem> parse_request_items(std::string_view text) {
  std::vector<RequestItem> items;
  for (const auto& part : split(text, ';')) {
    const auto item = trim(part);
    if (item.empty()) continue;
    const auto sp = item.find_last_of(" \t");
    if (sp == std::string_view::npos) {
      throw Error(kModule, "BadRequest", fmt::format("'{}' is not `label duration`", item));
    }
    RequestItem r;
    r.label = std::string(trim(item.substr(0, sp)));
    r.duration = parse_double(item.substr(sp + 1), kModule, fmt::format("request item '{}'", item));
    if (r.label.empty()) throw Error(kModule, "BadRequest", fmt::format("'{}' has no label", item));
    items.push_back(std::move(r));
  }
  if (items.empty()) throw Error(kModule, "BadRequest", "request has no items");
  return items;
}

double target_cost(const AnimationUnit& unit, double requested) {
  return std::abs(std::log(unit.duration() / requested));
}

double join_cost(const AnimationUnit& left, const AnimationUnit& right, double lambda) {
  if (right.source_index == left.source_index + 1) return 0.0;
  return stacked_distance(left.last_positions, right.first_positions) +
         lambda * stacked_distance(left.last_velocities, right.first_velocities);
}

std::vector<std::size_t> SynthesisPlan::source_sequence() const {
  std::vector<std::size_t> s;
  for (const auto& c : chosen) s.push_back(c.source_index);
  return s;
}

SynthesisPlan evaluate_plan(const std::vector<AnimationUnit>& db, const SynthesisRequest& request,
                            const std::vector<std::size_t>& units, const CostModel& model) {
  SynthesisPlan plan;
  double acc = 0.0;
  for (std::size_t k = 0; k < units.size(); ++k) {
    const auto& u = db.at(units[k]);
    const auto& item = request.items.at(k);
    if (k > 0) {
      const double j = model.join(db[units[k - 1]], u);
      plan.join_costs.push_back(j);
      acc += request.w_join * j;
    }
    const double t = model.target(u, item.duration);
    plan.target_costs.push_back(t);
    acc += request.w_target * t;
    plan.chosen.push_back(PlannedUnit{units[k], u.source_index, u.label, u.start, u.end,
                                      item.duration, item.duration / u.duration()});
  }
  plan.total = acc;
  return plan;
}

SynthesisPlan select_units(const std::vector<AnimationUnit>& db, const SynthesisRequest& request,
                           const CostModel& model) {
  request.validate();
  const auto cands = candidates_for(db, request);
  const std::size_t slots = cands.size();

  struct State {
    double cost;
    std::vector<std::size_t> path;  // database indices
    std::vector<std::size_t> sources;
  };
  std::vector<State> prev;
  for (std::size_t c : cands[0]) {
    prev.push_back(State{request.w_target * model.target(db[c], request.items[0].duration), {c},
                         {db[c].source_index}});
  }
  for (std::size_t k = 1; k < slots; ++k) {
    std::vector<State> next;
    next.reserve(cands[k].size());
    for (std::size_t c : cands[k]) {
      const State* best = nullptr;
      double best_cost = std::numeric_limits<double>::infinity();
      for (const auto& p : prev) {
        const double v = p.cost + request.w_join * model.join(db[p.path.back()], db[c]);
        if (best == nullptr || v < best_cost || (v == best_cost && lex_less(p.sources, best->sources))) {
          best = &p;
          best_cost = v;
        }
      }
      State s{best_cost + request.w_target * model.target(db[c], request.items[k].duration),
              best->path, best->sources};
      s.path.push_back(c);
      s.sources.push_back(db[c].source_index);
      next.push_back(std::move(s));
    }
    prev = std::move(next);
  }
  const State* best = &prev.front();
  for (const auto& s : prev) {
    if (s.cost < best->cost || (s.cost == best->cost && lex_less(s.sources, best->sources))) best = &s;
  }
  SynthesisPlan plan = evaluate_plan(db, request, best->path, model);
  plan.total = best->cost;
  return plan;
}

SynthesisPlan select_units_exhaustive(const std::vector<AnimationUnit>& db,
                                      const SynthesisRequest& request, const CostModel& model) {
  request.validate();
  const auto cands = candidates_for(db, request);
  std::vector<std::size_t> idx(cands.size(), 0);
  std::vector<std::size_t> units(cands.size());
  std::optional<SynthesisPlan> best;
  while (true) {
    for (std::size_t k = 0; k < cands.size(); ++k) units[k] = cands[k][idx[k]];
    SynthesisPlan p = evaluate_plan(db, request, units, model);
    if (!best || p.total < best->total ||
        (p.total == best->total && lex_less(p.source_sequence(), best->source_sequence()))) {
      best = std::move(p);
    }
    std::size_t k = cands.size();
    while (k > 0) {
      --k;
      if (++idx[k] < cands[k].size()) break;
      idx[k] = 0;
      if (k == 0) return *best;
    }
  }
}

AnimationClip render_plan(const SynthesisPlan& plan, const AnimationClip& clip, double blend_window) {
  AnimationClip out;
  out.rate_hz = clip.rate_hz;
  out.armature = clip.armature;
  if (plan.chosen.empty()) return out;

  const std::size_t n = plan.chosen.size();
  std::vector<double> offsets(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + plan.chosen[i].requested;

  // Cross-fade half-widths at each junction (between unit i-1 and i).
  std::vector<double> half(n, 0.0);
  std::vector<ClipFrame> first(n);
  std::vector<ClipFrame> last(n);
  for (std::size_t i = 0; i < n; ++i) {
    first[i] = clip.sample(plan.chosen[i].start);
    last[i] = clip.sample(plan.chosen[i].end);
    if (i > 0) {
      half[i] = std::min({blend_window, 0.5 * plan.chosen[i - 1].requested, 0.5 * plan.chosen[i].requested});
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& u = plan.chosen[i];
    const double warp = u.warp;
    const double o = offsets[i];
    const double o_next = offsets[i + 1];

    std::vector<std::pair<double, ClipFrame>> keys;
    auto lo = std::lower_bound(clip.times.begin(), clip.times.end(), u.start - kTimeEps);
    std::size_t k = static_cast<std::size_t>(lo - clip.times.begin());
    if (k >= clip.times.size() || clip.times[k] > u.start + kTimeEps) {
      keys.emplace_back(o, first[i]);
    }
    for (; k < clip.times.size() && clip.times[k] < u.end - kTimeEps; ++k) {
      const double tk = clip.times[k];
      const double t = tk <= u.start + kTimeEps ? o : (tk - u.start) * warp + o;
      if (t >= o_next - kTimeEps) break;
      keys.emplace_back(t, clip.frames[k]);
    }

    for (auto& [t, frame] : keys) {
      if (i + 1 < n && half[i + 1] > 0.0 && t >= o_next - half[i + 1]) {
        const double b = half[i + 1];
        const double alpha = 0.5 * (t - (o_next - b)) / b;
        frame = blend_frames(frame, displace(frame, last[i], first[i + 1]), alpha);
      } else if (i > 0 && half[i] > 0.0 && t < o + half[i]) {
        const double b = half[i];
        const double alpha = 0.5 + 0.5 * (t - o) / b;
        frame = blend_frames(displace(frame, first[i], last[i - 1]), frame, alpha);
      }
      if (!out.times.empty() && !(t > out.times.back())) continue;
      out.times.push_back(t);
      out.frames.push_back(std::move(frame));
    }
  }
  out.duration = offsets[n];
  return out;
}

}  // namespace emarig
