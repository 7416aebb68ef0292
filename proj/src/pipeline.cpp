#include "emarig/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "emarig/collada.hpp"
#include "emarig/error.hpp"
#include "emarig/kv_config.hpp"
#include "emarig/rig_graph.hpp"

namespace fs = std::filesystem;

namespace emarig {

namespace {

constexpr const char* kModule = "config";

const std::set<std::string> kKnownKeys{
    "input.ema",          "input.layout",         "input.rig_graph",     "input.mesh",
    "input.segmentation", "input.audio",          "roles.reference",     "roles.jaw",
    "roles.tongue",       "prep.rms_ceiling",     "smoothing.kind",      "smoothing.window",
    "smoothing.order",    "ik.tolerance",         "ik.max_iterations",   "ik.s_min",
    "ik.s_max",           "rig.root_point",       "rig.root_offset",     "rig.influence_cap",
    "rig.weight_exponent", "rig.distance_floor",  "mesh.length",         "mesh.width",
    "mesh.height",        "mesh.rings",           "mesh.segments",       "mesh.arch_segments",
    "synth.w_target",     "synth.w_join",         "synth.lambda",        "synth.blend"};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void require_file(const fs::path& p, const std::string& key) {
  if (!fs::is_regular_file(p)) {
    throw Error(kModule, "MissingFile", fmt::format("{}: '{}' does not exist", key, p.string()));
  }
}

}  // namespace

PipelineConfig parse_pipeline_config(std::string_view text, const fs::path& base_dir) {
  const auto kv = KeyValueFile::parse(text, kModule);
  for (const auto& key : kv.keys()) {
    const bool prefixed = key.rfind("ik.weight.", 0) == 0 || key.rfind("rig.seed.", 0) == 0;
    if (!prefixed && !kKnownKeys.count(key)) {
      throw Error(kModule, "UnknownKey", fmt::format("line {}: unknown key '{}'", kv.line_of(key), key));
    }
  }

  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  for (const auto& e : kv.get_list("input.ema")) cfg.ema.push_back(resolve(base_dir, e));
  if (cfg.ema.empty()) throw Error(kModule, "MissingKey", "input.ema lists no sweeps");
  cfg.layout = resolve(base_dir, kv.require("input.layout"));
  cfg.rig_graph = resolve(base_dir, kv.require("input.rig_graph"));
  if (auto m = kv.get("input.mesh"); m && !m->empty()) cfg.mesh = resolve(base_dir, *m);
  for (const auto& s : kv.get_list("input.segmentation")) cfg.segmentation.push_back(resolve(base_dir, s));
  for (const auto& a : kv.get_list("input.audio")) cfg.audio.push_back(resolve(base_dir, a));

  cfg.roles.reference = kv.get_list("roles.reference");
  if (auto j = kv.get("roles.jaw"); j && !j->empty()) cfg.roles.jaw = *j;
  cfg.roles.tongue = kv.get_list("roles.tongue");

  cfg.rms_ceiling = kv.get_double("prep.rms_ceiling", cfg.rms_ceiling);
  if (auto k = kv.get("smoothing.kind")) cfg.smoothing.kind = parse_smoothing_kind(*k);
  cfg.smoothing.window_frames = kv.get_int("smoothing.window", cfg.smoothing.window_frames);
  cfg.smoothing.polynomial_order = kv.get_int("smoothing.order", cfg.smoothing.polynomial_order);
  cfg.smoothing.validate();

  cfg.ik.tolerance = kv.get_double("ik.tolerance", cfg.ik.tolerance);
  cfg.ik.max_iterations = kv.get_int("ik.max_iterations", cfg.ik.max_iterations);
  cfg.ik.s_min = kv.get_double("ik.s_min", cfg.ik.s_min);
  cfg.ik.s_max = kv.get_double("ik.s_max", cfg.ik.s_max);
  for (const auto& key : kv.keys()) {
    if (key.rfind("ik.weight.", 0) == 0) cfg.ik.target_weights[key.substr(10)] = kv.get_double(key, 1.0);
  }
  cfg.ik.validate();

  cfg.rig = parse_rig_config(kv.section("rig"));

  cfg.mesh_params.length = kv.get_double("mesh.length", cfg.mesh_params.length);
  cfg.mesh_params.width = kv.get_double("mesh.width", cfg.mesh_params.width);
  cfg.mesh_params.height = kv.get_double("mesh.height", cfg.mesh_params.height);
  cfg.mesh_params.rings = kv.get_int("mesh.rings", cfg.mesh_params.rings);
  cfg.mesh_params.segments = kv.get_int("mesh.segments", cfg.mesh_params.segments);
  cfg.mesh_params.arch_segments = kv.get_int("mesh.arch_segments", cfg.mesh_params.arch_segments);
  cfg.mesh_params.validate();

  cfg.w_target = kv.get_double("synth.w_target", cfg.w_target);
  cfg.w_join = kv.get_double("synth.w_join", cfg.w_join);
  cfg.join_lambda = kv.get_double("synth.lambda", cfg.join_lambda);
  cfg.blend_window = kv.get_double("synth.blend", cfg.blend_window);

  for (std::size_t i = 0; i < cfg.ema.size(); ++i) require_file(cfg.ema[i], "input.ema");
  require_file(cfg.layout, "input.layout");
  require_file(cfg.rig_graph, "input.rig_graph");
  if (cfg.mesh) require_file(*cfg.mesh, "input.mesh");
  for (const auto& s : cfg.segmentation) require_file(s, "input.segmentation");
  for (const auto& a : cfg.audio) require_file(a, "input.audio");
  if (!cfg.segmentation.empty() && cfg.segmentation.size() != 1 && cfg.segmentation.size() != cfg.ema.size()) {
    throw Error(kModule, "BadValue", "input.segmentation needs one file, or one per sweep");
  }

  const auto layout = parse_layout(read_text_file(cfg.layout));
  cfg.roles.resolve(layout.channels);
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw Error(kModule, "MissingFile", fmt::format("config file '{}' does not exist", path.string()));
  }
  return parse_pipeline_config(read_text_file(path), path.parent_path());
}

PreparedEma prepare_ema(const PipelineConfig& cfg, bool smoothing) {
  PreparedEma out;
  out.layout = parse_layout(read_text_file(cfg.layout));
  std::optional<std::array<Vec3, 3>> reference;
  for (const auto& path : cfg.ema) {
    EmaSweep raw = read_pos_file(path, out.layout);
    EmaSweep flagged = flag_dropouts(raw, cfg.rms_ceiling);
    if (!reference) {
      const auto f = first_valid_reference_frame(flagged, cfg.roles);
      if (!f) {
        throw Error("motion_prep", "NoValidReferenceFrame",
                    fmt::format("{}: no frame has all reference coils valid", path.filename().string()));
      }
      reference = reference_points(flagged, cfg.roles, *f);
    }
    EmaSweep normalized = fill_dropouts(normalize_head(flagged, cfg.roles, reference));
    normalized.sweep_id = raw.sweep_id;
    EmaSweep smoothed = smoothing && cfg.smoothing.kind != SmoothingKind::None
                            ? smooth(normalized, cfg.smoothing)
                            : normalized;
    out.raw.push_back(std::move(raw));
    out.normalized.push_back(std::move(normalized));
    out.smoothed.push_back(std::move(smoothed));
  }
  return out;
}

EmaSweep concatenate(std::span<const EmaSweep> sweeps) {
  EmaSweep out;
  if (sweeps.empty()) return out;
  out.rate_hz = sweeps.front().rate_hz;
  out.channels = sweeps.front().channels;
  out.sweep_id = sweeps.front().sweep_id;
  for (const auto& s : sweeps) {
    if (s.channels != out.channels || s.rate_hz != out.rate_hz) {
      throw Error("anim_db", "RateMismatch", fmt::format("sweep '{}' does not match the first sweep", s.sweep_id));
    }
    out.samples.insert(out.samples.end(), s.samples.begin(), s.samples.end());
  }
  return out;
}

std::optional<SegmentTier> load_segmentation(const PipelineConfig& cfg, std::span<const EmaSweep> sweeps) {
  if (cfg.segmentation.empty()) return std::nullopt;
  std::vector<SegmentTier> tiers;
  for (const auto& p : cfg.segmentation) {
    try {
      tiers.push_back(parse_segmentation(read_text_file(p)));
    } catch (const Error& e) {
      throw Error(e.module(), e.code(), fmt::format("{}: {}", p.filename().string(), e.message()));
    }
  }
  if (tiers.size() == 1 && sweeps.size() != 1) return tiers.front();
  std::vector<double> offsets;
  double t = 0.0;
  for (std::size_t i = 0; i < tiers.size(); ++i) {
    tiers[i].check_within(sweeps[i].duration());
    offsets.push_back(t);
    t += sweeps[i].duration();
  }
  return merge_tiers(tiers, offsets);
}

CompileResult build_model(const PipelineConfig& cfg, const PreparedEma& ema) {
  const RigGraph graph = parse_rig_graph(read_text_file(cfg.rig_graph));
  SkinnedMesh mesh = cfg.mesh ? load_mesh(read_text_file(*cfg.mesh)) : generate_default_mesh(cfg.mesh_params);
  RigConfig rig_cfg = cfg.rig;
  if (!cfg.mesh && rig_cfg.seeds.empty()) rig_cfg.seeds = default_seed_points(mesh, cfg.mesh_params);

  CompileResult r;
  r.rig = compile_rig(graph, ema.smoothed.front(), cfg.roles, std::move(mesh), rig_cfg);
  r.clip = bake(ema.smoothed, r.rig, cfg.ik);
  r.tier = load_segmentation(cfg, ema.smoothed);
  if (r.tier) r.tier->check_within(r.clip.duration);
  for (double res : r.clip.residuals) {
    r.max_residual = std::max(r.max_residual, res);
    if (res > cfg.ik.tolerance) ++r.nonconverged;
  }
  return r;
}

CompileResult run_compile(const PipelineConfig& cfg, const fs::path& out, const CompileOptions& opts,
                          std::ostream& log) {
  const PreparedEma ema = prepare_ema(cfg, opts.smoothing);
  CompileResult r = build_model(cfg, ema);

  BundleParts parts;
  parts.model = write_collada(r.rig, r.clip);
  if (r.tier) parts.segmentation = format_segmentation(*r.tier);
  parts.layout = ema.layout;
  parts.audio = cfg.audio;
  auto record = [&parts](const fs::path& p) {
    parts.sources.push_back(SourceRecord{p.filename().string(), sha256_hex(read_file_bytes(p))});
  };
  for (const auto& p : cfg.ema) record(p);
  record(cfg.layout);
  record(cfg.rig_graph);
  if (cfg.mesh) record(*cfg.mesh);
  for (const auto& p : cfg.segmentation) record(p);
  r.bundle = write_bundle(out, parts);

  if (opts.report) {
    std::string table = "# frame time_s max_residual_cm iterations\n";
    for (std::size_t k = 0; k < r.clip.key_count(); ++k) {
      table += fmt::format("{} {} {:.9g} {}\n", k, r.clip.times[k], r.clip.residuals[k], r.clip.iterations[k]);
    }
    write_text_file(*opts.report, table);
  }

  fmt::print(log, "frames: {} ({} sweep(s), {} s)\n", r.clip.key_count(), ema.raw.size(), r.clip.duration);
  fmt::print(log, "max residual: {:.6g} cm\n", r.max_residual);
  fmt::print(log, "non-convergent frames: {} (tolerance {} cm)\n", r.nonconverged, cfg.ik.tolerance);
  fmt::print(log, "registration rms: {:.6g} cm, scale {:.9g}\n", r.rig.meta.registration_rms,
             r.rig.meta.registration.scale);
  if (r.tier) fmt::print(log, "segments: {}\n", r.tier->segments.size());
  fmt::print(log, "bundle: {}\n", out.string());
  return r;
}

SynthResult run_synth(const fs::path& bundle_dir, const SynthesisRequest& request, double join_lambda,
                      const SynthOptions& opts, std::ostream& log) {
  const Bundle bundle = open_bundle(bundle_dir);
  const auto seg = bundle.segmentation_path();
  if (!seg) throw Error("unit_synth", "MissingSegmentation", "bundle has no segmentation.txt");
  const ColladaScene scene = read_collada(read_text_file(bundle.model_path()));
  const SegmentTier tier = parse_segmentation(read_text_file(*seg));
  const auto db = build_unit_db(scene.clip, tier);
  const CostModel model(join_lambda);

  SynthResult r;
  r.plan = select_units(db, request, model);
  if (opts.exhaustive) {
    double combos = 1.0;
    for (const auto& item : request.items) {
      combos *= static_cast<double>(std::count_if(db.begin(), db.end(), [&](const AnimationUnit& u) {
        return u.label == item.label;
      }));
    }
    if (combos > 1e6) {
      throw Error("unit_synth", "TooLarge",
                  fmt::format("exhaustive search over {:.0f} assignments refused (limit 1e6)", combos));
    }
    r.exhaustive = select_units_exhaustive(db, request, model);
  }
  for (std::size_t i = 0; i < r.plan.chosen.size(); ++i) {
    const auto& c = r.plan.chosen[i];
    fmt::print(log, "slot {}: {} <- unit {} [{:.4f}, {:.4f}) warp {:.4f} target {:.6g}", i + 1, c.label,
               c.source_index, c.start, c.end, c.warp, r.plan.target_costs[i]);
    if (i > 0) fmt::print(log, " join {:.6g}", r.plan.join_costs[i - 1]);
    fmt::print(log, "\n");
  }
  fmt::print(log, "total cost: {:.17g}\n", r.plan.total);
  if (r.exhaustive) {
    const bool same = r.exhaustive->total == r.plan.total;
    fmt::print(log, "exhaustive minimum: {:.17g} ({})\n", r.exhaustive->total, same ? "match" : "MISMATCH");
    if (!same) {
      throw Error("unit_synth", "OracleMismatch", "dynamic programming and exhaustive search disagree");
    }
  }
  r.clip = render_plan(r.plan, scene.clip, request.blend_window);
  if (opts.out) {
    write_text_file(*opts.out, write_collada(scene.rig, r.clip));
    fmt::print(log, "clip: {} ({} keys, {:.6g} s)\n", opts.out->string(), r.clip.key_count(), r.clip.duration);
  }
  return r;
}

ValidationReport run_validate(const fs::path& bundle_dir, const PipelineConfig& cfg) {
  const Bundle bundle = open_bundle(bundle_dir);
  const ColladaScene scene = read_collada(read_text_file(bundle.model_path()));
  const PreparedEma ema = prepare_ema(cfg, false);
  const EmaSweep source = concatenate(ema.normalized);
  if (scene.rig.meta.seed_vertices.empty()) {
    throw Error("export", "IncompatibleBundle", "bundle model records no seed vertices");
  }
  if (scene.clip.key_count() != source.frame_count()) {
    throw Error("export", "IncompatibleBundle",
                fmt::format("bundle animation has {} keys but the source has {} frames", scene.clip.key_count(),
                            source.frame_count()));
  }
  const EmaSweep replay = seed_vertex_trajectories(scene.rig, scene.clip, TrajectorySpace::Ema);
  ValidationReport rep;
  rep.frames = source.frame_count();
  for (std::size_t c = 0; c < replay.channels.size(); ++c) {
    const auto& coil = replay.channels[c];
    const auto src = source.find_channel(coil);
    if (!src) throw Error("export", "IncompatibleBundle", fmt::format("source has no coil '{}'", coil));
    CoilRms cr{coil, 0.0, 0.0};
    double sq = 0.0;
    std::size_t n = 0;
    for (std::size_t f = 0; f < source.frame_count(); ++f) {
      const auto& s = source.at(f, *src);
      if (!s.valid) continue;
      const double d = (replay.at(f, c).position - s.position).norm();
      sq += d * d;
      cr.max = std::max(cr.max, d);
      ++n;
    }
    cr.rms = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    rep.worst = std::max(rep.worst, cr.rms);
    rep.coils.push_back(cr);
  }
  return rep;
}

TrajectoryDump run_dump(TrajectoryKind kind, const PipelineConfig& cfg, const DumpOptions& opts) {
  const PreparedEma ema = prepare_ema(cfg, opts.smoothing);
  DumpInputs in;
  in.space = opts.space;
  in.units = ema.layout.units;
  const EmaSweep coils = concatenate(opts.raw ? ema.raw : ema.smoothed);
  in.coils = &coils;
  if (kind == TrajectoryKind::Coils) return dump_trajectories(kind, in);

  CompiledRig rig;
  AnimationClip clip;
  if (opts.bundle) {
    ColladaScene scene = read_collada(read_text_file(open_bundle(*opts.bundle).model_path()));
    rig = std::move(scene.rig);
    clip = std::move(scene.clip);
  } else {
    CompileResult r = build_model(cfg, ema);
    rig = std::move(r.rig);
    clip = std::move(r.clip);
  }
  in.rig = &rig;
  in.clip = &clip;
  return dump_trajectories(kind, in);
}

}  // namespace emarig
