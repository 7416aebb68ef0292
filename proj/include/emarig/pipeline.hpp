#pragma once

#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "emarig/anim_db.hpp"
#include "emarig/bundle.hpp"
#include "emarig/ema_io.hpp"
#include "emarig/ik_solver.hpp"
#include "emarig/mesh.hpp"
#include "emarig/motion_prep.hpp"
#include "emarig/rig.hpp"
#include "emarig/trajectories.hpp"
#include "emarig/unit_synth.hpp"

namespace emarig {

struct PipelineConfig {
  std::filesystem::path base_dir;  // relative paths in the file resolve here
  std::vector<std::filesystem::path> ema;
  std::filesystem::path layout;
  std::filesystem::path rig_graph;
  std::optional<std::filesystem::path> mesh;  // OBJ; procedural mesh when absent
  std::vector<std::filesystem::path> segmentation;  // one tier, or one per sweep
  std::vector<std::filesystem::path> audio;

  CoilRoles roles;
  double rms_ceiling = std::numeric_limits<double>::infinity();
  SmoothingSpec smoothing;
  IkParams ik;
  RigConfig rig;
  DefaultMeshParams mesh_params;

  double w_target = 1.0;
  double w_join = 1.0;
  double join_lambda = 0.01;
  double blend_window = 0.04;
};

// Parses the config text and checks it against the referenced layout:
// missing files and role/channel mismatches fail here, before any EMA data is
// read.
PipelineConfig parse_pipeline_config(std::string_view text, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct PreparedEma {
  PosLayout layout;
  std::vector<EmaSweep> raw;
  std::vector<EmaSweep> normalized;  // head motion removed, dropouts filled
  std::vector<EmaSweep> smoothed;    // equal to `normalized` when smoothing is off
};

PreparedEma prepare_ema(const PipelineConfig& cfg, bool smoothing = true);

EmaSweep concatenate(std::span<const EmaSweep> sweeps);

// Tier over the concatenated timeline: a single file is taken as is, one file
// per sweep is shifted by the sweep start times.
std::optional<SegmentTier> load_segmentation(const PipelineConfig& cfg, std::span<const EmaSweep> sweeps);

struct CompileOptions {
  bool smoothing = true;
  std::optional<std::filesystem::path> report;  // per-frame residual table
};

struct CompileResult {
  Bundle bundle;
  CompiledRig rig;
  AnimationClip clip;
  std::optional<SegmentTier> tier;
  std::size_t nonconverged = 0;
  double max_residual = 0.0;
};

// Builds the rig and animation in memory without writing anything.
CompileResult build_model(const PipelineConfig& cfg, const PreparedEma& ema);

CompileResult run_compile(const PipelineConfig& cfg, const std::filesystem::path& out,
                          const CompileOptions& opts, std::ostream& log);

struct SynthOptions {
  bool exhaustive = false;
  std::optional<std::filesystem::path> out;
};

struct SynthResult {
  SynthesisPlan plan;
  std::optional<SynthesisPlan> exhaustive;
  AnimationClip clip;
};

// `request` weights and blend window are taken from the caller.
SynthResult run_synth(const std::filesystem::path& bundle_dir, const SynthesisRequest& request,
                      double join_lambda, const SynthOptions& opts, std::ostream& log);

struct CoilRms {
  std::string coil;
  double rms = 0.0;
  double max = 0.0;
};

struct ValidationReport {
  std::vector<CoilRms> coils;
  double worst = 0.0;
  std::size_t frames = 0;
};

// Seed-vertex trajectories replayed from the bundle's model against the
// head-normalized, dropout-filled (unsmoothed) source coils.
ValidationReport run_validate(const std::filesystem::path& bundle_dir, const PipelineConfig& cfg);

struct DumpOptions {
  TrajectorySpace space = TrajectorySpace::Ema;
  bool smoothing = true;
  bool raw = false;  // coils only: the recording before any processing
  std::optional<std::filesystem::path> bundle;
};

TrajectoryDump run_dump(TrajectoryKind kind, const PipelineConfig& cfg, const DumpOptions& opts);

}  // namespace emarig
