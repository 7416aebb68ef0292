// emarig command-line driver: compile, synth, validate, dump, fixture.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "emarig/error.hpp"
#include "emarig/fixture.hpp"
#include "emarig/kv_config.hpp"
#include "emarig/pipeline.hpp"

namespace fs = std::filesystem;
using namespace emarig;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitValidation = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double parse_threshold(const std::string& s) {
  const auto v = parse_double(s, "cli", "--threshold");
  if (!(v >= 0.0)) throw UsageError("--threshold must be non-negative");
  return v;
}

int cmd_compile(const std::string& config, const std::string& out, bool no_smoothing, const std::string& report) {
  const auto cfg = load_pipeline_config(config);
  CompileOptions opts;
  opts.smoothing = !no_smoothing;
  if (!report.empty()) opts.report = report;
  run_compile(cfg, out, opts, std::cout);
  return kExitOk;
}

int cmd_synth(const std::string& bundle, const std::string& request_text, const std::string& request_file,
              const std::string& config, const std::string& out, bool exhaustive,
              std::optional<double> w_target, std::optional<double> w_join, std::optional<double> blend,
              std::optional<double> lambda) {
  SynthesisRequest req;
  double join_lambda = 0.01;
  if (!config.empty()) {
    const auto cfg = load_pipeline_config(config);
    req.w_target = cfg.w_target;
    req.w_join = cfg.w_join;
    req.blend_window = cfg.blend_window;
    join_lambda = cfg.join_lambda;
  }
  if (w_target) req.w_target = *w_target;
  if (w_join) req.w_join = *w_join;
  if (blend) req.blend_window = *blend;
  if (lambda) join_lambda = *lambda;
  if (request_text.empty() == request_file.empty()) {
    throw UsageError("give exactly one of --request or --request-file");
  }
  req.items = parse_request_items(request_text.empty() ? read_text_file(request_file) : request_text);
  SynthOptions opts;
  opts.exhaustive = exhaustive;
  if (!out.empty()) opts.out = out;
  run_synth(bundle, req, join_lambda, opts, std::cout);
  return kExitOk;
}

int cmd_validate(const std::string& bundle, const std::string& config, const std::string& threshold_text) {
  const double threshold = parse_threshold(threshold_text);
  const auto cfg = load_pipeline_config(config);
  const auto rep = run_validate(bundle, cfg);
  for (const auto& c : rep.coils) {
    fmt::print("{}: rms {:.6g} cm, max {:.6g} cm\n", c.coil, c.rms, c.max);
  }
  const bool pass = rep.worst <= threshold;
  fmt::print("worst rms {:.6g} cm over {} frames (threshold {} cm): {}\n", rep.worst, rep.frames, threshold,
             pass ? "PASS" : "FAIL");
  if (!pass) {
    fmt::print(std::cerr, "error:cli:ValidationFailed: worst coil rms {:.6g} cm exceeds {} cm\n", rep.worst,
               threshold);
    return kExitValidation;
  }
  return kExitOk;
}

int cmd_dump(const std::string& kind, const std::string& config, const std::string& out, const std::string& bundle,
             const std::string& space, bool no_smoothing, bool raw) {
  const auto k = parse_trajectory_kind(kind);
  const auto cfg = load_pipeline_config(config);
  DumpOptions opts;
  opts.smoothing = !no_smoothing;
  opts.raw = raw;
  if (space == "mesh") {
    opts.space = TrajectorySpace::Mesh;
  } else if (space != "ema") {
    throw UsageError("--space must be 'ema' or 'mesh'");
  }
  if (raw && k != TrajectoryKind::Coils) throw UsageError("--raw only applies to coils");
  if (!bundle.empty()) opts.bundle = bundle;
  const auto dump = run_dump(k, cfg, opts);
  const fs::path out_path(out);
  write_file_bytes(out_path, dump.bytes);
  fs::path sidecar = out_path;
  sidecar.replace_extension(".layout.cfg");
  write_text_file(sidecar, format_layout(dump.layout));
  fmt::print("{}: {} frames x {} channels -> {} (layout {})\n", kind, dump.sweep.frame_count(),
             dump.sweep.channel_count(), out_path.string(), sidecar.string());
  return kExitOk;
}

int cmd_fixture(const std::string& out, const FixtureParams& params) {
  const auto fx = make_fixture(params);
  const auto cfg = write_fixture(fx, out, params);
  fmt::print("fixture: {} sweep(s), {} channels, config {}\n", fx.sweeps.size(), fx.layout.channels.size(),
             cfg.string());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EMA-driven tongue rig compiler and articulatory unit-selection synthesizer"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  std::string config;
  std::string out;
  std::string report;
  std::string bundle;
  std::string request;
  std::string request_file;
  std::string threshold = "0.01";
  std::string kind;
  std::string space = "ema";
  bool no_smoothing = false;
  bool exhaustive = false;
  bool raw = false;
  std::optional<double> w_target;
  std::optional<double> w_join;
  std::optional<double> blend;
  std::optional<double> lambda;
  FixtureParams fixture;
  bool no_head_motion = false;
  bool no_dropouts = false;

  auto* compile = app.add_subcommand("compile", "Compile EMA sweeps, rig graph and mesh into a bundle");
  compile->add_option("--config", config, "Pipeline config file")->required();
  compile->add_option("--out", out, "Bundle directory to write")->required();
  compile->add_flag("--no-smoothing", no_smoothing, "Skip trajectory smoothing");
  compile->add_option("--report", report, "Write the per-frame residual table to this file");

  auto* synth = app.add_subcommand("synth", "Select and render units for a label/duration request");
  synth->add_option("bundle", bundle, "Bundle directory")->required();
  synth->add_option("--request", request, "Request, e.g. \"t 0.08; a 0.15\"");
  synth->add_option("--request-file", request_file, "File holding the request");
  synth->add_option("--config", config, "Config whose [synth] section supplies weights");
  synth->add_option("--out", out, "COLLADA file for the rendered clip");
  synth->add_flag("--exhaustive", exhaustive, "Cross-check the plan against exhaustive enumeration");
  synth->add_option("--w-target", w_target, "Target-cost weight");
  synth->add_option("--w-join", w_join, "Join-cost weight");
  synth->add_option("--blend", blend, "Cross-fade window in seconds");
  synth->add_option("--lambda", lambda, "Velocity weight of the join cost, seconds");

  auto* validate = app.add_subcommand("validate", "Compare a bundle's seed vertices with the source EMA");
  validate->add_option("bundle", bundle, "Bundle directory")->required();
  validate->add_option("--config", config, "Pipeline config naming the source EMA")->required();
  validate->add_option("--threshold", threshold, "Largest acceptable per-coil RMS in cm (inf allowed)");

  auto* dump = app.add_subcommand("dump", "Write trajectories as a .pos file");
  dump->add_option("kind", kind, "coils, ik_targets or seed_vertices")->required();
  dump->add_option("--config", config, "Pipeline config")->required();
  dump->add_option("--out", out, ".pos file to write")->required();
  dump->add_option("--bundle", bundle, "Use the rig and animation of this bundle");
  dump->add_option("--space", space, "ema (default) or mesh");
  dump->add_flag("--no-smoothing", no_smoothing, "Skip trajectory smoothing");
  dump->add_flag("--raw", raw, "coils only: dump the recording before head normalization");

  auto* fix = app.add_subcommand("fixture", "Generate deterministic synthetic EMA test data");
  fix->add_option("--out", out, "Directory to write")->required();
  fix->add_option("--seed", fixture.seed, "RNG seed");
  fix->add_option("--sweeps", fixture.sweeps, "Number of sweeps");
  fix->add_option("--seconds", fixture.seconds_per_sweep, "Length of each sweep in seconds");
  fix->add_option("--rate", fixture.rate_hz, "Sample rate in Hz");
  fix->add_option("--rings", fixture.mesh.rings, "Tongue mesh rings");
  fix->add_option("--segments", fixture.mesh.segments, "Tongue mesh segments");
  fix->add_flag("--no-head-motion", no_head_motion, "Keep the head still");
  fix->add_flag("--no-dropouts", no_dropouts, "Do not insert NaN dropouts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fmt::print(std::cerr, "error:cli:Usage: {}\n", e.what());
    return kExitUsage;
  }

  try {
    if (*compile) return cmd_compile(config, out, no_smoothing, report);
    if (*synth) {
      return cmd_synth(bundle, request, request_file, config, out, exhaustive, w_target, w_join, blend, lambda);
    }
    if (*validate) return cmd_validate(bundle, config, threshold);
    if (*dump) return cmd_dump(kind, config, out, bundle, space, no_smoothing, raw);
    if (*fix) {
      fixture.head_motion = !no_head_motion;
      fixture.dropouts = !no_dropouts;
      return cmd_fixture(out, fixture);
    }
  } catch (const UsageError& e) {
    fmt::print(std::cerr, "error:cli:Usage: {}\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    fmt::print(std::cerr, "{}\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    fmt::print(std::cerr, "error:internal:Exception: {}\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}
