#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emarig/ema_io.hpp"

namespace emarig {

inline constexpr int kBundleFormatVersion = 1;

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

struct ManifestEntry {
  std::string path;  // relative, '/' separated
  std::string sha256;
};

struct SourceRecord {
  std::string name;  // file name only, never a full path
  std::string sha256;
};

// Text lines: `@key<TAB>value` metadata, then `path<TAB>sha256` per file.
struct Manifest {
  int format_version = kBundleFormatVersion;
  double rate_hz = 0.0;
  std::vector<std::string> channels;
  std::vector<SourceRecord> sources;
  std::vector<ManifestEntry> files;

  const ManifestEntry* find(std::string_view path) const;
};

std::string format_manifest(const Manifest& m);
Manifest parse_manifest(std::string_view text);

struct BundleParts {
  std::string model;                        // COLLADA document
  std::optional<std::string> segmentation;  // segmentation text
  PosLayout layout;
  std::vector<std::filesystem::path> audio;  // copied verbatim into audio/
  std::vector<SourceRecord> sources;
};

struct Bundle {
  std::filesystem::path root;
  Manifest manifest;

  std::filesystem::path model_path() const { return root / "model.dae"; }
  std::optional<std::filesystem::path> segmentation_path() const;
};

// Writes model.dae, segmentation.txt, layout.cfg, audio/* and manifest.txt.
// An existing bundle directory is replaced; any other non-empty directory is
// refused.
Bundle write_bundle(const std::filesystem::path& dir, const BundleParts& parts);

Bundle open_bundle(const std::filesystem::path& dir);

struct BundleCheck {
  bool ok = true;
  std::vector<std::string> problems;
};

// Hash check of every listed file; unlisted or missing files also fail.
BundleCheck verify_bundle(const std::filesystem::path& dir);

}  // namespace emarig
