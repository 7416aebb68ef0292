#include "emarig/bundle.hpp"

#include <algorithm>
#include <memory>

#include <fmt/format.h>
#include <openssl/evp.h>

#include "emarig/error.hpp"
#include "emarig/kv_config.hpp"

namespace fs = std::filesystem;

namespace emarig {

namespace {

constexpr const char* kModule = "export";
constexpr const char* kManifestName = "manifest.txt";

void write_part(const fs::path& root, const std::string& rel, std::string_view text, Manifest& m) {
  write_text_file(root / rel, text);
  m.files.push_back(ManifestEntry{rel, sha256_hex(text)});
}

std::string relative_generic(const fs::path& p, const fs::path& root) {
  return fs::relative(p, root).generic_string();
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error(kModule, "HashError", "SHA-256 computation failed");
  }
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string sha256_hex(std::string_view text) {
  return sha256_hex(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

const ManifestEntry* Manifest::find(std::string_view path) const {
  for (const auto& e : files) {
    if (e.path == path) return &e;
  }
  return nullptr;
}

std::string format_manifest(const Manifest& m) {
  std::string out = fmt::format("@format_version\t{}\n", m.format_version);
  out += fmt::format("@rate_hz\t{}\n", m.rate_hz);
  std::string channels;
  for (const auto& c : m.channels) {
    if (!channels.empty()) channels += ',';
    channels += c;
  }
  out += fmt::format("@channels\t{}\n", channels);
  for (const auto& s : m.sources) out += fmt::format("@source\t{}\t{}\n", s.name, s.sha256);
  for (const auto& f : m.files) out += fmt::format("{}\t{}\n", f.path, f.sha256);
  return out;
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  m.format_version = 0;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    const auto fields = split(line, '\t');
    auto bad = [&](const std::string& what) {
      throw Error(kModule, "BadManifest", fmt::format("manifest line {}: {}", line_no, what));
    };
    if (line[0] == '@') {
      if (fields.size() < 2) bad("metadata needs a value");
      const auto& key = fields[0];
      if (key == "@format_version") {
        m.format_version = static_cast<int>(parse_double(fields[1], kModule, "format_version"));
      } else if (key == "@rate_hz") {
        m.rate_hz = parse_double(fields[1], kModule, "rate_hz");
      } else if (key == "@channels") {
        m.channels = split(fields[1], ',');
      } else if (key == "@source") {
        if (fields.size() != 3) bad("@source needs a name and a hash");
        m.sources.push_back(SourceRecord{fields[1], fields[2]});
      }
      continue;
    }
    if (fields.size() != 2 || fields[1].size() != 64) bad("expected `path<TAB>sha256`");
    m.files.push_back(ManifestEntry{fields[0], fields[1]});
  }
  if (m.format_version <= 0) throw Error(kModule, "BadManifest", "manifest has no format version");
  return m;
}

std::optional<fs::path> Bundle::segmentation_path() const {
  if (!manifest.find("segmentation.txt")) return std::nullopt;
  return root / "segmentation.txt";
}

namespace {

void fill_bundle(const fs::path& dir, const BundleParts& parts, Manifest& m) {
  std::error_code ec;
  m.rate_hz = parts.layout.rate_hz;
  m.channels = parts.layout.channels;
  m.sources = parts.sources;

  write_part(dir, "model.dae", parts.model, m);
  if (parts.segmentation) write_part(dir, "segmentation.txt", *parts.segmentation, m);
  write_part(dir, "layout.cfg", format_layout(parts.layout), m);

  auto audio = parts.audio;
  std::sort(audio.begin(), audio.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  if (!audio.empty()) {
    fs::create_directories(dir / "audio", ec);
    if (ec) throw Error("io", "IoError", fmt::format("cannot create '{}': {}", (dir / "audio").string(), ec.message()));
  }
  for (const auto& a : audio) {
    const auto bytes = read_file_bytes(a);
    const std::string rel = "audio/" + a.filename().string();
    if (m.find(rel)) throw Error("io", "IoError", fmt::format("duplicate audio file name '{}'", rel));
    write_file_bytes(dir / rel, bytes);
    m.files.push_back(ManifestEntry{rel, sha256_hex(bytes)});
  }
  write_text_file(dir / kManifestName, format_manifest(m));
}

}  // namespace

Bundle write_bundle(const fs::path& dir, const BundleParts& parts) {
  if (parts.model.empty()) throw Error(kModule, "MissingModel", "bundle needs a model document");
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!fs::is_directory(dir)) {
      throw Error("io", "IoError", fmt::format("'{}' exists and is not a directory", dir.string()));
    }
    if (!fs::is_empty(dir) && !fs::exists(dir / kManifestName)) {
      throw Error("io", "IoError", fmt::format("'{}' is a non-empty directory that is not a bundle", dir.string()));
    }
  }
  // Staged next to the target so a failed write never leaves a half bundle.
  fs::path staging = dir;
  staging += ".partial";
  fs::remove_all(staging, ec);
  fs::create_directories(staging, ec);
  if (ec) throw Error("io", "IoError", fmt::format("cannot create '{}': {}", staging.string(), ec.message()));

  Bundle b;
  b.root = dir;
  try {
    fill_bundle(staging, parts, b.manifest);
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  fs::remove_all(dir, ec);
  if (ec) throw Error("io", "IoError", fmt::format("cannot replace '{}': {}", dir.string(), ec.message()));
  fs::rename(staging, dir, ec);
  if (ec) throw Error("io", "IoError", fmt::format("cannot move bundle into '{}': {}", dir.string(), ec.message()));
  return b;
}

Bundle open_bundle(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw Error("export", "BadBundle", fmt::format("'{}' is not a bundle directory", dir.string()));
  }
  if (!fs::exists(dir / kManifestName)) {
    throw Error("export", "BadBundle", fmt::format("'{}' has no {}", dir.string(), kManifestName));
  }
  Bundle b;
  b.root = dir;
  b.manifest = parse_manifest(read_text_file(dir / kManifestName));
  if (!b.manifest.find("model.dae")) throw Error("export", "BadBundle", "manifest does not list model.dae");
  return b;
}

BundleCheck verify_bundle(const fs::path& dir) {
  BundleCheck check;
  auto fail = [&check](std::string what) {
    check.ok = false;
    check.problems.push_back(std::move(what));
  };
  Bundle b;
  try {
    b = open_bundle(dir);
  } catch (const Error& e) {
    fail(e.what());
    return check;
  }
  for (const auto& e : b.manifest.files) {
    const auto p = dir / e.path;
    if (!fs::is_regular_file(p)) {
      fail(fmt::format("{}: missing", e.path));
      continue;
    }
    const auto actual = sha256_hex(read_file_bytes(p));
    if (actual != e.sha256) fail(fmt::format("{}: hash mismatch", e.path));
  }
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = relative_generic(entry.path(), dir);
    if (rel != kManifestName && !b.manifest.find(rel)) fail(fmt::format("{}: not listed in the manifest", rel));
  }
  return check;
}

}  // namespace emarig
