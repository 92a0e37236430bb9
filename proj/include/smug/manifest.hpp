#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace smug {

inline constexpr const char* kCodeVersion = "0.1.0";

/// Per-run provenance record written next to every artifact set. Not part of
/// the determinism contract (it carries wall-clock timestamps).
struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string code_version = kCodeVersion;
  std::uint64_t master_seed = 0;
  std::string status = "running";  // running | complete | failed
  std::string started_at;
  std::string finished_at;
  std::vector<std::string> outputs;
  nlohmann::json extra;
};

std::string iso_timestamp_now();

/// Writes <dir>/<name>.manifest.json.
void write_manifest(const std::string& dir, const std::string& name, const RunManifest& m);

RunManifest read_manifest(const std::string& path);

}  // namespace smug
