#include "smug/manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace smug {

std::string iso_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

void write_manifest(const std::string& dir, const std::string& name, const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["code_version"] = m.code_version;
  j["master_seed"] = m.master_seed;
  j["status"] = m.status;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["outputs"] = m.outputs;
  if (!m.extra.is_null()) j["extra"] = m.extra;
  std::ofstream os(dir + "/" + name + ".manifest.json", std::ios::trunc);
  if (!os) throw std::runtime_error("write_manifest: cannot write in " + dir);
  os << j.dump(2) << "\n";
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_manifest: cannot open " + path);
  nlohmann::json j;
  is >> j;
  RunManifest m;
  m.command = j.value("command", "");
  m.config_hash = j.value("config_hash", "");
  m.code_version = j.value("code_version", "");
  m.master_seed = j.value("master_seed", 0ull);
  m.status = j.value("status", "");
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.outputs = j.value("outputs", std::vector<std::string>{});
  if (j.contains("extra")) m.extra = j["extra"];
  return m;
}

}  // namespace smug
