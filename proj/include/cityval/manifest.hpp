#pragma once

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cityval/core.hpp"

namespace cityval {

inline std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot hash missing file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a64_hex(buf.str());
}

// Audit record for one command invocation. Outputs with identical manifest
// inputs are expected to be identical; the manifest itself carries wall-clock
// timestamps and is not part of that guarantee.
struct RunManifest {
  std::string command;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;   // path -> content digest
  std::map<std::string, std::string> outputs;  // path -> content digest
  std::string started_at;
  std::string finished_at;

  void add_input(const std::string& path) { inputs[path] = file_digest(path); }
  void add_output(const std::string& path) { outputs[path] = file_digest(path); }

  void write(const std::string& path) const {
    nlohmann::json j{{"command", command},     {"config_digest", config_digest},
                     {"seed", seed},           {"inputs", inputs},
                     {"outputs", outputs},     {"started_at", started_at},
                     {"finished_at", finished_at}};
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
  }
};

}  // namespace cityval
