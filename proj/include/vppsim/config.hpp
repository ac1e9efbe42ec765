#pragma once

#include <cstdint>
#include <string>

#include "vppsim/gss.hpp"
#include "vppsim/scenario.hpp"

namespace vppsim {

struct RunConfig {
  ScenarioConfig scenario;
  SweepConfig gss;
  std::uint64_t gss_seed = 17;
  std::string raw_json;  // canonical dump used for hashing and the manifest
};

/// Loads and validates the single-document run configuration.
/// Throws ConfigError with a path-qualified diagnostic on bad input.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text);

/// Hash of the canonical config document (stable across runs).
std::uint64_t config_hash(const RunConfig& config);
std::string config_hash_hex(const RunConfig& config);

/// Writes manifest.json: config hash, seeds, tool version, echoed config.
void write_manifest(const RunConfig& config, const std::string& dir);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace vppsim
