#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mfsde/bel.hpp"
#include "mfsde/solver.hpp"

namespace mfsde {

inline constexpr const char* kToolVersion = "0.1.0";

/// Invalid or inconsistent configuration; the CLI maps this to exit code 2.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parsed and validated experiment configuration (single JSON file, versioned
/// schema). `canonical` is the normalized JSON whose digest stamps every
/// output.
struct ExperimentConfig {
  std::string command;
  nlohmann::json drift;
  int d = 1;
  std::vector<double> x0;
  double T = 1.0;
  std::size_t M = 1;
  std::size_t N = 2;
  std::uint64_t seed = 0;
  std::optional<std::string> out;

  std::string solver = "picard";  // simulate: picard | particles

  // gradient settings
  std::string method = "bel";  // bel | fd | both | girsanov-check
  nlohmann::json weight;       // {"kind":"uniform"} etc.
  double fd_h = 0.0;
  PicardOptions picard;
  int mollify_n = 64;
  nlohmann::json phi;

  // holder-scan settings
  double scan_time_s = 0.0;
  std::vector<double> scan_time_gaps;
  double scan_space_t = 0.0;
  std::vector<std::vector<double>> scan_space_offsets;

  nlohmann::json canonical;
  std::string digest;
};

ExperimentConfig parse_config(const nlohmann::json& raw);
ExperimentConfig load_config(const std::filesystem::path& file);

/// Reproducibility record written next to the outputs; every listed file is
/// verified to exist and be non-empty before the manifest lands.
struct RunManifest {
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::map<std::string, double> stage_wall_ms;
  std::vector<std::string> outputs;  // relative to the run directory
  std::vector<double> picard_trace;

  void write(const std::filesystem::path& dir) const;
};

RunManifest run_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir);
RunManifest run_gradient(const ExperimentConfig& config, const std::filesystem::path& out_dir);
RunManifest run_holder_scan(const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct ValidateResult {
  RunManifest manifest;
  std::size_t violations = 0;
};
ValidateResult run_validate_drift(const ExperimentConfig& config,
                                  const std::filesystem::path& out_dir);

struct PhiCheckResult {
  RunManifest manifest;
  bool pass = false;
};
PhiCheckResult run_phi_check(const ExperimentConfig& config, const std::filesystem::path& out_dir);

WeightFunction make_weight(const nlohmann::json& spec, const TimeGrid& grid);

}  // namespace mfsde
