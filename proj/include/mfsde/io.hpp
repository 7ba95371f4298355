#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "mfsde/measure.hpp"
#include "mfsde/report.hpp"
#include "mfsde/sensitivity.hpp"
#include "mfsde/solver.hpp"

namespace mfsde {

/// Stable 64-bit FNV-1a digest of the canonical (key-sorted) JSON dump,
/// rendered as 16 hex digits. Identical configs give identical digests.
std::string config_digest(const nlohmann::json& config);

/// Doubles are printed with 17 significant digits everywhere so outputs
/// round-trip bit-exactly and reruns diff clean.
std::string format_double(double v);

void write_measure_csv(const std::filesystem::path& file, const EmpiricalMeasure& mu,
                       const std::string& digest);
EmpiricalMeasure read_measure_csv(const std::filesystem::path& file);

/// A flow persists as a directory: one CSV per grid time plus
/// index.json {grid, N, d, files}.
void write_flow(const std::filesystem::path& dir, const MeasureFlow& flow,
                const std::string& digest);
MeasureFlow read_flow(const std::filesystem::path& dir);

void write_report_json(const std::filesystem::path& file, const EstimatorReport& report);
EstimatorReport read_report_json(const std::filesystem::path& file);

/// Binary dump (raw little-endian doubles: states then increments) plus a JSON
/// manifest {seed, N, M, T, d, drift, format_version}.
void save_bundle(const std::filesystem::path& prefix, const PathBundle& bundle,
                 const nlohmann::json& drift_params);
PathBundle load_bundle(const std::filesystem::path& prefix);

/// One row per time step, d^2 columns (row-major Jacobian entries).
void write_jacobian_csv(const std::filesystem::path& file, const JacobianFlow& flow,
                        const std::string& digest);

}  // namespace mfsde
