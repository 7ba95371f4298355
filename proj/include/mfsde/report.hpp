#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace mfsde {

/// Scalar observable Phi with its declared integrability class.
struct Observable {
  enum class Class { smooth_bounded, weighted_L2 };
  std::string name;
  std::function<double(std::span<const double>)> phi;
  Class declared = Class::weighted_L2;
};

/// Registry used by the CLI: {"name":"constant","value":c} |
/// {"name":"coordinate","index":j} | {"name":"indicator_positive","index":j} |
/// {"name":"norm_sq"} | {"name":"exp_norm_sq","scale":s}
Observable make_observable(const nlohmann::json& params);

/// Estimate vector with componentwise standard errors and reproducibility
/// metadata; serialized as
/// {estimate, std_error, n, seed, config_digest, method, runtime_ms}.
struct EstimatorReport {
  std::vector<double> estimate;
  std::vector<double> std_error;
  std::size_t n = 0;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string method;
  double runtime_ms = 0.0;
};

}  // namespace mfsde
