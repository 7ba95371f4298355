#include "mfsde/run.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "mfsde/io.hpp"
#include "mfsde/oracle.hpp"
#include "mfsde/parallel.hpp"

namespace mfsde {

namespace {

using clock_type = std::chrono::steady_clock;

double ms_since(clock_type::time_point t0) {
  return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
}

double require_positive(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw config_error("config: missing numeric field '" + key + "'");
  const double v = j.at(key).get<double>();
  if (!(v > 0.0)) throw config_error("config: field '" + key + "' must be positive");
  return v;
}

std::size_t require_count(const nlohmann::json& j, const std::string& key, std::size_t min_value) {
  if (!j.contains(key) || !j.at(key).is_number_integer())
    throw config_error("config: missing integer field '" + key + "'");
  const long long v = j.at(key).get<long long>();
  if (v < static_cast<long long>(min_value))
    throw config_error("config: field '" + key + "' must be >= " + std::to_string(min_value));
  return static_cast<std::size_t>(v);
}

std::ofstream open_output(const std::filesystem::path& file) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot open for writing: " + file.string());
  return os;
}

}  // namespace

WeightFunction make_weight(const nlohmann::json& spec, const TimeGrid& grid) {
  const std::string kind = spec.value("kind", "uniform");
  if (kind == "uniform") return WeightFunction::uniform(grid);
  if (kind == "indicator_front")
    return WeightFunction::indicator_front(grid, spec.value("tau", grid.horizon / 2.0));
  if (kind == "piecewise") {
    if (!spec.contains("values")) throw config_error("config: piecewise weight needs 'values'");
    return WeightFunction::piecewise(grid, spec.at("values").get<std::vector<double>>());
  }
  throw config_error("config: unknown weight kind '" + kind + "'");
}

ExperimentConfig parse_config(const nlohmann::json& raw) {
  if (!raw.is_object()) throw config_error("config: top level must be a JSON object");
  if (raw.value("schema_version", 1) != 1) throw config_error("config: unsupported schema_version");
  ExperimentConfig cfg;
  if (!raw.contains("command") || !raw.at("command").is_string())
    throw config_error("config: missing field 'command'");
  cfg.command = raw.at("command").get<std::string>();

  cfg.d = static_cast<int>(require_count(raw, "d", 1));
  if (cfg.d > kMaxDim) throw config_error("config: field 'd' exceeds the supported maximum");
  cfg.T = require_positive(raw, "T");
  cfg.M = require_count(raw, "M", 1);
  cfg.seed = raw.value("seed", std::uint64_t{0});
  if (raw.contains("out")) cfg.out = raw.at("out").get<std::string>();

  if (raw.contains("x0")) {
    if (raw.at("x0").is_number()) {
      cfg.x0.assign(static_cast<std::size_t>(cfg.d), raw.at("x0").get<double>());
    } else {
      cfg.x0 = raw.at("x0").get<std::vector<double>>();
      if (static_cast<int>(cfg.x0.size()) != cfg.d)
        throw config_error("config: field 'x0' must have d entries");
    }
  } else {
    cfg.x0.assign(static_cast<std::size_t>(cfg.d), 0.0);
  }

  const bool needs_paths = cfg.command != "phi-check" && cfg.command != "validate-drift";
  if (needs_paths) cfg.N = require_count(raw, "N", 2);

  if (cfg.command != "phi-check") {
    if (!raw.contains("drift")) throw config_error("config: missing field 'drift'");
    cfg.drift = raw.at("drift");
  }

  cfg.solver = raw.value("solver", std::string("picard"));
  if (cfg.solver != "picard" && cfg.solver != "particles")
    throw config_error("config: field 'solver' must be 'picard' or 'particles'");

  const nlohmann::json est = raw.value("estimator", nlohmann::json::object());
  cfg.method = est.value("method", std::string("bel"));
  cfg.weight = est.value("a", nlohmann::json{{"kind", "uniform"}});
  cfg.fd_h = est.value("h", 0.0);
  cfg.picard.tol = est.value("tol", 1e-3);
  cfg.picard.max_iter = est.value("max_iter", std::size_t{25});
  cfg.mollify_n = est.value("mollify_n", 64);
  if (!(cfg.picard.tol > 0.0)) throw config_error("config: estimator field 'tol' must be positive");

  if (cfg.command == "gradient" || cfg.command == "phi-check") {
    if (!raw.contains("phi")) throw config_error("config: missing field 'phi'");
    cfg.phi = raw.at("phi");
  }
  if (cfg.command == "gradient" && cfg.method != "bel" && cfg.method != "fd" &&
      cfg.method != "both" && cfg.method != "girsanov-check")
    throw config_error("config: estimator method must be bel | fd | both | girsanov-check");

  if (cfg.command == "holder-scan") {
    if (!raw.contains("scan")) throw config_error("config: missing field 'scan'");
    const auto& scan = raw.at("scan");
    cfg.scan_time_s = scan.value("time_s", 0.0);
    if (scan.contains("time_gaps")) cfg.scan_time_gaps = scan.at("time_gaps").get<std::vector<double>>();
    cfg.scan_space_t = scan.value("space_t", cfg.T);
    if (scan.contains("space_offsets"))
      cfg.scan_space_offsets = scan.at("space_offsets").get<std::vector<std::vector<double>>>();
    if (cfg.scan_time_gaps.size() < 3 || cfg.scan_space_offsets.size() < 3)
      throw config_error(
          "config: scan needs >= 3 'time_gaps' and >= 3 'space_offsets' (log-log regression needs"
          " >= 3 points)");
    for (const auto& off : cfg.scan_space_offsets)
      if (static_cast<int>(off.size()) != cfg.d)
        throw config_error("config: each space offset must have d entries");
  }

  // Canonical form: the raw object with x0 normalized to an array.
  cfg.canonical = raw;
  cfg.canonical["x0"] = cfg.x0;
  cfg.digest = config_digest(cfg.canonical);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw config_error("config: cannot open '" + file.string() + "'");
  nlohmann::json raw;
  try {
    raw = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error(std::string("config: JSON parse error: ") + e.what());
  }
  try {
    return parse_config(raw);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: ") + e.what());
  }
}

void RunManifest::write(const std::filesystem::path& dir) const {
  for (const auto& rel : outputs) {
    const auto p = dir / rel;
    std::error_code ec;
    const auto size = std::filesystem::file_size(p, ec);
    if (ec || size == 0)
      throw std::runtime_error("manifest: output missing or empty: " + p.string());
  }
  nlohmann::json j;
  j["config_digest"] = config_digest;
  j["seed"] = seed;
  j["tool_version"] = tool_version;
  j["stage_wall_ms"] = stage_wall_ms;
  j["outputs"] = outputs;
  j["picard_trace"] = picard_trace;
  auto os = open_output(dir / "manifest.json");
  os << j.dump(2) << "\n";
}

RunManifest run_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  if (config.command != "simulate") throw config_error("run_simulate: command mismatch");
  const DriftSpec drift = [&] {
    try {
      return make_drift(config.drift, config.d);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }();
  const TimeGrid grid(config.T, config.M);

  RunManifest manifest;
  manifest.config_digest = config.digest;
  manifest.seed = config.seed;
  manifest.tool_version = kToolVersion;

  auto t0 = clock_type::now();
  MeasureFlow flow = [&] {
    if (config.solver == "particles")
      return simulate_particles(drift, config.x0, grid, config.N, config.seed).second;
    PicardResult res = picard_law_iteration(drift, config.x0, grid, config.N, config.seed,
                                            config.picard);
    manifest.picard_trace = res.trace;
    return std::move(res.flow);
  }();
  manifest.stage_wall_ms["solve"] = ms_since(t0);

  t0 = clock_type::now();
  write_flow(out_dir / "flow", flow, config.digest);
  manifest.outputs.push_back("flow/index.json");

  {  // ensemble moment table
    auto os = open_output(out_dir / "moments.csv");
    os << "# config_digest=" << config.digest << "\n";
    os << "t";
    for (int c = 0; c < config.d; ++c) os << ",mean_" << c;
    for (int c = 0; c < config.d; ++c) os << ",var_" << c;
    os << ",first_moment\n";
    std::vector<double> sq(flow.atoms());
    for (std::size_t k = 0; k < flow.size(); ++k) {
      const auto& mu = flow.at(k);
      os << format_double(flow.grid()[k]);
      for (int c = 0; c < config.d; ++c) os << "," << format_double(mu.mean()[c]);
      for (int c = 0; c < config.d; ++c) {
        const double m = mu.mean()[c];
        for (std::size_t i = 0; i < mu.size(); ++i) {
          const double dv = mu.atom(i)[c] - m;
          sq[i] = dv * dv;
        }
        os << "," << format_double(pairwise_sum(sq) / static_cast<double>(mu.size() - 1));
      }
      os << "," << format_double(mu.first_moment()) << "\n";
    }
    manifest.outputs.push_back("moments.csv");
  }

  {  // Picard distance trace (empty in particles mode)
    auto os = open_output(out_dir / "picard_trace.csv");
    os << "# config_digest=" << config.digest << "\n";
    os << "iteration,flow_distance\n";
    for (std::size_t i = 0; i < manifest.picard_trace.size(); ++i)
      os << (i + 1) << "," << format_double(manifest.picard_trace[i]) << "\n";
    manifest.outputs.push_back("picard_trace.csv");
  }
  manifest.stage_wall_ms["write"] = ms_since(t0);

  manifest.write(out_dir);
  return manifest;
}

RunManifest run_gradient(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  if (config.command != "gradient") throw config_error("run_gradient: command mismatch");
  const DriftSpec drift = [&] {
    try {
      return make_drift(config.drift, config.d);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }();
  const TimeGrid grid(config.T, config.M);
  const Observable phi = [&] {
    try {
      return make_observable(config.phi);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }();

  RunManifest manifest;
  manifest.config_digest = config.digest;
  manifest.seed = config.seed;
  manifest.tool_version = kToolVersion;

  const bool want_bel = config.method == "bel" || config.method == "both";
  const bool want_fd = config.method == "fd" || config.method == "both";
  const bool want_girsanov = config.method == "girsanov-check";

  EstimatorReport bel_report, fd_report;
  if (want_bel) {
    const auto t0 = clock_type::now();
    BelOptions opts;
    opts.picard = config.picard;
    opts.fd_step = config.fd_h;
    opts.mollify_n = config.mollify_n;
    const WeightFunction a = make_weight(config.weight, grid);
    GradientResult res =
        estimate_gradient_multi(drift, config.x0, grid, config.N, {&a, 1}, phi, config.seed, opts);
    manifest.picard_trace = res.diagnostics.picard_trace;
    bel_report = std::move(res.reports.front());
    bel_report.config_digest = config.digest;
    manifest.stage_wall_ms["bel"] = ms_since(t0);
    write_report_json(out_dir / "report_bel.json", bel_report);
    manifest.outputs.push_back("report_bel.json");
  }
  if (want_fd) {
    const auto t0 = clock_type::now();
    const double h = config.fd_h > 0.0 ? config.fd_h : 1e-2 * std::max(1.0, norm(config.x0));
    fd_report = fd_gradient(drift, config.x0, grid, config.N, h, phi, config.seed, config.picard);
    fd_report.config_digest = config.digest;
    manifest.stage_wall_ms["fd"] = ms_since(t0);
    write_report_json(out_dir / "report_fd.json", fd_report);
    manifest.outputs.push_back("report_fd.json");
  }
  if (want_girsanov) {
    const auto t0 = clock_type::now();
    GirsanovResult res =
        girsanov_estimate(drift, config.x0, grid, config.N, phi, config.seed, config.picard);
    res.report.config_digest = config.digest;
    manifest.stage_wall_ms["girsanov"] = ms_since(t0);
    write_report_json(out_dir / "report_girsanov.json", res.report);
    manifest.outputs.push_back("report_girsanov.json");
  }
  if (want_bel && want_fd) {
    auto os = open_output(out_dir / "comparison.csv");
    os << "# config_digest=" << config.digest << "\n";
    os << "component,bel,bel_se,fd,fd_se,abs_diff,band_3se,within\n";
    for (int j = 0; j < config.d; ++j) {
      const double diff = std::abs(bel_report.estimate[j] - fd_report.estimate[j]);
      const double band = 3.0 * (bel_report.std_error[j] + fd_report.std_error[j]);
      os << j << "," << format_double(bel_report.estimate[j]) << ","
         << format_double(bel_report.std_error[j]) << "," << format_double(fd_report.estimate[j])
         << "," << format_double(fd_report.std_error[j]) << "," << format_double(diff) << ","
         << format_double(band) << "," << (diff <= band ? 1 : 0) << "\n";
    }
    manifest.outputs.push_back("comparison.csv");
  }

  manifest.write(out_dir);
  return manifest;
}

RunManifest run_holder_scan(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  if (config.command != "holder-scan") throw config_error("run_holder_scan: command mismatch");
  const DriftSpec drift = [&] {
    try {
      return make_drift(config.drift, config.d);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }();
  const TimeGrid grid(config.T, config.M);
  const double dt = grid.dt();

  auto grid_index = [&](double t, const std::string& what) {
    const double k = std::round(t / dt);
    if (k < 0 || k > static_cast<double>(grid.steps))
      throw config_error("config: scan time '" + what + "' outside [0, T]");
    return static_cast<std::size_t>(k);
  };

  RunManifest manifest;
  manifest.config_digest = config.digest;
  manifest.seed = config.seed;
  manifest.tool_version = kToolVersion;

  const auto t0 = clock_type::now();
  // One Picard solve per initial point; the seed (hence the noise) is shared,
  // which is what makes the spatial differences usable at this sample size.
  const PicardResult base = picard_law_iteration(drift, config.x0, grid, config.N, config.seed,
                                                 config.picard);
  manifest.picard_trace = base.trace;

  auto mean_sq_diff_time = [&](std::size_t k1, std::size_t k2) {
    std::vector<double> vals(config.N);
    parallel_for(config.N, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t p = lo; p < hi; ++p) {
        const auto a = base.bundle.state(p, k1);
        const auto b = base.bundle.state(p, k2);
        double s = 0.0;
        for (int c = 0; c < config.d; ++c) {
          const double v = a[c] - b[c];
          s += v * v;
        }
        vals[p] = s;
      }
    });
    return pairwise_sum(vals) / static_cast<double>(config.N);
  };

  std::vector<double> time_x, time_y, space_x, space_y;
  const std::size_t s_idx = grid_index(config.scan_time_s, "time_s");
  for (double gap : config.scan_time_gaps) {
    if (!(gap > 0.0)) throw config_error("config: scan time gaps must be positive");
    const std::size_t t_idx = grid_index(config.scan_time_s + gap, "time_s+gap");
    if (t_idx == s_idx) throw config_error("config: scan time gap collapses on the grid");
    time_x.push_back(grid.time(t_idx) - grid.time(s_idx));
    time_y.push_back(mean_sq_diff_time(s_idx, t_idx));
  }

  const std::size_t st_idx = grid_index(config.scan_space_t, "space_t");
  for (const auto& offset : config.scan_space_offsets) {
    std::vector<double> shifted(config.x0);
    for (int c = 0; c < config.d; ++c) shifted[c] += offset[c];
    const double dist2 = dot(offset, offset);
    if (!(dist2 > 0.0)) throw config_error("config: scan space offsets must be nonzero");
    const PicardResult other =
        picard_law_iteration(drift, shifted, grid, config.N, config.seed, config.picard);
    std::vector<double> vals(config.N);
    parallel_for(config.N, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t p = lo; p < hi; ++p) {
        const auto a = base.bundle.state(p, st_idx);
        const auto b = other.bundle.state(p, st_idx);
        double s = 0.0;
        for (int c = 0; c < config.d; ++c) {
          const double v = a[c] - b[c];
          s += v * v;
        }
        vals[p] = s;
      }
    });
    space_x.push_back(dist2);
    space_y.push_back(pairwise_sum(vals) / static_cast<double>(config.N));
  }
  manifest.stage_wall_ms["simulate"] = ms_since(t0);

  std::vector<double> lx(time_x.size()), ly(time_x.size());
  for (std::size_t i = 0; i < time_x.size(); ++i) {
    lx[i] = std::log(time_x[i]);
    ly[i] = std::log(time_y[i]);
  }
  const LinFit time_fit = linear_fit(lx, ly);
  lx.resize(space_x.size());
  ly.resize(space_x.size());
  for (std::size_t i = 0; i < space_x.size(); ++i) {
    lx[i] = std::log(space_x[i]);
    ly[i] = std::log(space_y[i]);
  }
  const LinFit space_fit = linear_fit(lx, ly);

  {
    auto os = open_output(out_dir / "scan.csv");
    os << "# config_digest=" << config.digest << "\n";
    os << "kind,abscissa,mean_sq_distance\n";
    for (std::size_t i = 0; i < time_x.size(); ++i)
      os << "time," << format_double(time_x[i]) << "," << format_double(time_y[i]) << "\n";
    for (std::size_t i = 0; i < space_x.size(); ++i)
      os << "space," << format_double(space_x[i]) << "," << format_double(space_y[i]) << "\n";
    manifest.outputs.push_back("scan.csv");
  }
  {
    nlohmann::json j;
    j["time_exponent"] = time_fit.slope;
    j["space_exponent"] = space_fit.slope;
    j["time_points"] = time_x.size();
    j["space_points"] = space_x.size();
    j["config_digest"] = config.digest;
    auto os = open_output(out_dir / "exponents.json");
    os << j.dump(2) << "\n";
    manifest.outputs.push_back("exponents.json");
  }

  manifest.write(out_dir);
  return manifest;
}

ValidateResult run_validate_drift(const ExperimentConfig& config,
                                  const std::filesystem::path& out_dir) {
  if (config.command != "validate-drift") throw config_error("run_validate_drift: command mismatch");
  const DriftSpec drift = [&] {
    try {
      return make_drift(config.drift, config.d);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }();

  ValidateResult result;
  result.manifest.config_digest = config.digest;
  result.manifest.seed = config.seed;
  result.manifest.tool_version = kToolVersion;

  const auto t0 = clock_type::now();
  const auto violations = validate_drift_metadata(drift, config.T);
  result.violations = violations.size();
  result.manifest.stage_wall_ms["probe"] = ms_since(t0);

  nlohmann::json j;
  j["drift"] = drift.name();
  j["violations"] = nlohmann::json::array();
  for (const auto& v : violations)
    j["violations"].push_back({{"what", v.what}, {"observed", v.lhs}, {"declared", v.rhs}});
  j["pass"] = violations.empty();
  j["config_digest"] = config.digest;
  auto os = open_output(out_dir / "validation.json");
  os << j.dump(2) << "\n";
  result.manifest.outputs.push_back("validation.json");
  result.manifest.write(out_dir);
  return result;
}

PhiCheckResult run_phi_check(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  if (config.command != "phi-check") throw config_error("run_phi_check: command mismatch");
  const Observable phi = [&] {
    try {
      return make_observable(config.phi);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }();

  PhiCheckResult result;
  result.manifest.config_digest = config.digest;
  result.manifest.seed = config.seed;
  result.manifest.tool_version = kToolVersion;

  const auto t0 = clock_type::now();
  const PhiIntegrability check = [&] {
    try {
      return check_phi_integrability(phi, config.d, config.T);
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
  }();
  result.pass = check.pass;
  result.manifest.stage_wall_ms["quadrature"] = ms_since(t0);

  nlohmann::json j;
  j["phi"] = phi.name;
  j["pass"] = check.pass;
  j["value"] = check.value;
  j["shell_fraction"] = check.shell_fraction;
  j["message"] = check.message;
  j["config_digest"] = config.digest;
  auto os = open_output(out_dir / "phi_check.json");
  os << j.dump(2) << "\n";
  result.manifest.outputs.push_back("phi_check.json");
  result.manifest.write(out_dir);
  return result;
}

}  // namespace mfsde
