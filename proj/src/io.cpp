#include "mfsde/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mfsde {

std::string config_digest(const nlohmann::json& config) {
  const std::string canon = config.dump();  // object keys are sorted
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return std::string(buf);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

namespace {

std::ofstream open_out(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot open for writing: " + file.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("cannot open for reading: " + file.string());
  return is;
}

}  // namespace

void write_measure_csv(const std::filesystem::path& file, const EmpiricalMeasure& mu,
                       const std::string& digest) {
  auto os = open_out(file);
  os << "# config_digest=" << digest << "\n";
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const auto a = mu.atom(i);
    for (int c = 0; c < mu.dim(); ++c) os << (c ? "," : "") << format_double(a[c]);
    os << "\n";
  }
}

EmpiricalMeasure read_measure_csv(const std::filesystem::path& file) {
  auto is = open_in(file);
  std::string line;
  std::vector<double> atoms;
  int dim = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream row(line);
    std::string cell;
    int cols = 0;
    while (std::getline(row, cell, ',')) {
      atoms.push_back(std::stod(cell));
      ++cols;
    }
    if (dim == 0)
      dim = cols;
    else if (cols != dim)
      throw std::runtime_error("ragged measure CSV: " + file.string());
  }
  return EmpiricalMeasure(std::move(atoms), dim);
}

void write_flow(const std::filesystem::path& dir, const MeasureFlow& flow,
                const std::string& digest) {
  std::filesystem::create_directories(dir);
  nlohmann::json index;
  index["grid"] = flow.grid();
  index["N"] = flow.atoms();
  index["d"] = flow.dim();
  std::vector<std::string> files;
  for (std::size_t k = 0; k < flow.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "t_%04zu.csv", k);
    files.emplace_back(name);
    write_measure_csv(dir / name, flow.at(k), digest);
  }
  index["files"] = files;
  auto os = open_out(dir / "index.json");
  os << index.dump(2) << "\n";
}

MeasureFlow read_flow(const std::filesystem::path& dir) {
  auto is = open_in(dir / "index.json");
  nlohmann::json index = nlohmann::json::parse(is);
  const auto grid = index.at("grid").get<std::vector<double>>();
  const auto files = index.at("files").get<std::vector<std::string>>();
  if (grid.size() != files.size()) throw std::runtime_error("flow index grid/file mismatch");
  std::vector<EmpiricalMeasure> measures;
  measures.reserve(files.size());
  for (const auto& f : files) measures.push_back(read_measure_csv(dir / f));
  return MeasureFlow(grid, std::move(measures));
}

void write_report_json(const std::filesystem::path& file, const EstimatorReport& report) {
  nlohmann::json j;
  j["estimate"] = report.estimate;
  j["std_error"] = report.std_error;
  j["n"] = report.n;
  j["seed"] = report.seed;
  j["config_digest"] = report.config_digest;
  j["method"] = report.method;
  j["runtime_ms"] = report.runtime_ms;
  auto os = open_out(file);
  os << j.dump(2) << "\n";
}

EstimatorReport read_report_json(const std::filesystem::path& file) {
  auto is = open_in(file);
  nlohmann::json j = nlohmann::json::parse(is);
  EstimatorReport r;
  r.estimate = j.at("estimate").get<std::vector<double>>();
  r.std_error = j.at("std_error").get<std::vector<double>>();
  r.n = j.at("n").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_digest = j.at("config_digest").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.runtime_ms = j.at("runtime_ms").get<double>();
  return r;
}

void save_bundle(const std::filesystem::path& prefix, const PathBundle& bundle,
                 const nlohmann::json& drift_params) {
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["seed"] = bundle.seed();
  manifest["N"] = bundle.paths;
  manifest["M"] = bundle.grid.steps;
  manifest["T"] = bundle.grid.horizon;
  manifest["d"] = bundle.dim;
  manifest["x0"] = bundle.x0;
  manifest["drift"] = drift_params;
  {
    auto os = open_out(prefix.string() + ".manifest.json");
    os << manifest.dump(2) << "\n";
  }
  std::ofstream os(prefix.string() + ".bin", std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + prefix.string() + ".bin");
  os.write(reinterpret_cast<const char*>(bundle.states.data()),
           static_cast<std::streamsize>(bundle.states.size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(bundle.noise->db.data()),
           static_cast<std::streamsize>(bundle.noise->db.size() * sizeof(double)));
}

PathBundle load_bundle(const std::filesystem::path& prefix) {
  auto is = open_in(prefix.string() + ".manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(is);
  if (manifest.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported bundle format version");
  PathBundle b;
  b.paths = manifest.at("N").get<std::size_t>();
  b.dim = manifest.at("d").get<int>();
  b.grid = TimeGrid(manifest.at("T").get<double>(), manifest.at("M").get<std::size_t>());
  b.x0 = manifest.at("x0").get<std::vector<double>>();
  auto noise = std::make_shared<NoiseArray>();
  noise->seed = manifest.at("seed").get<std::uint64_t>();
  noise->paths = b.paths;
  noise->steps = b.grid.steps;
  noise->dim = b.dim;
  b.states.resize(b.paths * b.grid.points() * static_cast<std::size_t>(b.dim));
  noise->db.resize(b.paths * b.grid.steps * static_cast<std::size_t>(b.dim));
  std::ifstream bin(prefix.string() + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open for reading: " + prefix.string() + ".bin");
  bin.read(reinterpret_cast<char*>(b.states.data()),
           static_cast<std::streamsize>(b.states.size() * sizeof(double)));
  bin.read(reinterpret_cast<char*>(noise->db.data()),
           static_cast<std::streamsize>(noise->db.size() * sizeof(double)));
  if (!bin) throw std::runtime_error("bundle binary truncated: " + prefix.string() + ".bin");
  b.noise = std::move(noise);
  return b;
}

void write_jacobian_csv(const std::filesystem::path& file, const JacobianFlow& flow,
                        const std::string& digest) {
  auto os = open_out(file);
  os << "# config_digest=" << digest << "\n";
  os << "t";
  for (int i = 0; i < flow.dim; ++i)
    for (int j = 0; j < flow.dim; ++j) os << ",J_" << i << "_" << j;
  os << "\n";
  for (std::size_t k = flow.anchor; k < flow.grid.points(); ++k) {
    os << format_double(flow.grid.time(k));
    const Mat& m = flow.at(k);
    for (int i = 0; i < flow.dim; ++i)
      for (int j = 0; j < flow.dim; ++j) os << "," << format_double(m(i, j));
    os << "\n";
  }
}

}  // namespace mfsde
