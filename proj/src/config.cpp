#include "sepctl/config.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

namespace sepctl {

namespace {

using nlohmann::json;

[[noreturn]] void config_error(const std::string& field, const std::string& msg) {
  fail(ErrorKind::kConfig, "field '" + field + "': " + msg);
}

json parse_document(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end(), nullptr, true, true);
  } catch (const json::parse_error& e) {
    // Translate the byte offset into a line/column.
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t i = 0; i + 1 < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string what = e.what();
    const auto pos = what.find("syntax error");
    if (pos != std::string::npos) what = what.substr(pos);
    fail(ErrorKind::kConfig, "line " + std::to_string(line) + ", column " +
                                 std::to_string(col) + ": " + what);
  }
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) config_error(path + key, "missing");
  return obj.at(key);
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    const std::string& path) {
  for (const auto& [key, v] : obj.items()) {
    bool ok = false;
    for (std::string_view k : known) ok = ok || key == k;
    if (!ok) config_error(path + key, "unknown key");
  }
}

double as_double(const json& v, const std::string& field) {
  if (!v.is_number()) config_error(field, "expected a number");
  return v.get<double>();
}

long as_long(const json& v, const std::string& field) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    config_error(field, "expected an integer");
  }
  return v.get<long>();
}

bool is_numeric_array(const json& v) {
  if (!v.is_array()) return false;
  for (const auto& e : v) {
    if (!e.is_number()) return false;
  }
  return true;
}

// Reads a rows x cols matrix: a number (1x1), a flat row-major array, or
// nested rows. Returns nullopt if the shape does not fit.
std::optional<MatrixXd> try_matrix(const json& v, int rows, int cols) {
  if (v.is_number()) {
    if (rows != 1 || cols != 1) return std::nullopt;
    return MatrixXd::Constant(1, 1, v.get<double>());
  }
  if (is_numeric_array(v)) {
    if (static_cast<long>(v.size()) != static_cast<long>(rows) * cols) return std::nullopt;
    if (rows != 1 && cols != 1) return std::nullopt;
    MatrixXd M(rows, cols);
    for (int i = 0; i < rows * cols; ++i) M(i / cols, i % cols) = v[i].get<double>();
    return M;
  }
  if (!v.is_array() || static_cast<int>(v.size()) != rows) return std::nullopt;
  MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const json& row = v[i];
    if (row.is_number() && cols == 1) {
      M(i, 0) = row.get<double>();
      continue;
    }
    if (!is_numeric_array(row) || static_cast<int>(row.size()) != cols) return std::nullopt;
    for (int j = 0; j < cols; ++j) M(i, j) = row[j].get<double>();
  }
  return M;
}

MatrixXd read_matrix(const json& v, int rows, int cols, const std::string& field) {
  auto M = try_matrix(v, rows, cols);
  if (!M) {
    config_error(field, "expected a " + std::to_string(rows) + "x" +
                            std::to_string(cols) + " matrix");
  }
  return *M;
}

// A single matrix (repeated) or an array of `count` matrices.
std::vector<MatrixXd> read_sequence(const json& v, int count, int rows, int cols,
                                    const std::string& field) {
  if (auto M = try_matrix(v, rows, cols)) return std::vector<MatrixXd>(count, *M);
  if (!v.is_array() || static_cast<int>(v.size()) != count) {
    config_error(field, "expected one " + std::to_string(rows) + "x" +
                            std::to_string(cols) + " matrix or a list of " +
                            std::to_string(count));
  }
  std::vector<MatrixXd> out;
  for (int t = 0; t < count; ++t) {
    out.push_back(read_matrix(v[t], rows, cols, field + "[" + std::to_string(t) + "]"));
  }
  return out;
}

VectorXd read_vector(const json& v, int size, const std::string& field) {
  return read_matrix(v, size, 1, field).col(0);
}

TimeVaryingLinearSystem read_system(const json& obj, const Dims& d,
                                    const std::string& path) {
  if (!obj.is_object()) config_error(path.substr(0, path.size() - 1), "expected an object");
  reject_unknown(obj, {"A", "B", "D", "C", "E"}, path);
  TimeVaryingLinearSystem sys;
  sys.A = read_sequence(require(obj, "A", path), d.T, d.n, d.n, path + "A");
  sys.B = read_sequence(require(obj, "B", path), d.T, d.n, d.m, path + "B");
  sys.D = read_sequence(require(obj, "D", path), d.T, d.n, d.r, path + "D");
  sys.C = read_sequence(require(obj, "C", path), d.T + 1, d.p, d.n, path + "C");
  sys.E = read_sequence(require(obj, "E", path), d.T + 1, d.p, d.s, path + "E");
  return sys;
}

struct Block {
  int offset;
  int size;
};

Block block_of(const std::string& name, const Dims& d, const std::string& field) {
  const NoiseLayout layout(d);
  if (name == "x0") return {layout.x0_offset(), d.n};
  if (name.size() > 1 && (name[0] == 'w' || name[0] == 'z')) {
    int idx = -1;
    try {
      std::size_t used = 0;
      idx = std::stoi(name.substr(1), &used);
      if (used != name.size() - 1) idx = -1;
    } catch (...) {
      idx = -1;
    }
    if (name[0] == 'w' && idx >= 0 && idx < d.T) return {layout.w_offset(idx), d.r};
    if (name[0] == 'z' && idx >= 0 && idx <= d.T) return {layout.z_offset(idx), d.s};
  }
  config_error(field, "unknown primitive block '" + name +
                          "' (use x0, w0..w" + std::to_string(d.T - 1) + ", z0..z" +
                          std::to_string(d.T) + ")");
}

NoiseSpec read_noise(const json& obj, const Dims& d) {
  const NoiseLayout layout(d);
  const int N = layout.size();
  NoiseSpec noise;
  if (!obj.is_object()) config_error("noise", "expected an object");
  reject_unknown(obj, {"cov", "mean", "x0_cov", "w_cov", "z_cov", "x0_mean", "w_mean",
                       "z_mean", "cross"},
                 "noise.");
  if (obj.contains("cov")) {
    noise.cov = read_matrix(obj["cov"], N, N, "noise.cov");
    noise.mean = obj.contains("mean") ? read_vector(obj["mean"], N, "noise.mean")
                                      : VectorXd::Zero(N);
  } else {
    const MatrixXd x0_cov = read_matrix(require(obj, "x0_cov", "noise."), d.n, d.n,
                                        "noise.x0_cov");
    const auto w_cov = read_sequence(require(obj, "w_cov", "noise."), d.T, d.r, d.r,
                                     "noise.w_cov");
    const auto z_cov = read_sequence(require(obj, "z_cov", "noise."), d.T + 1, d.s,
                                     d.s, "noise.z_cov");
    noise.mean = VectorXd::Zero(N);
    noise.cov = MatrixXd::Zero(N, N);
    noise.cov.block(0, 0, d.n, d.n) = x0_cov;
    for (int t = 0; t < d.T; ++t) {
      noise.cov.block(layout.w_offset(t), layout.w_offset(t), d.r, d.r) = w_cov[t];
    }
    for (int t = 0; t <= d.T; ++t) {
      noise.cov.block(layout.z_offset(t), layout.z_offset(t), d.s, d.s) = z_cov[t];
    }
    if (obj.contains("x0_mean")) {
      noise.mean.head(d.n) = read_vector(obj["x0_mean"], d.n, "noise.x0_mean");
    }
    if (obj.contains("w_mean")) {
      const auto wm = read_sequence(obj["w_mean"], d.T, d.r, 1, "noise.w_mean");
      for (int t = 0; t < d.T; ++t) noise.mean.segment(layout.w_offset(t), d.r) = wm[t];
    }
    if (obj.contains("z_mean")) {
      const auto zm = read_sequence(obj["z_mean"], d.T + 1, d.s, 1, "noise.z_mean");
      for (int t = 0; t <= d.T; ++t) noise.mean.segment(layout.z_offset(t), d.s) = zm[t];
    }
    if (obj.contains("cross")) {
      const json& cross = obj["cross"];
      if (!cross.is_array()) config_error("noise.cross", "expected a list");
      for (std::size_t i = 0; i < cross.size(); ++i) {
        const std::string f = "noise.cross[" + std::to_string(i) + "]";
        const json& c = cross[i];
        if (!c.is_object()) config_error(f, "expected an object");
        reject_unknown(c, {"a", "b", "value"}, f + ".");
        const auto a = block_of(require(c, "a", f + ".").get<std::string>(), d, f + ".a");
        const auto b = block_of(require(c, "b", f + ".").get<std::string>(), d, f + ".b");
        if (a.offset == b.offset) config_error(f, "a and b must differ");
        const MatrixXd V = read_matrix(require(c, "value", f + "."), a.size, b.size,
                                       f + ".value");
        noise.cov.block(a.offset, b.offset, a.size, b.size) = V;
        noise.cov.block(b.offset, a.offset, b.size, a.size) = V.transpose();
      }
    }
  }
  try {
    validate_noise(noise, d);
  } catch (const Error& e) {
    config_error("noise", e.what());
  }
  return noise;
}

QuadraticCostSpec read_cost(const json& obj, const Dims& d) {
  if (!obj.is_object()) config_error("cost", "expected an object");
  reject_unknown(obj, {"Qx", "Ru", "QT", "beta"}, "cost.");
  QuadraticCostSpec cost;
  cost.Qx = read_sequence(require(obj, "Qx", "cost."), d.T, d.n, d.n, "cost.Qx");
  cost.Ru = read_sequence(require(obj, "Ru", "cost."), d.T, d.m, d.m, "cost.Ru");
  cost.QT = read_matrix(require(obj, "QT", "cost."), d.n, d.n, "cost.QT");
  if (obj.contains("beta")) cost.beta = as_double(obj["beta"], "cost.beta");
  try {
    validate_cost(cost, d);
  } catch (const Error& e) {
    config_error("cost", e.what());
  }
  return cost;
}

RunControls read_run(const json& obj) {
  RunControls run;
  if (obj.is_null()) return run;
  if (!obj.is_object()) config_error("run", "expected an object");
  for (const auto& [key, v] : obj.items()) {
    const std::string f = "run." + key;
    if (key == "episodes") {
      run.episodes = as_long(v, f);
      if (run.episodes < 1) config_error(f, "must be >= 1");
    } else if (key == "outer") {
      run.outer = static_cast<int>(as_long(v, f));
      if (run.outer < 1) config_error(f, "must be >= 1");
    } else if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long>() >= 0)) {
        config_error(f, "expected a nonnegative integer");
      }
      run.seed = v.get<std::uint64_t>();
    } else if (key == "threads") {
      run.threads = static_cast<int>(as_long(v, f));
    } else if (key == "tolerance") {
      run.tolerance = as_double(v, f);
    } else if (key == "probe_std") {
      run.probe_std = as_double(v, f);
    } else if (key == "plant_inflation") {
      run.plant_inflation = as_double(v, f);
    } else if (key == "bin_width") {
      run.bin_width = as_double(v, f);
    } else if (key == "rebind") {
      const std::string s = v.is_string() ? v.get<std::string>() : "";
      if (s == "batched") {
        run.rebind = RebindMode::kBatched;
      } else if (s == "per_step") {
        run.rebind = RebindMode::kPerStep;
      } else {
        config_error(f, "expected \"batched\" or \"per_step\"");
      }
    } else if (key == "conditioning") {
      const std::string s = v.is_string() ? v.get<std::string>() : "";
      if (s == "affine") {
        run.conditioning = ConditioningMode::kAffine;
      } else if (s == "binned") {
        run.conditioning = ConditioningMode::kBinned;
      } else {
        config_error(f, "expected \"affine\" or \"binned\"");
      }
    } else {
      config_error(f, "unknown key");
    }
  }
  return run;
}

OutputPaths read_outputs(const json& obj) {
  OutputPaths out;
  if (obj.is_null()) return out;
  if (!obj.is_object()) config_error("outputs", "expected an object");
  for (const auto& [key, v] : obj.items()) {
    const std::string f = "outputs." + key;
    if (!v.is_string()) config_error(f, "expected a path string");
    if (key == "strategy") {
      out.strategy = v.get<std::string>();
    } else if (key == "report") {
      out.report = v.get<std::string>();
    } else if (key == "trace") {
      out.trace = v.get<std::string>();
    } else if (key == "episodes") {
      out.episodes = v.get<std::string>();
    } else {
      config_error(f, "unknown key");
    }
  }
  return out;
}

void normalize(json& v) {
  if (v.is_number_integer() || v.is_number_unsigned()) {
    const double d = v.get<double>();
    // Only when the value is exactly representable.
    if (std::abs(d) < 9007199254740992.0) v = d;
  } else if (v.is_structured()) {
    for (auto& e : v) normalize(e);
  }
}

std::string fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string config_digest(std::string_view text) {
  json doc = parse_document(text);
  normalize(doc);
  return fnv1a64(doc.dump());
}

ScenarioConfig parse_config(std::string_view text) {
  const json doc = parse_document(text);
  if (!doc.is_object()) fail(ErrorKind::kConfig, "top level must be an object");
  ScenarioConfig cfg;
  {
    const json& d = require(doc, "dims", "");
    reject_unknown(d, {"n", "m", "p", "r", "s", "T"}, "dims.");
    Dims& dims = cfg.dims;
    dims.n = static_cast<int>(as_long(require(d, "n", "dims."), "dims.n"));
    dims.m = static_cast<int>(as_long(require(d, "m", "dims."), "dims.m"));
    dims.p = static_cast<int>(as_long(require(d, "p", "dims."), "dims.p"));
    dims.r = static_cast<int>(as_long(require(d, "r", "dims."), "dims.r"));
    dims.s = static_cast<int>(as_long(require(d, "s", "dims."), "dims.s"));
    dims.T = static_cast<int>(as_long(require(d, "T", "dims."), "dims.T"));
    try {
      dims.validate();
    } catch (const Error& e) {
      config_error("dims", e.what());
    }
  }
  cfg.model = read_system(require(doc, "model", ""), cfg.dims, "model.");
  if (doc.contains("plant")) cfg.plant = read_system(doc["plant"], cfg.dims, "plant.");
  cfg.noise = read_noise(require(doc, "noise", ""), cfg.dims);
  cfg.cost = read_cost(require(doc, "cost", ""), cfg.dims);
  cfg.run = read_run(doc.contains("run") ? doc["run"] : json());
  cfg.outputs = read_outputs(doc.contains("outputs") ? doc["outputs"] : json());
  for (const auto& [key, v] : doc.items()) {
    static const char* known[] = {"dims", "model", "plant", "noise",
                                  "cost", "run",   "outputs", "description"};
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) config_error(key, "unknown key");
  }
  json canonical = doc;
  normalize(canonical);
  cfg.digest = fnv1a64(canonical.dump());
  return cfg;
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kConfig, "cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::write(const std::string& path) const {
  json j;
  j["command"] = command;
  j["config_digest"] = config_digest;
  j["tool_version"] = tool_version;
  j["seed"] = seed;
  j["rng"] = std::string(RngStreamSpec::kAlgorithm);
  j["started_utc"] = started_utc;
  j["finished_utc"] = finished_utc;
  j["artifacts"] = artifacts;
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kConfig, "cannot write manifest '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace sepctl
