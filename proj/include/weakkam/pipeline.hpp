#pragma once

// Experiment runner: JSON config -> model -> kernel -> stages, each writing
// CSV/JSON artifacts, plus a manifest with SHA-256 checksums and wall times.
// Needs OpenSSL libcrypto at link time.

#include <openssl/evp.h>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <locale>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "weakkam/aubry_mather.hpp"
#include "weakkam/chain_dynamics.hpp"
#include "weakkam/critical.hpp"
#include "weakkam/kernel.hpp"
#include "weakkam/model.hpp"
#include "weakkam/quotient_geometry.hpp"
#include "weakkam/regularizer.hpp"

namespace weakkam::pipeline {

using json = nlohmann::json;

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"critical", "weakkam", "barrier",      "aubry",  "quotient", "dimension",
                                              "chains",   "mane-compare", "regularize", "ferry", "all"};
  return names;
}

inline constexpr const char* kFamilies = "kinetic, mechanical, mane";
inline constexpr const char* kPotentials = "cos";
inline constexpr const char* kFields = "zero, constant, sin, neg_grad, table";

// ---------------------------------------------------------------------------
// Number formatting: 12 significant digits, no negative zero.

inline std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(12) << v;
  return os.str();
}

/// JSON number rounded to the same 12 digits; non-finite values become null.
inline json jnum(double v) {
  if (!std::isfinite(v)) return nullptr;
  std::istringstream is(num(v));
  is.imbue(std::locale::classic());
  double r = 0.0;
  is >> r;
  return r;
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string() + " for checksum");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

// ---------------------------------------------------------------------------
// Config.

struct ExperimentConfig {
  json raw;

  std::optional<std::string> family;
  json model_params = json::object();

  int dim = 1;
  int n = 64;

  std::optional<double> tau;
  std::optional<double> stencil_radius;

  double tol = 1e-9;
  int max_iter = 0;
  std::string initial = "zero";
  double initial_amplitude = 1.0;

  double eta = kDefaultAubryEta;
  std::optional<double> merge_threshold;

  double dt = 1.0;
  std::optional<double> eps;
  int substeps = 64;

  int smoothing_stages = 4;

  std::vector<double> scales;
  int levels = 9;
  std::string covering_points = "representatives";
  double window = 0.1;

  bool has_ferry = false;
  std::string ferry_points;
  double ferry_p = 2.0;
  std::string ferry_family = "segment";
  std::vector<int> ferry_sizes{8, 16, 32, 64};

  std::string out_dir = "out";
  bool write_csv = true;
  bool write_json = true;
  int barrier_max_points = 1024;

  std::uint64_t seed = 0;
};

namespace detail {

inline void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) {
      std::string list;
      for (const char* a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
      throw ConfigError(where + ": unknown key '" + it.key() + "' (allowed: " + list + ")");
    }
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

template <typename T>
std::optional<T> get_opt(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return std::nullopt;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& j) {
  using detail::get_opt;
  using detail::get_or;
  using detail::require;
  detail::check_keys(j, "config",
                     {"model", "grid", "kernel", "solver", "aubry", "dynamics", "regularizer", "dimension", "ferry",
                      "outputs", "seed"});
  ExperimentConfig c;
  c.raw = j;
  const json empty = json::object();
  auto section = [&](const char* key) -> const json& { return j.contains(key) ? j.at(key) : empty; };

  if (j.contains("model")) {
    const json& m = j.at("model");
    detail::check_keys(m, "model", {"family", "params"});
    c.family = get_or<std::string>(m, "family", "", "model");
    require(*c.family == "kinetic" || *c.family == "mechanical" || *c.family == "mane",
            "model.family: unknown family '" + *c.family + "' (builtins: " + kFamilies + ")");
    c.model_params = m.contains("params") ? m.at("params") : json::object();
    require(c.model_params.is_object(), "model.params: expected an object");
  }

  const json& g = section("grid");
  detail::check_keys(g, "grid", {"dim", "n"});
  c.dim = get_or(g, "dim", c.dim, "grid");
  c.n = get_or(g, "n", c.n, "grid");
  require(c.dim == 1 || c.dim == 2, "grid.dim: must be 1 or 2");
  require(c.n >= 4 && c.n <= 4096, "grid.n: must be in [4, 4096]");

  const json& k = section("kernel");
  detail::check_keys(k, "kernel", {"tau", "stencil_radius"});
  c.tau = get_opt<double>(k, "tau", "kernel");
  c.stencil_radius = get_opt<double>(k, "stencil_radius", "kernel");
  require(!c.tau || *c.tau > 0.0, "kernel.tau: must be > 0");
  require(!c.stencil_radius || *c.stencil_radius > 0.0, "kernel.stencil_radius: must be > 0");

  const json& s = section("solver");
  detail::check_keys(s, "solver", {"tol", "max_iter", "initial", "initial_amplitude"});
  c.tol = get_or(s, "tol", c.tol, "solver");
  c.max_iter = get_or(s, "max_iter", c.max_iter, "solver");
  c.initial = get_or<std::string>(s, "initial", c.initial, "solver");
  c.initial_amplitude = get_or(s, "initial_amplitude", c.initial_amplitude, "solver");
  require(c.tol > 0.0 && c.tol < 1.0, "solver.tol: must be in (0, 1)");
  require(c.max_iter >= 0, "solver.max_iter: must be >= 0");
  require(c.initial == "zero" || c.initial == "random", "solver.initial: 'zero' or 'random'");
  require(c.initial_amplitude >= 0.0, "solver.initial_amplitude: must be >= 0");

  const json& a = section("aubry");
  detail::check_keys(a, "aubry", {"eta", "merge_threshold"});
  c.eta = get_or(a, "eta", c.eta, "aubry");
  c.merge_threshold = get_opt<double>(a, "merge_threshold", "aubry");
  require(c.eta >= 0.0, "aubry.eta: must be >= 0");
  require(!c.merge_threshold || *c.merge_threshold >= 0.0, "aubry.merge_threshold: must be >= 0");

  const json& d = section("dynamics");
  detail::check_keys(d, "dynamics", {"dt", "eps", "substeps"});
  c.dt = get_or(d, "dt", c.dt, "dynamics");
  c.eps = get_opt<double>(d, "eps", "dynamics");
  c.substeps = get_or(d, "substeps", c.substeps, "dynamics");
  require(c.dt > 0.0, "dynamics.dt: must be > 0");
  require(!c.eps || *c.eps > 0.0, "dynamics.eps: must be > 0");
  require(c.substeps >= 1, "dynamics.substeps: must be >= 1");

  const json& r = section("regularizer");
  detail::check_keys(r, "regularizer", {"stages"});
  c.smoothing_stages = get_or(r, "stages", c.smoothing_stages, "regularizer");
  require(c.smoothing_stages >= 1 && c.smoothing_stages <= 64, "regularizer.stages: must be in [1, 64]");

  const json& dm = section("dimension");
  detail::check_keys(dm, "dimension", {"scales", "levels", "points", "window"});
  c.scales = get_or(dm, "scales", c.scales, "dimension");
  c.levels = get_or(dm, "levels", c.levels, "dimension");
  c.covering_points = get_or<std::string>(dm, "points", c.covering_points, "dimension");
  c.window = get_or(dm, "window", c.window, "dimension");
  require(c.levels >= 1 && c.levels <= 60, "dimension.levels: must be in [1, 60]");
  require(c.covering_points == "representatives" || c.covering_points == "aubry",
          "dimension.points: 'representatives' or 'aubry'");
  require(c.window > 0.0, "dimension.window: must be > 0");
  for (std::size_t i = 0; i < c.scales.size(); ++i)
    require(c.scales[i] > 0.0 && (i == 0 || c.scales[i] < c.scales[i - 1]),
            "dimension.scales: must be positive and strictly descending");

  if (j.contains("ferry")) {
    const json& f = j.at("ferry");
    detail::check_keys(f, "ferry", {"points", "p", "family", "sizes"});
    c.has_ferry = true;
    c.ferry_points = get_or<std::string>(f, "points", "", "ferry");
    c.ferry_p = get_or(f, "p", c.ferry_p, "ferry");
    c.ferry_family = get_or<std::string>(f, "family", c.ferry_family, "ferry");
    c.ferry_sizes = get_or(f, "sizes", c.ferry_sizes, "ferry");
    require(c.ferry_p >= 1.0, "ferry.p: must be >= 1");
    require(c.ferry_family == "segment" || c.ferry_family == "circle" || c.ferry_family == "none",
            "ferry.family: 'segment', 'circle' or 'none'");
    for (int sz : c.ferry_sizes) require(sz >= 2 && sz <= 2048, "ferry.sizes: entries must be in [2, 2048]");
    if (c.ferry_family == "circle")
      for (int sz : c.ferry_sizes) require(sz % 2 == 0, "ferry.sizes: circle sizes must be even");
  }

  const json& o = section("outputs");
  detail::check_keys(o, "outputs", {"directory", "formats", "barrier_max_points"});
  c.out_dir = get_or<std::string>(o, "directory", c.out_dir, "outputs");
  c.barrier_max_points = get_or(o, "barrier_max_points", c.barrier_max_points, "outputs");
  require(c.barrier_max_points >= 0, "outputs.barrier_max_points: must be >= 0");
  if (o.contains("formats")) {
    const auto formats = get_or<std::vector<std::string>>(o, "formats", {}, "outputs");
    c.write_csv = c.write_json = false;
    for (const auto& f : formats) {
      require(f == "csv" || f == "json", "outputs.formats: entries must be 'csv' or 'json'");
      (f == "csv" ? c.write_csv : c.write_json) = true;
    }
  }

  if (j.contains("seed")) {
    require(j.at("seed").is_number_integer() && j.at("seed").get<long long>() >= 0, "seed: non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Model construction from config.

inline Potential make_potential(const json& p) {
  detail::check_keys(p, "potential", {"type", "amplitude", "k", "axis"});
  const auto type = detail::get_or<std::string>(p, "type", "cos", "potential");
  if (type != "cos") throw ConfigError("potential.type: unknown '" + type + "' (builtins: " + kPotentials + ")");
  return cos_potential(detail::get_or(p, "amplitude", 1.0, "potential"), detail::get_or(p, "k", 1, "potential"),
                       detail::get_or(p, "axis", 0, "potential"));
}

inline VectorField make_field(const json& f, int dim) {
  detail::check_keys(f, "field", {"type", "value", "k", "potential", "path"});
  const auto type = detail::get_or<std::string>(f, "type", "", "field");
  if (type == "zero") return zero_field();
  if (type == "constant") {
    auto v = detail::get_or<std::vector<double>>(f, "value", {1.0}, "field");
    if (v.empty() || v.size() > 2) throw ConfigError("field.value: one or two components");
    return constant_field(Vec2{v[0], v.size() > 1 && dim == 2 ? v[1] : 0.0});
  }
  if (type == "sin") return sin_gradient_field(dim, detail::get_or(f, "k", 1, "field"));
  if (type == "neg_grad") {
    if (!f.contains("potential")) throw ConfigError("field.potential: required for neg_grad");
    return neg_grad_field(make_potential(f.at("potential")));
  }
  if (type == "table") {
    const auto path = detail::get_or<std::string>(f, "path", "", "field");
    if (path.empty()) throw ConfigError("field.path: required for table");
    return load_table_field(path, dim);
  }
  throw ConfigError("field.type: unknown '" + type + "' (builtins: " + kFields + ")");
}

inline Lagrangian make_lagrangian(const ExperimentConfig& c) {
  if (!c.family) throw ConfigError("model: section required for this stage (families: " + std::string(kFamilies) + ")");
  const json& p = c.model_params;
  if (*c.family == "kinetic") {
    detail::check_keys(p, "model.params", {});
    return kinetic_lagrangian();
  }
  if (*c.family == "mechanical") {
    detail::check_keys(p, "model.params", {"potential"});
    return mechanical_lagrangian(make_potential(p.contains("potential") ? p.at("potential") : json::object()));
  }
  detail::check_keys(p, "model.params", {"field"});
  if (!p.contains("field")) throw ConfigError("model.params.field: required for the mane family");
  return mane_lagrangian(make_field(p.at("field"), c.dim));
}

inline std::optional<VectorField> make_config_field(const ExperimentConfig& c) {
  if (!c.family || *c.family != "mane") return std::nullopt;
  return make_field(c.model_params.at("field"), c.dim);
}

/// u0 for the weak KAM iteration: zero, or uniform [0, amplitude) from seed.
inline ValueFunction initial_function(const GridTorus& g, const std::string& kind, double amplitude,
                                      std::uint64_t seed) {
  if (kind == "zero") return ValueFunction::constant(g, 0.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> v(g.point_count());
  for (auto& x : v) x = amplitude * unit(rng);
  return ValueFunction(g, std::move(v));
}

// ---------------------------------------------------------------------------
// Ferry points file: one point per row, comma-separated coordinates; an
// optional non-numeric header line is skipped.

inline std::vector<Point> load_points_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open points file " + path);
  std::vector<Point> pts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    Point p;
    std::stringstream ss(line);
    ss.imbue(std::locale::classic());
    std::string cell;
    bool ok = true;
    while (std::getline(ss, cell, ',')) {
      std::istringstream cs(cell);
      cs.imbue(std::locale::classic());
      double v = 0.0;
      if (!(cs >> v) || !(cs >> std::ws).eof() || !std::isfinite(v)) {
        ok = false;
        break;
      }
      p.push_back(v);
    }
    if (!ok || p.empty()) {
      if (line_no == 1 && pts.empty()) continue;
      throw IoError(path + ":" + std::to_string(line_no) + ": malformed point row");
    }
    if (!pts.empty() && p.size() != pts.front().size())
      throw IoError(path + ":" + std::to_string(line_no) + ": dimension differs from first row");
    pts.push_back(std::move(p));
  }
  if (pts.size() < 2) throw IoError(path + ": need at least two points");
  return pts;
}

// ---------------------------------------------------------------------------
// Run state.

class Runner {
 public:
  explicit Runner(ExperimentConfig cfg) : cfg_(std::move(cfg)), out_(cfg_.out_dir) {}

  const ExperimentConfig& config() const { return cfg_; }

  /// Runs stages in order; returns the manifest (also written to disk).
  /// Exceptions propagate after the partial manifest has been written.
  json run(const std::vector<std::string>& requested) {
    std::error_code ec;
    std::filesystem::create_directories(out_, ec);
    if (ec) throw IoError("cannot create output directory " + out_.string() + ": " + ec.message());
    manifest_ = json::object();
    manifest_["config"] = cfg_.raw;
    manifest_["stages"] = json::array();
    manifest_["error"] = nullptr;
    manifest_["status"] = "running";
    std::string current;
    try {
      for (const auto& stage : expand(requested)) {
        current = stage;
        run_stage(stage);
      }
    } catch (const std::exception& e) {
      manifest_["status"] = "failed";
      manifest_["error"] = {{"stage", current}, {"kind", error_kind(e)}, {"message", e.what()}};
      write_manifest();
      throw;
    }
    manifest_["status"] = "ok";
    write_manifest();
    return manifest_;
  }

  static std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const DomainError*>(&e)) return "config";
    if (dynamic_cast<const IoError*>(&e)) return "io";
    return "numerical";
  }

  std::vector<std::string> expand(const std::vector<std::string>& requested) const {
    std::vector<std::string> out;
    for (const auto& s : requested) {
      bool known = false;
      for (const auto& n : stage_names()) known = known || n == s;
      if (!known) throw ConfigError("unknown stage '" + s + "'");
      if (s != "all") {
        out.push_back(s);
        continue;
      }
      for (const char* t : {"critical", "weakkam", "barrier", "aubry", "quotient", "dimension", "regularize"})
        if (cfg_.family) out.push_back(t);
      if (cfg_.family && *cfg_.family == "mane") {
        out.push_back("chains");
        out.push_back("mane-compare");
      }
      if (cfg_.has_ferry) out.push_back("ferry");
    }
    return out;
  }

 private:
  // -- lazily computed shared state ------------------------------------------

  const GridTorus& grid() {
    if (!grid_) grid_ = GridTorus(cfg_.dim, cfg_.n);
    return *grid_;
  }

  const Lagrangian& lagrangian() {
    if (!lagrangian_) lagrangian_ = make_lagrangian(cfg_);
    return *lagrangian_;
  }

  const ActionKernel& kernel() {
    if (!kernel_) {
      const double tau = cfg_.tau.value_or(default_tau(grid()));
      const double radius = cfg_.stencil_radius.value_or(default_stencil_radius(grid(), tau));
      kernel_ = build_kernel(lagrangian(), grid(), tau, radius);
    }
    return *kernel_;
  }

  const CriticalValue& critical() {
    if (!critical_) critical_ = critical_value(kernel());
    return *critical_;
  }

  const PeierlsBarrier& barrier() {
    if (!barrier_) barrier_ = std::make_unique<PeierlsBarrier>(kernel(), critical().c);
    return *barrier_;
  }

  const AubrySet& aubry() {
    if (!aubry_) aubry_ = aubry_set(barrier(), cfg_.eta, kernel());
    return *aubry_;
  }

  double merge_threshold() { return cfg_.merge_threshold.value_or(default_merge_threshold(grid(), kernel().tau)); }

  const SemiMetric& aubry_barrier() {
    if (!aubry_h_) aubry_h_ = barrier().restricted(aubry().indices);
    return *aubry_h_;
  }

  const SemiMetric& aubry_delta() {
    if (!aubry_delta_) aubry_delta_ = mather_delta(aubry_barrier());
    return *aubry_delta_;
  }

  const QuotientPartition& partition() {
    if (!partition_) partition_ = quotient(aubry_delta(), aubry(), merge_threshold());
    return *partition_;
  }

  const WeakKamSolution& solution() {
    if (!solution_) {
      WeakKamOptions opt;
      opt.tol = cfg_.tol;
      opt.max_iter = cfg_.max_iter;
      solution_ = weak_kam_solution(kernel(), critical().c,
                                    initial_function(grid(), cfg_.initial, cfg_.initial_amplitude, cfg_.seed), opt);
    }
    return *solution_;
  }

  const std::vector<int>& chain_set() {
    if (!chain_) {
      auto field = make_config_field(cfg_);
      if (!field) throw ConfigError("chains: needs model.family = mane (a vector field)");
      ChainOptions opt;
      opt.dt = cfg_.dt;
      opt.eps = cfg_.eps.value_or(0.0);
      opt.substeps = cfg_.substeps;
      auto g = chain_graph(*field, grid(), opt);
      chain_edges_ = g.edges.edge_count();
      chain_eps_ = g.eps;
      chain_ = chain_recurrent_set(g);
    }
    return *chain_;
  }

  // -- artifact helpers -------------------------------------------------------

  std::ofstream open(const std::string& name) {
    std::ofstream f(out_ / name, std::ios::binary);
    if (!f) throw IoError("cannot write " + (out_ / name).string());
    f.imbue(std::locale::classic());
    return f;
  }

  void finish(std::ofstream& f, const std::string& name) {
    f.flush();
    if (!f) throw IoError("write failed: " + (out_ / name).string());
    f.close();
    stage_files_[name] = {{"sha256", sha256_file(out_ / name)},
                          {"bytes", static_cast<std::uint64_t>(std::filesystem::file_size(out_ / name))}};
  }

  void write_csv(const std::string& name, const std::string& header,
                 const std::function<void(std::ostream&)>& rows) {
    if (!cfg_.write_csv) return;
    auto f = open(name);
    f << header << '\n';
    rows(f);
    finish(f, name);
  }

  void write_json(const std::string& name, const json& j) {
    if (!cfg_.write_json) return;
    auto f = open(name);
    f << j.dump(2) << '\n';
    finish(f, name);
  }

  void write_manifest() {
    std::ofstream f(out_ / "manifest.json", std::ios::binary);
    if (!f) throw IoError("cannot write " + (out_ / "manifest.json").string());
    f << manifest_.dump(2) << '\n';
  }

  std::string coords_csv(int idx) {
    const Vec2 x = grid().coords(idx);
    return grid().dim() == 2 ? num(x[0]) + "," + num(x[1]) : num(x[0]);
  }

  std::string coords_header() { return grid().dim() == 2 ? "x1,x2" : "x1"; }

  json model_summary() {
    return {{"label", lagrangian().label},
            {"dim", grid().dim()},
            {"n_per_axis", grid().n_per_axis()},
            {"spacing", jnum(grid().spacing())},
            {"tau", jnum(kernel().tau)},
            {"stencil_radius", jnum(kernel().stencil_radius)}};
  }

  // -- stages -----------------------------------------------------------------

  void run_stage(const std::string& stage) {
    stage_files_ = json::object();
    const auto t0 = std::chrono::steady_clock::now();
    if (stage == "critical") stage_critical();
    else if (stage == "weakkam") stage_weakkam();
    else if (stage == "barrier") stage_barrier();
    else if (stage == "aubry") stage_aubry();
    else if (stage == "quotient") stage_quotient();
    else if (stage == "dimension") stage_dimension();
    else if (stage == "chains") stage_chains();
    else if (stage == "mane-compare") stage_compare();
    else if (stage == "regularize") stage_regularize();
    else if (stage == "ferry") stage_ferry();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest_["stages"].push_back({{"stage", stage}, {"files", stage_files_}, {"wall_time_s", secs}});
  }

  void stage_critical() {
    const auto& cv = critical();
    write_csv("critical_witness.csv", "step,index," + coords_header(), [&](std::ostream& o) {
      for (std::size_t s = 0; s < cv.witness_cycle.size(); ++s)
        o << s << ',' << cv.witness_cycle[s] << ',' << coords_csv(cv.witness_cycle[s]) << '\n';
    });
    write_json("critical.json", {{"model", model_summary()},
                                 {"c", jnum(cv.c)},
                                 {"mean_cycle_weight", jnum(cv.mean_cycle_weight)},
                                 {"witness_length", cv.witness_cycle.size()},
                                 {"witness_cycle", cv.witness_cycle},
                                 {"point_count", kernel().point_count()},
                                 {"edge_count", kernel().graph.edge_count()}});
  }

  void stage_weakkam() {
    const auto& sol = solution();
    const double c = critical().c;
    const auto dom = check_dominated(sol.u, kernel(), c);
    write_csv("weakkam.csv", "index," + coords_header() + ",u", [&](std::ostream& o) {
      for (int i = 0; i < grid().point_count(); ++i) o << i << ',' << coords_csv(i) << ',' << num(sol.u.values[i]) << '\n';
    });
    write_json("weakkam.json", {{"model", model_summary()},
                                {"c", jnum(c)},
                                {"initial", cfg_.initial},
                                {"seed", cfg_.seed},
                                {"residual", jnum(sol.residual)},
                                {"iterations", sol.iterations},
                                {"domination_violation", jnum(dom.max_violation)},
                                {"subsolution_residual", jnum(subsolution_residual(sol.u, lagrangian(), c))}});
  }

  void stage_barrier() {
    const auto& h = barrier();
    const int points = grid().point_count();
    const bool dense = points <= cfg_.barrier_max_points;
    // Rows checked for domination / fixed point: all when dense, otherwise
    // the Aubry set plus an even stride of 64 grid points.
    std::vector<int> rows;
    if (dense) {
      for (int i = 0; i < points; ++i) rows.push_back(i);
    } else {
      rows = aubry().indices;
      for (int i = 0; i < points; i += std::max(1, points / 64)) rows.push_back(i);
      std::sort(rows.begin(), rows.end());
      rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    }
    const double c = critical().c;
    std::vector<double> dom(rows.size()), fix(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto row = h.row(rows[r]);
      dom[r] = check_dominated(row, kernel(), c).max_violation;
      fix[r] = sup_distance(shifted_minus(kernel(), row, c), row);
    }
    const auto diag = h.diagonal();
    const double min_diag = *std::min_element(diag.begin(), diag.end());
    SemiMetric checked = dense ? h.dense() : aubry_barrier();
    const double tri = checked.triangle_violation();
    write_csv("barrier.csv", "i,j,h", [&](std::ostream& o) {
      for (std::size_t a = 0; a < checked.size(); ++a) {
        if (dense) {
          for (std::size_t b = 0; b < checked.size(); ++b)
            o << checked.point_ids[a] << ',' << checked.point_ids[b] << ',' << num(checked.at(a, b)) << '\n';
        } else {
          const auto row = h.row(checked.point_ids[a]);
          for (int b = 0; b < points; ++b) o << checked.point_ids[a] << ',' << b << ',' << num(row[b]) << '\n';
        }
      }
    });
    write_csv("barrier_diagonal.csv", "index," + coords_header() + ",h_xx", [&](std::ostream& o) {
      for (int i = 0; i < points; ++i) o << i << ',' << coords_csv(i) << ',' << num(diag[i]) << '\n';
    });
    write_json("barrier.json", {{"model", model_summary()},
                                {"c", jnum(c)},
                                {"dense_dump", dense},
                                {"critical_classes", h.class_representatives().size()},
                                {"min_diagonal", jnum(min_diag)},
                                {"min_diagonal_over_spacing", jnum(min_diag / grid().spacing())},
                                {"triangle_violation", jnum(tri)},
                                {"triangle_scope", dense ? "full grid" : "aubry set"},
                                {"rows_checked", rows.size()},
                                {"row_domination_violation", jnum(*std::max_element(dom.begin(), dom.end()))},
                                {"row_fixed_point_residual", jnum(*std::max_element(fix.begin(), fix.end()))}});
  }

  void stage_aubry() {
    const auto& a = aubry();
    std::size_t stationary = 0, periodic = 0;
    for (auto l : a.labels) {
      stationary += l == AubryLabel::stationary;
      periodic += l == AubryLabel::periodic;
    }
    write_csv("aubry.csv", "index," + coords_header() + ",self_barrier,label,successor", [&](std::ostream& o) {
      for (std::size_t k = 0; k < a.indices.size(); ++k)
        o << a.indices[k] << ',' << coords_csv(a.indices[k]) << ',' << num(a.self_barrier[k]) << ','
          << to_string(a.labels[k]) << ',' << a.successors[k] << '\n';
    });
    write_json("aubry.json", {{"model", model_summary()},
                              {"eta", jnum(a.threshold)},
                              {"count", a.indices.size()},
                              {"stationary", stationary},
                              {"periodic", periodic},
                              {"other", a.indices.size() - stationary - periodic}});
  }

  void stage_quotient() {
    const auto& q = partition();
    const auto& d = aubry_delta();
    const auto& a = aubry();
    std::vector<int> cls(a.indices.size());
    for (std::size_t k = 0; k < a.indices.size(); ++k) cls[k] = q.class_of(a.indices[k]);
    double diam = 0.0, gap = kUnreachable;
    for (std::size_t i = 0; i < a.indices.size(); ++i) {
      for (std::size_t j = i + 1; j < a.indices.size(); ++j) {
        if (cls[i] == cls[j]) diam = std::max(diam, d.at(i, j));
        else gap = std::min(gap, d.at(i, j));
      }
    }
    const auto rep = representation_check(aubry_barrier(), a);
    write_csv("quotient.csv", "class_id,index,representative", [&](std::ostream& o) {
      for (std::size_t c = 0; c < q.classes.size(); ++c)
        for (int m : q.classes[c]) o << c << ',' << m << ',' << q.representative[c] << '\n';
    });
    write_json("quotient.json", {{"model", model_summary()},
                                 {"class_count", q.class_count()},
                                 {"max_class_diameter_delta", jnum(diam)},
                                 {"min_inter_class_delta", jnum(gap)},
                                 {"eta", jnum(a.threshold)},
                                 {"merge_threshold", jnum(q.merge_threshold)},
                                 {"representation_max_residual", jnum(rep.max_residual)}});
  }

  void stage_dimension() {
    const auto& q = partition();
    const auto& d = aubry_delta();
    const std::vector<int>& pts = cfg_.covering_points == "aubry" ? aubry().indices : q.representative;
    const auto scales = cfg_.scales.empty() ? default_scale_grid(d, aubry().indices, cfg_.levels) : cfg_.scales;
    const auto rep = hausdorff1_report(d, pts, scales);
    const auto quad = quadratic_bound_check(barrier(), aubry(), grid(), cfg_.window);
    write_csv("covering.csv", "r,N,h1", [&](std::ostream& o) {
      for (std::size_t k = 0; k < rep.scales.size(); ++k)
        o << num(rep.scales[k]) << ',' << rep.covering_counts[k] << ',' << num(rep.h1_estimates[k]) << '\n';
    });
    write_json("dimension.json", {{"model", model_summary()},
                                  {"points", cfg_.covering_points},
                                  {"point_count", pts.size()},
                                  {"dim_slope", jnum(rep.dim_slope)},
                                  {"slope_points", rep.slope_points},
                                  {"h1_finest", jnum(rep.h1_estimates.back())},
                                  {"quadratic_window", jnum(cfg_.window)},
                                  {"quadratic_max_ratio", jnum(quad.max_ratio)},
                                  {"quadratic_pairs", quad.pair_count},
                                  {"quadratic_argmax", {quad.x, quad.y}}});
  }

  void stage_chains() {
    const auto& set = chain_set();
    write_csv("chain.csv", "index," + coords_header(), [&](std::ostream& o) {
      for (int i : set) o << i << ',' << coords_csv(i) << '\n';
    });
    write_json("chain.json", {{"count", set.size()},
                              {"dt", jnum(cfg_.dt)},
                              {"eps", jnum(chain_eps_)},
                              {"substeps", cfg_.substeps},
                              {"edges", chain_edges_}});
  }

  void stage_compare() {
    if (!cfg_.family || *cfg_.family != "mane") throw ConfigError("mane-compare: needs model.family = mane");
    const auto cmp = compare_aubry_chain(aubry(), chain_set(), grid());
    write_csv("compare.csv", "set,index," + coords_header(), [&](std::ostream& o) {
      for (int i : aubry().indices) o << "aubry," << i << ',' << coords_csv(i) << '\n';
      for (int i : chain_set()) o << "chain," << i << ',' << coords_csv(i) << '\n';
    });
    write_json("compare.json", {{"model", model_summary()},
                                {"hausdorff_distance", jnum(cmp.hausdorff_distance)},
                                {"hausdorff_cells", jnum(cmp.hausdorff_distance / grid().spacing())},
                                {"aubry_count", aubry().indices.size()},
                                {"chain_count", chain_set().size()},
                                {"a_only_count", cmp.a_only.size()},
                                {"b_only_count", cmp.b_only.size()},
                                {"a_only", cmp.a_only},
                                {"b_only", cmp.b_only}});
  }

  void stage_regularize() {
    const auto& u = solution().u;
    const double c = critical().c;
    const auto schedule = default_schedule(cfg_.smoothing_stages, kernel().tau);
    SmoothingOptions opt;
    opt.tol = std::max(cfg_.tol, 1e-9);
    const auto v = alternating_smooth(u, kernel(), c, schedule, opt);
    double drift = 0.0;
    for (int x : aubry().indices) drift = std::max(drift, std::abs(v.values[x] - u.values[x]));
    const auto res = subsolution_residuals(v, lagrangian(), c);
    json counts = json::array();
    for (int n = 0; n < schedule.stages; ++n)
      counts.push_back({schedule.count(schedule.t_plus[n]), schedule.count(schedule.t_minus[n])});
    write_csv("regularize.csv", "index,u_in,u_out,H_residual", [&](std::ostream& o) {
      for (int i = 0; i < grid().point_count(); ++i)
        o << i << ',' << num(u.values[i]) << ',' << num(v.values[i]) << ',' << num(res[i]) << '\n';
    });
    write_json("regularize.json", {{"model", model_summary()},
                                   {"stage_step_counts", counts},
                                   {"semiconvexity_before", jnum(semiconvexity_constant(u))},
                                   {"semiconvexity_after", jnum(semiconvexity_constant(v))},
                                   {"semiconcavity_before", jnum(semiconcavity_constant(u))},
                                   {"semiconcavity_after", jnum(semiconcavity_constant(v))},
                                   {"max_aubry_drift", jnum(drift)},
                                   {"sup_change", jnum(sup_distance(u.values, v.values))},
                                   {"drift_bound", jnum(schedule_drift_bound(schedule, kernel(), c))},
                                   {"domination_violation", jnum(check_dominated(v, kernel(), c).max_violation)},
                                   {"subsolution_residual", jnum(*std::max_element(res.begin(), res.end()))}});
  }

  void stage_ferry() {
    if (!cfg_.has_ferry) throw ConfigError("ferry: config has no ferry section");
    json summary = {{"p", jnum(cfg_.ferry_p)}};
    if (!cfg_.ferry_points.empty()) {
      const auto pts = load_points_csv(cfg_.ferry_points);
      const auto d = ferry_delta_p(pts, cfg_.ferry_p);
      write_csv("ferry_delta.csv", "i,j,delta", [&](std::ostream& o) {
        for (std::size_t i = 0; i < d.size(); ++i)
          for (std::size_t j = 0; j < d.size(); ++j) o << i << ',' << j << ',' << num(d.at(i, j)) << '\n';
      });
      summary["point_count"] = pts.size();
      summary["endpoint_delta"] = jnum(d.at(0, d.size() - 1));
    }
    if (cfg_.ferry_family != "none") {
      std::vector<double> values;
      for (int sz : cfg_.ferry_sizes) {
        const bool seg = cfg_.ferry_family == "segment";
        const auto pts = seg ? segment_points(sz) : circle_points(sz);
        const auto d = ferry_delta_p(pts, cfg_.ferry_p);
        values.push_back(d.at(0, seg ? static_cast<std::size_t>(sz) : static_cast<std::size_t>(sz / 2)));
      }
      double worst = 0.0;
      write_csv("ferry_series.csv", "N,endpoint_delta,ratio", [&](std::ostream& o) {
        for (std::size_t k = 0; k < values.size(); ++k) {
          o << cfg_.ferry_sizes[k] << ',' << num(values[k]) << ',';
          if (k == 0) o << "nan\n";
          else {
            o << num(values[k] / values[k - 1]) << '\n';
            worst = std::max(worst, values[k] / values[k - 1]);
          }
        }
      });
      summary["family"] = cfg_.ferry_family;
      summary["sizes"] = cfg_.ferry_sizes;
      json vals = json::array();
      for (double v : values) vals.push_back(jnum(v));
      summary["endpoint_delta_series"] = vals;
      summary["max_ratio"] = values.size() > 1 ? jnum(worst) : json(nullptr);
    }
    write_json("ferry.json", summary);
  }

  ExperimentConfig cfg_;
  std::filesystem::path out_;
  json manifest_;
  json stage_files_;

  std::optional<GridTorus> grid_;
  std::optional<Lagrangian> lagrangian_;
  std::optional<ActionKernel> kernel_;
  std::optional<CriticalValue> critical_;
  std::unique_ptr<PeierlsBarrier> barrier_;
  std::optional<AubrySet> aubry_;
  std::optional<SemiMetric> aubry_h_;
  std::optional<SemiMetric> aubry_delta_;
  std::optional<QuotientPartition> partition_;
  std::optional<WeakKamSolution> solution_;
  std::optional<std::vector<int>> chain_;
  std::size_t chain_edges_ = 0;
  double chain_eps_ = 0.0;
};

/// Exit code for an exception thrown by the runner.
inline int exit_code_for(const std::exception& e) {
  const auto kind = Runner::error_kind(e);
  if (kind == "config") return 2;
  if (kind == "io") return 4;
  return 3;
}

inline json run_pipeline(const ExperimentConfig& cfg, const std::vector<std::string>& stages) {
  Runner r(cfg);
  return r.run(stages);
}

}  // namespace weakkam::pipeline
