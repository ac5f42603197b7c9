#include "proxflow/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "proxflow/errors.hpp"
#include "proxflow/reference_oracles.hpp"
#include "proxflow/sde_sim.hpp"

#ifndef PROXFLOW_VERSION
#define PROXFLOW_VERSION "0.0.0"
#endif

namespace proxflow {

using nlohmann::json;

std::string_view version() { return PROXFLOW_VERSION; }

// ---------------------------------------------------------------------------
// Config parsing

namespace {

[[noreturn]] void config_fail(const std::string& path, const std::string& what) {
  throw ConfigError("config field '" + path + "': " + what);
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  const auto it = obj.find(key);
  if (it == obj.end()) {
    config_fail(path.empty() ? key : path + "." + key, "missing");
  }
  return *it;
}

double parse_number(const json& j, const std::string& path) {
  if (!j.is_number()) {
    config_fail(path, "expected a number");
  }
  const double v = j.get<double>();
  if (!std::isfinite(v)) {
    config_fail(path, "must be finite");
  }
  return v;
}

Vector parse_vector(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) {
    config_fail(path, "expected a non-empty array of numbers");
  }
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Index>(i)) = parse_number(j[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

Matrix parse_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) {
    config_fail(path, "expected a non-empty array of rows");
  }
  const std::size_t rows = j.size();
  std::size_t cols = 0;
  Matrix m;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const Vector row = parse_vector(j[i], row_path);
    if (i == 0) {
      cols = static_cast<std::size_t>(row.size());
      m.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    } else if (static_cast<std::size_t>(row.size()) != cols) {
      config_fail(row_path, "row has " + std::to_string(row.size()) + " entries, expected " +
                                std::to_string(cols));
    }
    m.row(static_cast<Index>(i)) = row.transpose();
  }
  return m;
}

std::string parse_string(const json& j, const std::string& path) {
  if (!j.is_string()) {
    config_fail(path, "expected a string");
  }
  return j.get<std::string>();
}

void expect_shape(const Matrix& m, Index rows, Index cols, const std::string& path) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << "shape " << m.rows() << "x" << m.cols() << ", expected " << rows << "x" << cols;
    config_fail(path, os.str());
  }
}

void expect_spd(const Matrix& m, const std::string& path) {
  try {
    SpdMatrix check(m);
  } catch (const std::exception& e) {
    config_fail(path, std::string("not symmetric positive definite (") + e.what() + ")");
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) {
    throw ConfigError("config: top level must be an object");
  }
  static const std::set<std::string> known = {
      "mode",    "system",  "measurement",      "initial",           "horizon",
      "step_sizes", "seeds", "beta",            "propagation_mode",  "update",
      "predict", "output",  "master_refinement"};
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      config_fail(key, "unknown field");
    }
  }

  ExperimentConfig cfg;
  cfg.source = j;

  if (j.contains("mode")) {
    cfg.mode = parse_string(j["mode"], "mode");
    if (cfg.mode != "propagation" && cfg.mode != "filter") {
      config_fail("mode", "expected \"propagation\" or \"filter\"");
    }
  }

  const json& system = require(j, "system", "");
  cfg.a = parse_matrix(require(system, "A", "system"), "system.A");
  const Index n = cfg.a.rows();
  expect_shape(cfg.a, n, n, "system.A");
  cfg.b = parse_matrix(require(system, "B", "system"), "system.B");
  if (cfg.b.rows() != n) {
    config_fail("system.B", "expected " + std::to_string(n) + " rows");
  }

  if (j.contains("measurement")) {
    const json& meas = j["measurement"];
    Matrix c = parse_matrix(require(meas, "C", "measurement"), "measurement.C");
    if (c.cols() != n) {
      config_fail("measurement.C", "expected " + std::to_string(n) + " columns");
    }
    Matrix r = parse_matrix(require(meas, "R", "measurement"), "measurement.R");
    expect_shape(r, c.rows(), c.rows(), "measurement.R");
    expect_spd(r, "measurement.R");
    cfg.c = std::move(c);
    cfg.r = std::move(r);
  }

  const json& initial = require(j, "initial", "");
  cfg.mu0 = parse_vector(require(initial, "mean", "initial"), "initial.mean");
  if (cfg.mu0.size() != n) {
    config_fail("initial.mean", "expected " + std::to_string(n) + " entries");
  }
  cfg.p0 = parse_matrix(require(initial, "cov", "initial"), "initial.cov");
  expect_shape(cfg.p0, n, n, "initial.cov");
  expect_spd(cfg.p0, "initial.cov");

  cfg.horizon = parse_number(require(j, "horizon", ""), "horizon");
  if (!(cfg.horizon > 0.0)) {
    config_fail("horizon", "must be positive");
  }

  const json& steps = require(j, "step_sizes", "");
  if (!steps.is_array() || steps.empty()) {
    config_fail("step_sizes", "expected a non-empty array");
  }
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const std::string path = "step_sizes[" + std::to_string(i) + "]";
    const double h = parse_number(steps[i], path);
    if (!(h > 0.0)) {
      config_fail(path, "must be positive");
    }
    if (std::find(cfg.step_sizes.begin(), cfg.step_sizes.end(), h) != cfg.step_sizes.end()) {
      config_fail(path, "duplicate step size");
    }
    cfg.step_sizes.push_back(h);
  }
  std::sort(cfg.step_sizes.begin(), cfg.step_sizes.end(), std::greater<>());

  if (j.contains("seeds")) {
    const json& seeds = j["seeds"];
    if (!seeds.is_array()) {
      config_fail("seeds", "expected an array of non-negative integers");
    }
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (!seeds[i].is_number_integer() || seeds[i].get<std::int64_t>() < 0) {
        config_fail("seeds[" + std::to_string(i) + "]", "expected a non-negative integer");
      }
      cfg.seeds.push_back(seeds[i].get<std::uint64_t>());
    }
  }

  if (j.contains("beta")) {
    const double beta = parse_number(j["beta"], "beta");
    if (!(beta > 0.0)) {
      config_fail("beta", "must be positive");
    }
    cfg.beta = beta;
  }

  if (j.contains("propagation_mode")) {
    const std::string m = parse_string(j["propagation_mode"], "propagation_mode");
    if (m == "auto") {
      cfg.propagation = PropagationChoice::kAuto;
    } else if (m == "symmetric") {
      cfg.propagation = PropagationChoice::kSymmetric;
    } else if (m == "general") {
      cfg.propagation = PropagationChoice::kGeneral;
    } else {
      config_fail("propagation_mode", "expected \"auto\", \"symmetric\" or \"general\"");
    }
  }
  if (j.contains("update")) {
    const std::string u = parse_string(j["update"], "update");
    if (u == "lmmr") {
      cfg.update = UpdateKind::kLmmr;
    } else if (u == "wasserstein") {
      cfg.update = UpdateKind::kWasserstein;
    } else {
      config_fail("update", "expected \"lmmr\" or \"wasserstein\"");
    }
  }
  if (j.contains("predict")) {
    const std::string p = parse_string(j["predict"], "predict");
    if (p == "jko") {
      cfg.predict = PredictKind::kJko;
    } else if (p == "exact") {
      cfg.predict = PredictKind::kExact;
    } else {
      config_fail("predict", "expected \"jko\" or \"exact\"");
    }
  }
  if (j.contains("master_refinement")) {
    const json& mr = j["master_refinement"];
    if (!mr.is_number_integer() || mr.get<std::int64_t>() < 1 || mr.get<std::int64_t>() > 1000) {
      config_fail("master_refinement", "expected an integer in [1, 1000]");
    }
    cfg.master_refinement = static_cast<int>(mr.get<std::int64_t>());
  }
  if (j.contains("output")) {
    const json& out = j["output"];
    if (!out.is_object()) {
      config_fail("output", "expected an object");
    }
    if (out.contains("csv")) {
      cfg.csv_path = parse_string(out["csv"], "output.csv");
    }
    if (out.contains("json")) {
      cfg.json_path = parse_string(out["json"], "output.json");
    }
  }

  for (double h : cfg.step_sizes) {
    cfg.steps_for(h);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("config: cannot open " + path.string());
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const unsigned char ch : source.dump()) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

int ExperimentConfig::steps_for(double h) const {
  const double ratio = horizon / h;
  const double k = std::round(ratio);
  if (k < 1.0 || std::abs(ratio - k) > 1e-9 * std::max(1.0, ratio)) {
    config_fail("step_sizes", "horizon " + format_double(horizon) + " is not a multiple of " +
                                  format_double(h));
  }
  if (k > 1e8) {
    config_fail("step_sizes", "more than 1e8 steps for h = " + format_double(h));
  }
  return static_cast<int>(k);
}

LinearSystem ExperimentConfig::system() const { return LinearSystem(SquareMatrix(a), b); }

MeasurementModel ExperimentConfig::measurement() const {
  if (!c || !r) {
    throw ConfigError("config field 'measurement': missing");
  }
  return MeasurementModel(*c, SpdMatrix(*r));
}

Gaussian ExperimentConfig::initial() const { return Gaussian(mu0, SpdMatrix(p0)); }

// ---------------------------------------------------------------------------
// Result tables

std::string format_double(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_hash(std::uint64_t hash) {
  char buf[17];
  const auto res = std::to_chars(buf, buf + sizeof buf, hash, 16);
  std::string s(buf, res.ptr);
  return std::string(16 - s.size(), '0') + s;
}

ResultTable::ResultTable(std::uint64_t config_hash, std::string command)
    : hash_(config_hash), command_(std::move(command)) {}

void ResultTable::append(ResultRow row) { rows_.push_back(std::move(row)); }

void ResultTable::append(const ResultTable& other) {
  rows_.insert(rows_.end(), other.rows_.begin(), other.rows_.end());
}

std::vector<ResultRow> ResultTable::sorted_rows() const {
  std::vector<ResultRow> out = rows_;
  const auto key = [](const ResultRow& r) {
    return std::make_tuple(!r.h.has_value(), r.h.value_or(0.0), !r.seed.has_value(),
                           r.seed.value_or(0), std::cref(r.metric));
  };
  std::stable_sort(out.begin(), out.end(),
                   [&](const ResultRow& x, const ResultRow& y) { return key(x) < key(y); });
  return out;
}

void ResultTable::write_csv(std::ostream& os) const {
  os << "# proxflow " << version() << "\n";
  os << "# config_hash " << format_hash(hash_) << "\n";
  os << "# command " << command_ << "\n";
  os << "h,seed,metric,value\n";
  for (const ResultRow& r : sorted_rows()) {
    if (r.h) {
      os << format_double(*r.h);
    }
    os << ',';
    if (r.seed) {
      os << *r.seed;
    }
    os << ',' << r.metric << ',' << format_double(r.value) << "\n";
  }
}

json ResultTable::to_json() const {
  json rows = json::array();
  for (const ResultRow& r : sorted_rows()) {
    json row;
    row["h"] = r.h ? json(*r.h) : json(nullptr);
    row["seed"] = r.seed ? json(*r.seed) : json(nullptr);
    row["metric"] = r.metric;
    row["value"] = std::isfinite(r.value) ? json(r.value) : json(format_double(r.value));
    rows.push_back(std::move(row));
  }
  return json{{"tool", "proxflow"},
              {"version", std::string(version())},
              {"config_hash", format_hash(hash_)},
              {"command", command_},
              {"rows", std::move(rows)}};
}

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> errors(count);
  const auto workers = static_cast<std::size_t>(std::max(1U, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          task(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w) {
      pool.emplace_back(work);
    }
  }
  for (const auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

// ---------------------------------------------------------------------------
// Commands

namespace {

void require_mode(const ExperimentConfig& cfg, const char* expected) {
  if (!cfg.mode.empty() && cfg.mode != expected) {
    config_fail("mode", "this command needs \"" + std::string(expected) + "\", got \"" +
                            cfg.mode + "\"");
  }
}

void require_seeds(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) {
    config_fail("seeds", "at least one seed is required");
  }
}

/// Error ratios between consecutive step sizes (descending), attached to the
/// finer h of each pair.
void append_ratios(ResultTable& table, const std::vector<double>& hs,
                   const std::vector<double>& errors, std::optional<std::uint64_t> seed,
                   const std::string& metric) {
  for (std::size_t i = 1; i < hs.size(); ++i) {
    table.append({hs[i], seed, metric + "_ratio", errors[i - 1] / errors[i]});
  }
}

/// Master path at the finest step divided by master_refinement, and the
/// integer factor taking it to each configured h.
struct MasterGrid {
  double h;
  int steps;
  std::vector<int> factors;
};

MasterGrid master_grid(const ExperimentConfig& cfg) {
  MasterGrid grid{cfg.step_sizes.back() / cfg.master_refinement, 0, {}};
  grid.steps = cfg.steps_for(cfg.step_sizes.back()) * cfg.master_refinement;
  grid.h = cfg.horizon / grid.steps;
  for (double h : cfg.step_sizes) {
    const int coarse = cfg.steps_for(h);
    if (grid.steps % coarse != 0) {
      config_fail("step_sizes", "h = " + format_double(h) +
                                    " is not an integer multiple of the master step " +
                                    format_double(grid.h));
    }
    grid.factors.push_back(grid.steps / coarse);
  }
  return grid;
}

double cov_distance(const SpdMatrix& p, const SpdMatrix& q) {
  return (p.mat() - q.mat()).norm();
}

}  // namespace

ResultTable cmd_converge_propagation(const ExperimentConfig& cfg, unsigned threads) {
  require_mode(cfg, "propagation");
  const LinearSystem sys = cfg.system();
  const Gaussian g0 = cfg.initial();
  const std::optional<double> gb = sys.gradient_beta();

  PropagationMode mode = PropagationMode::kGeneralFirstOrder;
  if (cfg.propagation == PropagationChoice::kSymmetric ||
      (cfg.propagation == PropagationChoice::kAuto && gb)) {
    mode = PropagationMode::kSymmetricExact;
  }
  const double beta = cfg.beta.value_or(gb.value_or(1.0));

  const Vector mean_t = exact_mean(sys, g0.mean(), cfg.horizon);
  const SpdMatrix cov_t =
      exact_cov(sys, g0.cov(), cfg.horizon, OdeConfig::for_step(cfg.step_sizes.back()));

  const std::size_t count = cfg.step_sizes.size();
  std::vector<double> mean_err(count);
  std::vector<double> cov_err(count);
  parallel_for(count, threads, [&](std::size_t i) {
    const double h = cfg.step_sizes[i];
    const StepConfig step{h, cfg.steps_for(h), beta};
    const Gaussian last = propagate(sys, g0, step, mode).back().g;
    mean_err[i] = (last.mean() - mean_t).norm();
    cov_err[i] = cov_distance(last.cov(), cov_t);
  });

  ResultTable table(cfg.hash(), "converge-propagation");
  for (std::size_t i = 0; i < count; ++i) {
    table.append({cfg.step_sizes[i], std::nullopt, "mean_error", mean_err[i]});
    table.append({cfg.step_sizes[i], std::nullopt, "cov_error", cov_err[i]});
  }
  append_ratios(table, cfg.step_sizes, mean_err, std::nullopt, "mean_error");
  append_ratios(table, cfg.step_sizes, cov_err, std::nullopt, "cov_error");
  return table;
}

ResultTable cmd_converge_filter(const ExperimentConfig& cfg, unsigned threads) {
  require_mode(cfg, "filter");
  require_seeds(cfg);
  const LinearSystem sys = cfg.system();
  const MeasurementModel meas = cfg.measurement();
  const Gaussian g0 = cfg.initial();
  const MasterGrid grid = master_grid(cfg);
  const double beta = cfg.beta.value_or(sys.gradient_beta().value_or(1.0));

  std::vector<ResultTable> parts(cfg.seeds.size(), ResultTable(cfg.hash(), ""));
  parallel_for(cfg.seeds.size(), threads, [&](std::size_t s) {
    const std::uint64_t seed = cfg.seeds[s];
    const SimPath master =
        simulate(sys, meas, g0, StepConfig{grid.h, grid.steps, beta}, seed);
    const OdeConfig ode = OdeConfig::for_step(grid.h);
    const std::vector<Gaussian> oracle =
        cfg.update == UpdateKind::kLmmr
            ? kalman_bucy_run(sys, meas, g0, master.increments, grid.h, ode)
            : luenberger_run(sys, meas, g0, master.increments, grid.h, ode);

    ResultTable& part = parts[s];
    std::vector<double> cov_err;
    std::vector<double> path_err;
    for (std::size_t i = 0; i < cfg.step_sizes.size(); ++i) {
      const double h = cfg.step_sizes[i];
      const int factor = grid.factors[i];
      const SimPath coarse = coarsen(master, factor);
      const StepConfig step{h, static_cast<int>(coarse.increments.size()), beta};
      const FilterRun run =
          run_filter(sys, meas, g0, coarse.increments, step, cfg.update, cfg.predict);

      double worst = 0.0;
      for (std::size_t k = 0; k < run.posterior.size(); ++k) {
        const Vector& ref = oracle[k * static_cast<std::size_t>(factor)].mean();
        worst = std::max(worst, (run.posterior[k].mean() - ref).norm());
      }
      const Gaussian& last = run.posterior.back();
      cov_err.push_back(cov_distance(last.cov(), oracle.back().cov()));
      path_err.push_back(worst);
      const ErrorSummary truth = error_metrics(run, coarse.states);

      part.append({h, seed, "cov_error", cov_err.back()});
      part.append({h, seed, "mean_path_error", worst});
      part.append({h, seed, "terminal_mean_error", (last.mean() - oracle.back().mean()).norm()});
      part.append({h, seed, "terminal_cov_trace", last.cov().mat().trace()});
      part.append({h, seed, "path_rmse", truth.path_rmse});
    }
    part.append({std::nullopt, seed, "oracle_terminal_cov_trace",
                 oracle.back().cov().mat().trace()});
    append_ratios(part, cfg.step_sizes, cov_err, seed, "cov_error");
    append_ratios(part, cfg.step_sizes, path_err, seed, "mean_path_error");
  });

  ResultTable table(cfg.hash(), "converge-filter");
  for (const ResultTable& part : parts) {
    table.append(part);
  }
  return table;
}

ResultTable cmd_compare_filters(const ExperimentConfig& cfg, unsigned threads) {
  require_mode(cfg, "filter");
  require_seeds(cfg);
  const LinearSystem sys = cfg.system();
  const MeasurementModel meas = cfg.measurement();
  const Gaussian g0 = cfg.initial();
  const MasterGrid grid = master_grid(cfg);
  const double beta = cfg.beta.value_or(sys.gradient_beta().value_or(1.0));
  const std::size_t nh = cfg.step_sizes.size();

  struct Cell {
    ErrorSummary lmmr;
    ErrorSummary wasserstein;
    double cov_lmmr;
    double cov_wasserstein;
  };
  std::vector<std::vector<Cell>> cells(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), threads, [&](std::size_t s) {
    const SimPath master =
        simulate(sys, meas, g0, StepConfig{grid.h, grid.steps, beta}, cfg.seeds[s]);
    for (std::size_t i = 0; i < nh; ++i) {
      const SimPath coarse = coarsen(master, grid.factors[i]);
      const StepConfig step{cfg.step_sizes[i], static_cast<int>(coarse.increments.size()),
                            beta};
      const FilterRun lmmr = run_filter(sys, meas, g0, coarse.increments, step,
                                        UpdateKind::kLmmr, cfg.predict);
      const FilterRun wass = run_filter(sys, meas, g0, coarse.increments, step,
                                        UpdateKind::kWasserstein, cfg.predict);
      cells[s].push_back({error_metrics(lmmr, coarse.states), error_metrics(wass, coarse.states),
                          lmmr.posterior.back().cov().mat().trace(),
                          wass.posterior.back().cov().mat().trace()});
    }
  });

  ResultTable table(cfg.hash(), "compare-filters");
  for (std::size_t i = 0; i < nh; ++i) {
    const double h = cfg.step_sizes[i];
    std::vector<ErrorSummary> lmmr;
    std::vector<ErrorSummary> wass;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
      const Cell& c = cells[s][i];
      const std::uint64_t seed = cfg.seeds[s];
      table.append({h, seed, "terminal_sq_error_lmmr", c.lmmr.terminal_squared_error});
      table.append({h, seed, "terminal_sq_error_wasserstein", c.wasserstein.terminal_squared_error});
      table.append({h, seed, "path_rmse_lmmr", c.lmmr.path_rmse});
      table.append({h, seed, "path_rmse_wasserstein", c.wasserstein.path_rmse});
      lmmr.push_back(c.lmmr);
      wass.push_back(c.wasserstein);
    }
    // Covariances do not depend on the measurements, so any seed gives them.
    table.append({h, std::nullopt, "terminal_rmse_lmmr", terminal_rmse(lmmr)});
    table.append({h, std::nullopt, "terminal_rmse_wasserstein", terminal_rmse(wass)});
    table.append({h, std::nullopt, "steady_cov_trace_lmmr", cells[0][i].cov_lmmr});
    table.append({h, std::nullopt, "steady_cov_trace_wasserstein", cells[0][i].cov_wasserstein});
  }
  return table;
}

// ---------------------------------------------------------------------------
// Lemma checks

namespace {

Gaussian random_gaussian(Rng& rng, Index n) {
  return Gaussian(standard_normal(rng, n), random_spd(rng, n));
}

class CheckAccumulator {
 public:
  CheckAccumulator(std::string name, double tolerance)
      : tolerance_(tolerance), summary_{std::move(name), 0, 0,
                                        std::numeric_limits<double>::infinity(), 0.0} {}

  /// Records a nonnegative error measured against the tolerance.
  void error(double e) { record(e <= tolerance_, tolerance_ - e, e); }

  /// Records the slack of an inequality (rhs − lhs); passes down to −tolerance.
  void inequality(double s) { record(s >= -tolerance_, s, std::max(0.0, -s)); }

  CheckSummary result() const { return summary_; }

 private:
  void record(bool pass, double s, double e) {
    if (pass) {
      ++summary_.passed;
    } else {
      ++summary_.failed;
    }
    summary_.worst_slack = std::min(summary_.worst_slack, s);
    summary_.worst_error = std::max(summary_.worst_error, e);
  }

  double tolerance_;
  CheckSummary summary_;
};

}  // namespace

std::vector<CheckSummary> run_lemma_checks(const LemmaCheckOptions& opts) {
  if (opts.trials < 1) {
    throw ValidationError("lemma checks: trials must be at least 1");
  }
  if (opts.max_dim < 1) {
    throw ValidationError("lemma checks: dims must be at least 1");
  }
  CheckAccumulator trace_ineq("trace_inequality", 1e-12);
  CheckAccumulator push("push_forward", 1e-10);
  CheckAccumulator consistency("w2_consistency", 1e-10);
  CheckAccumulator dilation("dilation", 1e-10);
  CheckAccumulator gradient("cross_term_gradient", 1e-6);

  Rng rng(opts.seed);
  for (int t = 0; t < opts.trials; ++t) {
    const Index n = 1 + t % opts.max_dim;

    {
      const SpdMatrix x = random_spd(rng, n);
      const SpdMatrix y = random_spd(rng, n);
      const double lhs = w2_cross_term(y, x);
      const double rhs = std::sqrt(x.mat().trace() * y.mat().trace());
      trace_ineq.inequality(rhs - lhs);
    }
    {
      const Gaussian from = random_gaussian(rng, n);
      const Gaussian to = random_gaussian(rng, n);
      const AffineMap map = transport_map(from, to);
      const Matrix& m = map.linear.mat();
      const double mean_err = (map.apply(from.mean()) - to.mean()).lpNorm<Eigen::Infinity>();
      const double cov_err = max_abs(m * from.cov().mat() * m.transpose() - to.cov().mat());
      push.error(std::max(mean_err, cov_err));

      // E‖x − (Mx + m)‖² for x ~ from, in closed moment form.
      const Matrix resid = Matrix::Identity(n, n) - m;
      const double cost = (resid * from.cov().mat() * resid.transpose()).trace() +
                          (resid * from.mean() - map.offset).squaredNorm();
      consistency.error(std::abs(cost - w2_squared(from, to)));
    }
    {
      const Gaussian g0 = random_gaussian(rng, n);
      const Vector mu = standard_normal(rng, n);
      const double tau = g0.cov().mat().trace() * std::exp(rng.normal());
      const TraceProjection proj = trace_projection(g0, mu, tau);
      dilation.error(std::abs(w2_gaussian(proj.gaussian, g0) - proj.w2));
    }
    {
      const SpdMatrix p = random_spd(rng, n);
      const SpdMatrix p0 = random_spd(rng, n);
      const Matrix g = grad_w2_cross(p, p0).mat();
      constexpr double kStep = 1e-5;
      Matrix fd(n, n);
      for (Index i = 0; i < n; ++i) {
        for (Index j = i; j < n; ++j) {
          Matrix e = Matrix::Zero(n, n);
          e(i, j) += 1.0;
          e(j, i) += 1.0;
          const double up = w2_cross_term(SpdMatrix(p.mat() + kStep * e), p0);
          const double down = w2_cross_term(SpdMatrix(p.mat() - kStep * e), p0);
          // Directional derivative along E_ij + E_ji is 2·G_ij.
          fd(i, j) = fd(j, i) = (up - down) / (4.0 * kStep);
        }
      }
      gradient.error(max_abs(fd - g) / max_abs(g));
    }
  }
  return {trace_ineq.result(), push.result(), consistency.result(), dilation.result(),
          gradient.result()};
}

ResultTable cmd_lemma_checks(const LemmaCheckOptions& opts) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const std::uint64_t v : {static_cast<std::uint64_t>(opts.trials),
                                static_cast<std::uint64_t>(opts.max_dim), opts.seed}) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  }
  ResultTable table(h, "lemma-checks");
  for (const CheckSummary& c : run_lemma_checks(opts)) {
    table.append({std::nullopt, opts.seed, c.name + ".passed", static_cast<double>(c.passed)});
    table.append({std::nullopt, opts.seed, c.name + ".failed", static_cast<double>(c.failed)});
    table.append({std::nullopt, opts.seed, c.name + ".worst_slack", c.worst_slack});
    table.append({std::nullopt, opts.seed, c.name + ".worst_error", c.worst_error});
  }
  return table;
}

}  // namespace proxflow
