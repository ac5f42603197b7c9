#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "proxflow/filtering.hpp"
#include "proxflow/gaussian_geometry.hpp"
#include "proxflow/measurement_model.hpp"
#include "proxflow/propagation.hpp"

namespace proxflow {

std::string_view version();

enum class PropagationChoice { kAuto, kSymmetric, kGeneral };

/// Experiment description read from a JSON file. Matrices are row-major
/// nested arrays. Every field error names the offending JSON path.
struct ExperimentConfig {
  /// "propagation" or "filter"; empty when the file does not say.
  std::string mode;
  Matrix a;
  Matrix b;
  std::optional<Matrix> c;
  std::optional<Matrix> r;
  Vector mu0;
  Matrix p0;
  double horizon = 0.0;
  std::vector<double> step_sizes;
  std::vector<std::uint64_t> seeds;
  std::optional<double> beta;
  PropagationChoice propagation = PropagationChoice::kAuto;
  UpdateKind update = UpdateKind::kLmmr;
  PredictKind predict = PredictKind::kExact;
  /// The simulated master path runs at min(step_sizes)/master_refinement.
  int master_refinement = 1;
  std::string csv_path;
  std::string json_path;
  nlohmann::json source;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// FNV-1a 64 of the canonical serialization of `source`.
  std::uint64_t hash() const;

  /// horizon / h, rejected unless integral within rounding.
  int steps_for(double h) const;

  LinearSystem system() const;
  /// Throws ConfigError when the config has no measurement block.
  MeasurementModel measurement() const;
  Gaussian initial() const;
};

struct ResultRow {
  std::optional<double> h;
  std::optional<std::uint64_t> seed;
  std::string metric;
  double value;
};

/// Rows of (h, seed, metric, value). Output order is sorted by
/// (h, seed, metric) with absent h/seed last, independent of insertion order.
class ResultTable {
 public:
  ResultTable(std::uint64_t config_hash, std::string command);

  void append(ResultRow row);
  void append(const ResultTable& other);

  std::vector<ResultRow> sorted_rows() const;
  std::size_t size() const noexcept { return rows_.size(); }
  std::uint64_t config_hash() const noexcept { return hash_; }
  const std::string& command() const noexcept { return command_; }

  /// Comment lines `# proxflow <version>`, `# config_hash <hex>` and
  /// `# command <name>`, then the header `h,seed,metric,value`. Doubles use
  /// the shortest round-trip form; absent h/seed are empty fields.
  void write_csv(std::ostream& os) const;
  nlohmann::json to_json() const;

 private:
  std::uint64_t hash_;
  std::string command_;
  std::vector<ResultRow> rows_;
};

std::string format_double(double v);
std::string format_hash(std::uint64_t hash);

/// Runs task(i) for i in [0, count) on up to `threads` workers. Exceptions
/// are rethrown on the caller, lowest index first.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& task);

ResultTable cmd_converge_propagation(const ExperimentConfig& cfg, unsigned threads = 1);
ResultTable cmd_converge_filter(const ExperimentConfig& cfg, unsigned threads = 1);
ResultTable cmd_compare_filters(const ExperimentConfig& cfg, unsigned threads = 1);

struct LemmaCheckOptions {
  int trials = 1000;
  int max_dim = 5;
  std::uint64_t seed = 0;
};

/// Per-check outcome. Slack is rhs − lhs for inequalities, which pass down to
/// −tolerance, and tolerance − error for error checks; the worst slack is the
/// minimum over trials.
struct CheckSummary {
  std::string name;
  int passed = 0;
  int failed = 0;
  double worst_slack = 0.0;
  double worst_error = 0.0;
};

/// trace_inequality, push_forward, w2_consistency, dilation and
/// cross_term_gradient suites over random SPD inputs, dims cycling 1..max_dim.
std::vector<CheckSummary> run_lemma_checks(const LemmaCheckOptions& opts);
ResultTable cmd_lemma_checks(const LemmaCheckOptions& opts);

}  // namespace proxflow
