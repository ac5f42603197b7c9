#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "proxflow/errors.hpp"
#include "proxflow/experiments.hpp"

using namespace proxflow;
using nlohmann::json;

namespace {

json scalar_propagation() {
  return json::parse(R"({
    "mode": "propagation",
    "system": {"A": [[-1.0]], "B": [[1.0]]},
    "initial": {"mean": [2.0], "cov": [[2.0]]},
    "horizon": 1.0,
    "step_sizes": [0.04, 0.02, 0.01, 0.005],
    "beta": 1.0
  })");
}

json scalar_filter() {
  return json::parse(R"({
    "mode": "filter",
    "system": {"A": [[-1.0]], "B": [[1.0]]},
    "measurement": {"C": [[1.0]], "R": [[1.0]]},
    "initial": {"mean": [0.0], "cov": [[1.0]]},
    "horizon": 2.0,
    "step_sizes": [0.02, 0.01],
    "seeds": [3, 1]
  })");
}

std::string error_of(const json& j) {
  try {
    ExperimentConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string csv_of(const ResultTable& t) {
  std::ostringstream os;
  t.write_csv(os);
  return os.str();
}

std::filesystem::path scratch(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("proxflow_test_" + name);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PROXFLOW_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parses the scalar benchmark") {
  const ExperimentConfig cfg = ExperimentConfig::from_json(scalar_propagation());
  CHECK(cfg.mode == "propagation");
  CHECK(cfg.horizon == 1.0);
  CHECK(cfg.step_sizes.size() == 4);
  CHECK(cfg.steps_for(0.04) == 25);
  CHECK(cfg.system().dim() == 1);
  CHECK(cfg.initial().mean()(0) == 2.0);
  CHECK_THROWS_AS(cfg.measurement(), ConfigError);
}

TEST_CASE("config errors name the offending field") {
  json j = scalar_propagation();
  j["system"]["A"] = "oops";
  CHECK(error_of(j).find("system.A") != std::string::npos);

  j = scalar_propagation();
  j["step_sizes"] = json::array({0.01, -0.02});
  CHECK(error_of(j).find("step_sizes") != std::string::npos);

  j = scalar_propagation();
  j["step_sizes"] = json::array({0.01, 0.01});
  CHECK(error_of(j).find("step_sizes") != std::string::npos);

  j = scalar_propagation();
  j["initial"]["cov"] = json::array({json::array({-1.0})});
  CHECK(error_of(j).find("initial.cov") != std::string::npos);

  j = scalar_propagation();
  j["extra"] = 1;
  CHECK(error_of(j).find("extra") != std::string::npos);

  j = scalar_propagation();
  j["horizon"] = 1.003;
  CHECK_THROWS_AS(ExperimentConfig::from_json(j).steps_for(0.04), ConfigError);

  j = scalar_propagation();
  j.erase("horizon");
  CHECK(error_of(j).find("horizon") != std::string::npos);
}

TEST_CASE("config file syntax errors report a position") {
  const auto path = scratch("bad.json");
  write_file(path, "{\n  \"mode\": \"propagation\",\n  \"horizon\": ,\n}\n");
  try {
    ExperimentConfig::load(path);
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(ExperimentConfig::load(scratch("missing.json")), ConfigError);
}

TEST_CASE("non-Hurwitz drift is a stability error") {
  json j = scalar_propagation();
  j["system"]["A"] = json::array({json::array({0.5})});
  CHECK_THROWS_AS(cmd_converge_propagation(ExperimentConfig::from_json(j)), StabilityError);
}

TEST_CASE("filter commands require seeds and matching measurement shapes") {
  json j = scalar_filter();
  j["seeds"] = json::array();
  CHECK_THROWS_AS(cmd_converge_filter(ExperimentConfig::from_json(j)), ConfigError);
  CHECK_THROWS_AS(cmd_compare_filters(ExperimentConfig::from_json(j)), ConfigError);

  j = scalar_filter();
  j["measurement"]["R"] = json::array({json::array({1.0, 0.0}), json::array({0.0, 1.0})});
  CHECK(error_of(j).find("measurement") != std::string::npos);

  j = scalar_filter();
  j["measurement"]["C"] = json::array({json::array({1.0, 2.0})});
  CHECK(error_of(j).find("measurement.C") != std::string::npos);

  CHECK_THROWS_AS(cmd_converge_filter(ExperimentConfig::from_json(scalar_propagation())),
                  ConfigError);
}

TEST_CASE("result table ordering and csv layout") {
  ResultTable t(0xabcULL, "demo");
  t.append({std::nullopt, std::nullopt, "z", 1.0});
  t.append({0.02, 2, "b", 0.1});
  t.append({0.01, std::nullopt, "a", 0.25});
  t.append({0.02, 1, "c", 3.0});
  t.append({0.02, 1, "a", -2.5});
  const std::string csv = csv_of(t);
  const std::string expected = std::string("# proxflow ") + std::string(version()) +
                               "\n"
                               "# config_hash 0000000000000abc\n"
                               "# command demo\n"
                               "h,seed,metric,value\n"
                               "0.01,,a,0.25\n"
                               "0.02,1,a,-2.5\n"
                               "0.02,1,c,3\n"
                               "0.02,2,b,0.1\n"
                               ",,z,1\n";
  CHECK(csv == expected);
  const json j = t.to_json();
  CHECK(j["config_hash"] == "0000000000000abc");
  CHECK(j["rows"].size() == 5);
  CHECK(j["rows"][0]["h"] == 0.01);
  CHECK(j["rows"][0]["seed"].is_null());
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.005) == "0.005");
}

TEST_CASE("parallel_for covers every index and rethrows the first failure") {
  std::atomic<int> sum{0};
  parallel_for(100, 4, [&](std::size_t i) { sum += static_cast<int>(i); });
  CHECK(sum == 4950);
  try {
    parallel_for(10, 3, [](std::size_t i) {
      if (i == 7 || i == 4) {
        throw std::runtime_error(std::to_string(i));
      }
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "4");
  }
}

TEST_CASE("converge-propagation reports first-order ratios") {
  const ResultTable t = cmd_converge_propagation(ExperimentConfig::from_json(scalar_propagation()));
  int ratios = 0;
  for (const ResultRow& r : t.sorted_rows()) {
    if (r.metric.ends_with("_ratio")) {
      ++ratios;
      CHECK(r.value > 1.7);
      CHECK(r.value < 2.3);
    }
    CHECK(!r.seed.has_value());
  }
  CHECK(ratios == 6);

  json single = scalar_propagation();
  single["step_sizes"] = json::array({0.01});
  const ResultTable one = cmd_converge_propagation(ExperimentConfig::from_json(single));
  CHECK(one.size() == 2);
  for (const ResultRow& r : one.sorted_rows()) {
    CHECK(!r.metric.ends_with("_ratio"));
  }
}

TEST_CASE("config hash follows content and output is thread-count invariant") {
  const ExperimentConfig a = ExperimentConfig::from_json(scalar_filter());
  json edited = scalar_filter();
  edited["horizon"] = 4.0;
  const ExperimentConfig b = ExperimentConfig::from_json(edited);
  CHECK(a.hash() != b.hash());
  CHECK(a.hash() == ExperimentConfig::from_json(scalar_filter()).hash());

  CHECK(csv_of(cmd_converge_filter(a, 1)) == csv_of(cmd_converge_filter(a, 4)));
  CHECK(csv_of(cmd_compare_filters(a, 1)) == csv_of(cmd_compare_filters(a, 3)));
}

TEST_CASE("converge-filter table shape") {
  json j = scalar_filter();
  j["update"] = "wasserstein";
  const ResultTable t = cmd_converge_filter(ExperimentConfig::from_json(j));
  int oracle_rows = 0;
  int cov_rows = 0;
  for (const ResultRow& r : t.sorted_rows()) {
    oracle_rows += r.metric == "oracle_terminal_cov_trace" ? 1 : 0;
    cov_rows += r.metric == "cov_error" ? 1 : 0;
  }
  CHECK(oracle_rows == 2);
  CHECK(cov_rows == 4);
}

TEST_CASE("compare-filters with one seed") {
  json j = scalar_filter();
  j["seeds"] = json::array({5});
  j["horizon"] = 10.0;
  const ResultTable t = cmd_compare_filters(ExperimentConfig::from_json(j));
  int rmse_rows = 0;
  for (const ResultRow& r : t.sorted_rows()) {
    if (r.metric == "terminal_rmse_lmmr") {
      ++rmse_rows;
    }
    if (r.metric == "steady_cov_trace_lmmr") {
      CHECK(std::abs(r.value - 0.732) < 0.02);
    }
    if (r.metric == "steady_cov_trace_wasserstein") {
      CHECK(std::abs(r.value - 0.5) < 0.02);
    }
  }
  CHECK(rmse_rows == 2);
}

TEST_CASE("lemma checks") {
  const auto summaries = run_lemma_checks(LemmaCheckOptions{});
  CHECK(summaries.size() == 5);
  for (const CheckSummary& s : summaries) {
    CHECK_MESSAGE(s.failed == 0, s.name);
    CHECK(s.passed == 1000);
    CHECK(s.worst_slack >= (s.name == "trace_inequality" ? -1e-12 : 0.0));
  }
  json refined = scalar_filter();
  refined["master_refinement"] = 4;
  CHECK(ExperimentConfig::from_json(refined).master_refinement == 4);
  refined["master_refinement"] = 0;
  CHECK(error_of(refined).find("master_refinement") != std::string::npos);

  json negative = scalar_filter();
  negative["seeds"] = json::array({-1});
  CHECK(error_of(negative).find("seeds[0]") != std::string::npos);

  const ResultTable one = cmd_lemma_checks(LemmaCheckOptions{1, 5, 9});
  for (const ResultRow& r : one.sorted_rows()) {
    if (r.metric.ends_with(".passed")) {
      CHECK(r.value == 1.0);
    }
  }
  CHECK(csv_of(cmd_lemma_checks(LemmaCheckOptions{50, 3, 4})) ==
        csv_of(cmd_lemma_checks(LemmaCheckOptions{50, 3, 4})));
  CHECK(csv_of(cmd_lemma_checks(LemmaCheckOptions{50, 3, 4})) !=
        csv_of(cmd_lemma_checks(LemmaCheckOptions{50, 3, 5})));
}

TEST_CASE("cli exit codes and outputs") {
  const auto good = scratch("good.json");
  write_file(good, scalar_propagation().dump());
  const auto out = scratch("out.csv");
  const auto mirror = scratch("out.json");
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("converge-propagation --config " + good.string() + " --out " + out.string() +
                " --json " + mirror.string()) == 0);
  CHECK(read_file(out).starts_with("# proxflow"));
  CHECK(json::parse(read_file(mirror))["rows"].size() == 14);

  CHECK(run_cli("") == 1);
  CHECK(run_cli("no-such-command") == 1);
  CHECK(run_cli("converge-propagation --config " + scratch("absent.json").string()) == 1);
  CHECK(run_cli("converge-propagation --config " + good.string() + " --threads 0") == 1);

  json unstable = scalar_propagation();
  unstable["system"]["A"] = json::array({json::array({0.5})});
  const auto bad = scratch("unstable.json");
  write_file(bad, unstable.dump());
  CHECK(run_cli("converge-propagation --config " + bad.string()) == 1);

  json stiff = scalar_propagation();
  stiff["system"]["A"] = json::array({json::array({-200.0, 0.0}), json::array({0.0, -1.0})});
  stiff["system"]["B"] = json::array({json::array({1.0, 0.0}), json::array({0.0, 1.0})});
  stiff["initial"]["mean"] = json::array({1.0, 1.0});
  stiff["initial"]["cov"] = json::array({json::array({1.0, 0.0}), json::array({0.0, 1.0})});
  stiff["propagation_mode"] = "general";
  stiff.erase("beta");
  const auto numeric = scratch("stiff.json");
  write_file(numeric, stiff.dump());
  CHECK(run_cli("converge-propagation --config " + numeric.string()) == 2);

  const auto lemma = scratch("lemma.csv");
  CHECK(run_cli("lemma-checks --trials 3 --dims 2 --seed 1 --out " + lemma.string()) == 0);
  CHECK(read_file(lemma).find("trace_inequality.passed,3") != std::string::npos);

  const auto filt = scratch("filter.json");
  write_file(filt, scalar_filter().dump());
  const auto f1 = scratch("f1.csv");
  const auto f2 = scratch("f2.csv");
  CHECK(run_cli("converge-filter --config " + filt.string() + " --out " + f1.string()) == 0);
  CHECK(run_cli("converge-filter --config " + filt.string() + " --seed 8 --out " + f2.string()) ==
        0);
  const std::string first = read_file(f1);
  const std::string second = read_file(f2);
  CHECK(second.find(",8,") != std::string::npos);
  CHECK(second.find(",3,") == std::string::npos);
  CHECK(first.substr(0, first.find("# command")) != second.substr(0, second.find("# command")));
}
