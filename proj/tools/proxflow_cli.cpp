#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "proxflow/errors.hpp"
#include "proxflow/experiments.hpp"

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag) {
    return std::max(1U, *flag);
  }
  if (const char* env = std::getenv("PROXFLOW_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) {
        return static_cast<unsigned>(v);
      }
    } catch (const std::exception&) {
    }
    throw proxflow::ConfigError(std::string("PROXFLOW_THREADS: expected a positive integer, got '") +
                                env + "'");
  }
  return 1;
}

void write_outputs(const proxflow::ResultTable& table, const std::string& csv_path,
                   const std::string& json_path) {
  if (csv_path.empty() || csv_path == "-") {
    table.write_csv(std::cout);
  } else {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) {
      throw proxflow::ConfigError("cannot write " + csv_path);
    }
    table.write_csv(out);
  }
  if (!json_path.empty()) {
    std::ofstream out(json_path, std::ios::binary);
    if (!out) {
      throw proxflow::ConfigError("cannot write " + json_path);
    }
    out << table.to_json().dump(2) << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Proximal Gaussian propagation and filtering experiments"};
  app.set_version_flag("--version", std::string(proxflow::version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string json_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;

  const auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "JSON experiment config");
    if (needs_config) {
      opt->required()->check(CLI::ExistingFile);
    }
    sub->add_option("--out", out_path, "CSV output path (default: config output.csv, else stdout)");
    sub->add_option("--json", json_path, "JSON mirror of the table");
    sub->add_option("--seed", seed, "Override the seed list with a single seed");
    sub->add_option("--threads", threads, "Worker threads (fallback: PROXFLOW_THREADS)")
        ->check(CLI::PositiveNumber);
  };

  auto* prop = app.add_subcommand("converge-propagation", "Propagation error vs step size");
  add_common(prop, true);
  auto* filt = app.add_subcommand("converge-filter", "Filter error vs continuous-time oracle");
  add_common(filt, true);
  auto* cmp = app.add_subcommand("compare-filters", "Monte Carlo comparison of both updates");
  add_common(cmp, true);
  auto* lemma = app.add_subcommand("lemma-checks", "Randomized geometry identity checks");
  add_common(lemma, false);
  proxflow::LemmaCheckOptions lemma_opts;
  lemma->add_option("--trials", lemma_opts.trials, "Trials per check")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  lemma->add_option("--dims", lemma_opts.max_dim, "Dimensions cycle through 1..dims")
      ->capture_default_str()
      ->check(CLI::Range(1, 50));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    const unsigned n_threads = resolve_threads(threads);
    if (lemma->parsed()) {
      if (seed) {
        lemma_opts.seed = *seed;
      }
      write_outputs(proxflow::cmd_lemma_checks(lemma_opts), out_path, json_path);
      return 0;
    }

    proxflow::ExperimentConfig cfg = proxflow::ExperimentConfig::load(config_path);
    if (seed) {
      cfg.seeds = {*seed};
      cfg.source["seeds"] = nlohmann::json::array({*seed});
    }
    const std::string csv = out_path.empty() ? cfg.csv_path : out_path;
    const std::string js = json_path.empty() ? cfg.json_path : json_path;
    if (prop->parsed()) {
      write_outputs(proxflow::cmd_converge_propagation(cfg, n_threads), csv, js);
    } else if (filt->parsed()) {
      write_outputs(proxflow::cmd_converge_filter(cfg, n_threads), csv, js);
    } else {
      write_outputs(proxflow::cmd_compare_filters(cfg, n_threads), csv, js);
    }
  } catch (const proxflow::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const proxflow::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  }
  return 0;
}
