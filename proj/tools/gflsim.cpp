// Command-line front end for the graph federated learning simulator.
//
// Subcommands:
//   run          single-scheme experiment
//   compare      multi-scheme comparison (one dataset, matched sampling)
//   budget       differential-privacy budget table
//   graph-check  combination-matrix validation report
//
// Exit codes: 0 success, 1 config error, 2 completed with divergences.

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gfl/experiment.hpp"

namespace {

void export_dataset(const gfl::ExperimentConfig& config, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw gfl::ConfigError("cannot open dataset export file '" + path + "'");
  }
  gfl::export_csv(gfl::generate_synthetic(config.dataset), out);
  std::cout << "dataset written to " << path << "\n";
}

gfl::ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) {
    return gfl::ExperimentConfig{};
  }
  std::ifstream in(path);
  if (!in) {
    throw gfl::ConfigError("cannot open config file '" + path + "'");
  }
  std::ostringstream text;
  text << in.rdbuf();
  return gfl::parse_config(text.str());
}

int run_comparison_command(gfl::ExperimentConfig config) {
  gfl::validate_config(config);
  std::cout << "dataset: P=" << config.dataset.servers
            << " K=" << config.dataset.clients
            << " N=" << config.dataset.points_per_client
            << " M=" << config.dataset.dim << "\n";
  const gfl::ComparisonResult result = gfl::run_comparison(config);
  gfl::write_outputs(result, config);
  for (const gfl::SchemeSummary& s : result.summary) {
    std::cout << "scheme " << s.scheme << ": plateau " << s.plateau_msd_db
              << " dB";
    if (std::isfinite(s.gap_db_vs_none)) {
      std::cout << ", gap vs none " << s.gap_db_vs_none << " dB";
    }
    std::cout << ", diverged " << s.diverged_runs << "/" << config.repetitions
              << "\n";
  }
  std::cout << "outputs written to " << config.output_dir << "\n";
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string scheme_name;
  std::string dataset_path;
  bool svg = false;
  double sigma_g = -1.0;
  long iterations = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (defaults when omitted)");
    cmd->add_option("--out", out_dir, "output directory override");
    cmd->add_option("--sigma-g", sigma_g, "noise std override");
    cmd->add_option("--iterations", iterations, "iteration count override");
    cmd->add_option("--export-dataset", dataset_path,
                    "also write the generated dataset as CSV");
    cmd->add_flag("--svg", svg, "emit plot.svg next to the CSV");
  };

  CLI::App* run = app.add_subcommand("run", "run a single scheme");
  add_common(run);
  run->add_option("--scheme", scheme_name, "none | iid | hybrid");

  CLI::App* compare = app.add_subcommand("compare", "compare schemes");
  add_common(compare);

  CLI::App* budget = app.add_subcommand("budget", "privacy budget table");
  double b_mu = 0.1;
  double b_bound = 1.0;
  double b_sigma = 0.2;
  long b_imax = 100;
  std::string b_out;
  budget->add_option("--mu", b_mu, "step size");
  budget->add_option("--gradient-bound", b_bound, "gradient norm bound B");
  budget->add_option("--sigma-g", b_sigma, "noise std");
  budget->add_option("--i-max", b_imax, "last iteration in the table");
  budget->add_option("--out", b_out, "output CSV path (stdout when omitted)");

  CLI::App* graph_check = app.add_subcommand("graph-check", "validate a graph");
  int gc_nodes = 10;
  std::string gc_graph = "random 0.5 1";
  graph_check->add_option("--nodes", gc_nodes, "server count")->required();
  graph_check->add_option("--graph", gc_graph,
                          "ring | complete | random <p> [seed] | edges m-p ...")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed() || compare->parsed()) {
      gfl::ExperimentConfig config = load_config(config_path);
      if (!out_dir.empty()) {
        config.output_dir = out_dir;
      }
      if (svg) {
        config.emit_svg = true;
      }
      if (sigma_g > 0.0) {
        config.sigma_g = sigma_g;
      }
      if (iterations >= 0) {
        config.engine.iterations = iterations;
      }
      if (run->parsed()) {
        if (!scheme_name.empty()) {
          config.schemes = {scheme_name};
        } else {
          config.schemes = {config.schemes.front()};
        }
      }
      if (!dataset_path.empty()) {
        export_dataset(config, dataset_path);
      }
      return run_comparison_command(std::move(config));
    }
    if (budget->parsed()) {
      if (b_out.empty()) {
        gfl::emit_budget_table(b_mu, b_bound, b_sigma, b_imax, std::cout);
      } else {
        std::ofstream out(b_out, std::ios::binary);
        if (!out) {
          throw gfl::ConfigError("cannot open output file '" + b_out + "'");
        }
        gfl::emit_budget_table(b_mu, b_bound, b_sigma, b_imax, out);
        std::cout << "budget table written to " << b_out << "\n";
      }
      return 0;
    }
    if (graph_check->parsed()) {
      const gfl::GraphSpec spec = gfl::GraphSpec::parse(gc_graph, gc_nodes);
      if (const auto bad = spec.unreachable_node()) {
        std::cerr << "graph is disconnected: node " << *bad
                  << " is unreachable from node 0\n";
        return 1;
      }
      const gfl::CombinationMatrix A = gfl::build_combination_matrix(spec);
      const gfl::ValidationReport report = gfl::validate(A);
      std::cout << report.to_text();
      std::cout << "lambda = " << report.lambda << "\n";
      return report.ok() ? 0 : 1;
    }
  } catch (const gfl::ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
