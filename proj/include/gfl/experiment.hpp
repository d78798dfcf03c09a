#pragma once

// End-to-end experiment harness: config file handling, the scheme-comparison
// runner, and the CSV / summary / SVG outputs.
//
// A comparison generates one dataset, solves for the global optimum once,
// then runs R seeded repetitions per scheme.  Repetition r uses the same
// engine seed across schemes, so client and batch sampling match exactly and
// curves differ only through the privatization noise.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfl/combination.hpp"
#include "gfl/dataset.hpp"
#include "gfl/engine.hpp"
#include "gfl/graph.hpp"
#include "gfl/logistic.hpp"
#include "gfl/metrics.hpp"
#include "gfl/privacy.hpp"

namespace gfl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  DatasetParams dataset;
  std::string graph = "random 0.5 1";  // node count comes from dataset.servers
  EngineConfig engine;                 // scheme field is driven by `schemes`
  std::vector<std::string> schemes = {"none", "iid", "hybrid"};
  double sigma_g = 0.2;
  int repetitions = 10;
  int plateau_window = 200;
  std::string output_dir = "results";
  bool emit_svg = false;

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

struct ConfigLine {
  std::string section;
  std::string key;
  std::string value;
  std::size_t number = 0;
};

inline std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
    ++b;
  }
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
    --e;
  }
  return s.substr(b, e - b);
}

inline std::vector<ConfigLine> tokenize_config(const std::string& text) {
  std::vector<ConfigLine> lines;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') {
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(number) +
                          ": unterminated section header '" + line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) +
                        ": expected 'key = value', got '" + line + "'");
    }
    lines.push_back({section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)),
                     number});
  }
  return lines;
}

inline double parse_number(const ConfigLine& line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(line.value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != line.value.size() || line.value.empty()) {
    throw ConfigError("line " + std::to_string(line.number) + ": value for '" +
                      line.key + "' is not a number: '" + line.value + "'");
  }
  return v;
}

inline long parse_integer(const ConfigLine& line) {
  const double v = parse_number(line);
  const long i = static_cast<long>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError("line " + std::to_string(line.number) + ": value for '" +
                      line.key + "' must be an integer");
  }
  return i;
}

inline bool parse_bool(const ConfigLine& line) {
  if (line.value == "true" || line.value == "1") {
    return true;
  }
  if (line.value == "false" || line.value == "0") {
    return false;
  }
  throw ConfigError("line " + std::to_string(line.number) + ": value for '" +
                    line.key + "' must be true or false");
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  for (const detail::ConfigLine& line : detail::tokenize_config(text)) {
    const std::string scoped = line.section + "." + line.key;
    if (scoped == "dataset.servers") {
      c.dataset.servers = static_cast<int>(detail::parse_integer(line));
    } else if (scoped == "dataset.clients") {
      c.dataset.clients = static_cast<int>(detail::parse_integer(line));
    } else if (scoped == "dataset.points") {
      c.dataset.points_per_client = static_cast<int>(detail::parse_integer(line));
    } else if (scoped == "dataset.dim") {
      c.dataset.dim = static_cast<int>(detail::parse_integer(line));
    } else if (scoped == "dataset.sigma_min") {
      c.dataset.sigma_min = detail::parse_number(line);
    } else if (scoped == "dataset.sigma_max") {
      c.dataset.sigma_max = detail::parse_number(line);
    } else if (scoped == "dataset.seed") {
      c.dataset.seed = static_cast<std::uint64_t>(detail::parse_integer(line));
    } else if (scoped == "graph.spec") {
      c.graph = line.value;
    } else if (scoped == "engine.mu") {
      c.engine.step_size = detail::parse_number(line);
    } else if (scoped == "engine.rho") {
      c.engine.regularization = detail::parse_number(line);
    } else if (scoped == "engine.clients_per_round") {
      c.engine.sampled_clients = static_cast<int>(detail::parse_integer(line));
    } else if (scoped == "engine.batch_size") {
      c.engine.batch_size = static_cast<int>(detail::parse_integer(line));
    } else if (scoped == "engine.iterations") {
      c.engine.iterations = detail::parse_integer(line);
    } else if (scoped == "engine.seed") {
      c.engine.seed = static_cast<std::uint64_t>(detail::parse_integer(line));
    } else if (scoped == "engine.mask_scale") {
      c.engine.mask_scale = detail::parse_number(line);
    } else if (scoped == "experiment.schemes") {
      c.schemes.clear();
      std::istringstream in(line.value);
      std::string name;
      while (in >> name) {
        c.schemes.push_back(name);
      }
      if (c.schemes.empty()) {
        throw ConfigError("line " + std::to_string(line.number) +
                          ": 'schemes' must list at least one scheme");
      }
    } else if (scoped == "experiment.sigma_g") {
      c.sigma_g = detail::parse_number(line);
    } else if (scoped == "experiment.repetitions") {
      c.repetitions = static_cast<int>(detail::parse_integer(line));
    } else if (scoped == "experiment.plateau_window") {
      c.plateau_window = static_cast<int>(detail::parse_integer(line));
    } else if (scoped == "experiment.output_dir") {
      c.output_dir = line.value;
    } else if (scoped == "experiment.emit_svg") {
      c.emit_svg = detail::parse_bool(line);
    } else {
      throw ConfigError("line " + std::to_string(line.number) +
                        ": unknown key '" + line.key + "' in section [" +
                        line.section + "]");
    }
  }
  return c;
}

inline void validate_config(const ExperimentConfig& c) {
  const auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config field " + field + ": " + why);
  };
  if (c.dataset.servers < 1) fail("dataset.servers", "must be >= 1");
  if (c.dataset.clients < 1) fail("dataset.clients", "must be >= 1");
  if (c.dataset.points_per_client < 1) fail("dataset.points", "must be >= 1");
  if (c.dataset.dim < 1) fail("dataset.dim", "must be >= 1");
  if (c.dataset.sigma_min < 0.0 || c.dataset.sigma_max < c.dataset.sigma_min) {
    fail("dataset.sigma_min/sigma_max", "need 0 <= sigma_min <= sigma_max");
  }
  if (!(c.engine.step_size > 0.0)) fail("engine.mu", "must be > 0");
  if (!(c.engine.regularization > 0.0)) fail("engine.rho", "must be > 0");
  if (c.engine.sampled_clients < 0 || c.engine.sampled_clients > c.dataset.clients) {
    fail("engine.clients_per_round",
         "L = " + std::to_string(c.engine.sampled_clients) +
             " violates L <= K = " + std::to_string(c.dataset.clients));
  }
  if (c.engine.batch_size < 1 ||
      c.engine.batch_size > c.dataset.points_per_client) {
    fail("engine.batch_size", "must be in [1, points per client]");
  }
  if (c.engine.iterations < 0) fail("engine.iterations", "must be >= 0");
  if (!(c.engine.mask_scale >= 0.0)) fail("engine.mask_scale", "must be >= 0");
  if (c.repetitions < 1) fail("experiment.repetitions", "must be >= 1");
  if (c.plateau_window < 1) fail("experiment.plateau_window", "must be >= 1");
  if (c.schemes.empty()) fail("experiment.schemes", "must list at least one scheme");
  for (std::size_t i = 0; i < c.schemes.size(); ++i) {
    const std::string& s = c.schemes[i];
    if (s != "none" && s != "iid" && s != "hybrid") {
      fail("experiment.schemes", "unknown scheme '" + s + "'");
    }
    if (s != "none" && !(c.sigma_g > 0.0)) {
      fail("experiment.sigma_g", "must be > 0 for scheme '" + s + "'");
    }
    for (std::size_t j = i + 1; j < c.schemes.size(); ++j) {
      if (c.schemes[j] == s) {
        fail("experiment.schemes", "scheme '" + s + "' listed twice");
      }
    }
  }
  GraphSpec::parse(c.graph, c.dataset.servers);  // throws on bad graph text
}

inline std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "[dataset]\n"
      << "servers = " << c.dataset.servers << '\n'
      << "clients = " << c.dataset.clients << '\n'
      << "points = " << c.dataset.points_per_client << '\n'
      << "dim = " << c.dataset.dim << '\n'
      << "sigma_min = " << detail::format_double(c.dataset.sigma_min) << '\n'
      << "sigma_max = " << detail::format_double(c.dataset.sigma_max) << '\n'
      << "seed = " << c.dataset.seed << '\n'
      << '\n'
      << "[graph]\n"
      << "spec = " << c.graph << '\n'
      << '\n'
      << "[engine]\n"
      << "mu = " << detail::format_double(c.engine.step_size) << '\n'
      << "rho = " << detail::format_double(c.engine.regularization) << '\n'
      << "clients_per_round = " << c.engine.sampled_clients << '\n'
      << "batch_size = " << c.engine.batch_size << '\n'
      << "iterations = " << c.engine.iterations << '\n'
      << "seed = " << c.engine.seed << '\n'
      << "mask_scale = " << detail::format_double(c.engine.mask_scale) << '\n'
      << '\n'
      << "[experiment]\n"
      << "schemes =";
  for (const std::string& s : c.schemes) {
    out << ' ' << s;
  }
  out << '\n'
      << "sigma_g = " << detail::format_double(c.sigma_g) << '\n'
      << "repetitions = " << c.repetitions << '\n'
      << "plateau_window = " << c.plateau_window << '\n'
      << "output_dir = " << c.output_dir << '\n'
      << "emit_svg = " << (c.emit_svg ? "true" : "false") << '\n';
  return out.str();
}

struct SchemeSummary {
  std::string scheme;
  double plateau_msd_db = 0.0;
  double gap_db_vs_none = 0.0;
  int diverged_runs = 0;
  int completed_runs = 0;
};

struct ComparisonResult {
  GlobalOptimum optimum;
  TheoryConstants constants;
  double gradient_noise_var = 0.0;
  double spectral_gap = 0.0;
  std::vector<std::string> schemes;
  std::map<std::string, std::vector<Trajectory>> runs;
  std::vector<SchemeSummary> summary;
  int exit_code = 0;  // 0 clean, 2 completed with divergences
};

inline std::uint64_t repetition_seed(std::uint64_t base_seed, int repetition) {
  RngStream rng(base_seed, Stream::repetition,
                static_cast<std::uint64_t>(repetition));
  return rng.next_u64();
}

// Mean mse per iteration across completed runs; empty when every run diverged.
inline std::vector<double> mean_mse_series(const std::vector<Trajectory>& runs) {
  std::size_t length = 0;
  std::size_t completed = 0;
  for (const Trajectory& t : runs) {
    if (!t.diverged) {
      length = t.rows.size();
      ++completed;
    }
  }
  if (completed == 0) {
    return {};
  }
  std::vector<double> mean(length, 0.0);
  for (const Trajectory& t : runs) {
    if (t.diverged) {
      continue;
    }
    for (std::size_t i = 0; i < length; ++i) {
      mean[i] += t.rows[i].mse;
    }
  }
  for (double& v : mean) {
    v /= static_cast<double>(completed);
  }
  return mean;
}

inline ComparisonResult run_comparison(const ExperimentConfig& config) {
  validate_config(config);

  const FederatedDataset data = generate_synthetic(config.dataset);
  const GraphSpec graph = GraphSpec::parse(config.graph, config.dataset.servers);
  const CombinationMatrix A = build_combination_matrix(graph);

  ComparisonResult result;
  result.spectral_gap = A.lambda;
  result.optimum = compute_global_optimum(data, config.engine.regularization);
  result.constants =
      estimate_theory_constants(data, config.engine.regularization);
  result.gradient_noise_var = gradient_noise_variance(
      data, result.optimum.model, config.engine.regularization);
  result.schemes = config.schemes;

  for (const std::string& name : config.schemes) {
    EngineConfig engine = config.engine;
    engine.scheme = PrivacyScheme::parse(name, config.sigma_g);
    std::vector<Trajectory>& trajectories = result.runs[name];
    trajectories.reserve(static_cast<std::size_t>(config.repetitions));
    for (int rep = 0; rep < config.repetitions; ++rep) {
      engine.seed = repetition_seed(config.engine.seed, rep);
      trajectories.push_back(
          run_experiment(data, A, engine, result.optimum, rep));
    }
  }

  std::optional<double> none_plateau;
  for (const std::string& name : config.schemes) {
    const std::vector<Trajectory>& trajectories = result.runs[name];
    SchemeSummary s;
    s.scheme = name;
    for (const Trajectory& t : trajectories) {
      if (t.diverged) {
        ++s.diverged_runs;
      } else {
        ++s.completed_runs;
      }
    }
    const std::vector<double> mean = mean_mse_series(trajectories);
    if (!mean.empty()) {
      const int window =
          std::min<int>(config.plateau_window, static_cast<int>(mean.size()));
      s.plateau_msd_db = steady_state_msd(mean, window);
    } else {
      s.plateau_msd_db = std::numeric_limits<double>::quiet_NaN();
    }
    if (name == "none" && !mean.empty()) {
      none_plateau = s.plateau_msd_db;
    }
    result.summary.push_back(s);
    if (s.diverged_runs > 0) {
      result.exit_code = 2;
    }
  }
  for (SchemeSummary& s : result.summary) {
    s.gap_db_vs_none = none_plateau.has_value()
                           ? s.plateau_msd_db - *none_plateau
                           : std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

// --- file outputs ----------------------------------------------------------

inline void write_trajectory_csv(const ComparisonResult& result,
                                 std::ostream& out) {
  out << "scheme,run,iteration,mse,msd_db,disagreement\n";
  for (const std::string& name : result.schemes) {
    for (const Trajectory& t : result.runs.at(name)) {
      for (const MetricsRow& row : t.rows) {
        out << row.scheme << ',' << row.run << ',' << row.iteration << ','
            << detail::format_double(row.mse) << ','
            << detail::format_double(row.msd_db) << ','
            << detail::format_double(row.disagreement) << '\n';
      }
    }
  }
}

inline void write_summary(const ComparisonResult& result,
                          const ExperimentConfig& config, std::ostream& out) {
  out << "# comparison summary\n";
  out << "optimum_residual = "
      << detail::format_double(result.optimum.residual_gradient_norm) << '\n';
  out << "optimum_iterations = " << result.optimum.iterations << '\n';
  out << "strong_convexity = "
      << detail::format_double(result.constants.strong_convexity) << '\n';
  out << "smoothness = " << detail::format_double(result.constants.smoothness)
      << '\n';
  out << "gradient_bound = "
      << detail::format_double(result.constants.gradient_bound) << '\n';
  out << "gradient_noise_var = "
      << detail::format_double(result.gradient_noise_var) << '\n';
  out << "spectral_gap = " << detail::format_double(result.spectral_gap) << '\n';
  out << "repetitions = " << config.repetitions << '\n';
  for (const SchemeSummary& s : result.summary) {
    out << "[scheme " << s.scheme << "]\n";
    out << "plateau_msd_db = " << detail::format_double(s.plateau_msd_db) << '\n';
    out << "gap_db_vs_none = " << detail::format_double(s.gap_db_vs_none) << '\n';
    out << "completed_runs = " << s.completed_runs << '\n';
    out << "diverged_runs = " << s.diverged_runs << '\n';
  }
}

// Budget table rows (i, Delta(i), eps(i)) for i = 0..i_max.
inline void emit_budget_table(double step_size, double gradient_bound,
                              double sigma_g, std::int64_t i_max,
                              std::ostream& out) {
  if (!(step_size > 0.0) || !(gradient_bound > 0.0) || !(sigma_g > 0.0) ||
      i_max < 0) {
    throw std::invalid_argument("emit_budget_table: inputs must be positive");
  }
  out << "i,delta,epsilon\n";
  for (std::int64_t i = 0; i <= i_max; ++i) {
    out << i << ','
        << detail::format_double(sensitivity(step_size, gradient_bound, i)) << ','
        << detail::format_double(epsilon_at(step_size, gradient_bound, sigma_g, i))
        << '\n';
  }
}

// Minimal line chart: iteration vs mean MSD (dB), one polyline per scheme.
inline void write_svg_plot(const ComparisonResult& result, std::ostream& out) {
  constexpr double width = 860.0;
  constexpr double height = 520.0;
  constexpr double left = 70.0;
  constexpr double right = 20.0;
  constexpr double top = 20.0;
  constexpr double bottom = 50.0;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  std::map<std::string, std::vector<double>> series;
  double min_db = 0.0;
  double max_db = -200.0;
  std::size_t max_len = 1;
  for (const std::string& name : result.schemes) {
    std::vector<double> mean = mean_mse_series(result.runs.at(name));
    std::vector<double> db;
    db.reserve(mean.size());
    for (double v : mean) {
      const double d = to_db(v);
      db.push_back(d);
      if (std::isfinite(d)) {
        min_db = std::min(min_db, d);
        max_db = std::max(max_db, d);
      }
    }
    max_len = std::max(max_len, db.size());
    series[name] = std::move(db);
  }
  if (max_db <= min_db) {
    max_db = min_db + 1.0;
  }
  const double x_span = static_cast<double>(max_len > 1 ? max_len - 1 : 1);
  const auto x_at = [&](std::size_t i) {
    return left + (width - left - right) * static_cast<double>(i) / x_span;
  };
  const auto y_at = [&](double db) {
    return top + (height - top - bottom) * (max_db - db) / (max_db - min_db);
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\""
      << width - right << "\" y2=\"" << height - bottom
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
      << "\" y2=\"" << height - bottom << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (left + width - right) / 2.0 << "\" y=\""
      << height - 12.0 << "\" text-anchor=\"middle\">iteration</text>\n";
  out << "<text x=\"18\" y=\"" << (top + height - bottom) / 2.0
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (top + height - bottom) / 2.0 << ")\">MSD (dB)</text>\n";

  int color = 0;
  double legend_y = top + 14.0;
  for (const std::string& name : result.schemes) {
    const std::vector<double>& db = series[name];
    out << "<polyline fill=\"none\" stroke=\"" << palette[color % 4]
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < db.size(); ++i) {
      if (!std::isfinite(db[i])) {
        continue;
      }
      out << x_at(i) << ',' << y_at(db[i]) << ' ';
    }
    out << "\"/>\n";
    out << "<text x=\"" << width - right - 130.0 << "\" y=\"" << legend_y
        << "\" fill=\"" << palette[color % 4] << "\">" << name << "</text>\n";
    legend_y += 16.0;
    ++color;
  }
  out << "</svg>\n";
}

// Writes trajectories.csv, summary.txt, config.ini, and optionally plot.svg
// into config.output_dir.
inline void write_outputs(const ComparisonResult& result,
                          const ExperimentConfig& config) {
  const std::filesystem::path dir(config.output_dir);
  std::filesystem::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) {
      throw std::runtime_error(std::string("cannot open output file ") + name);
    }
    return out;
  };
  {
    auto out = open("trajectories.csv");
    write_trajectory_csv(result, out);
  }
  {
    auto out = open("summary.txt");
    write_summary(result, config, out);
  }
  {
    auto out = open("config.ini");
    out << serialize_config(config);
  }
  if (config.emit_svg) {
    auto out = open("plot.svg");
    write_svg_plot(result, out);
  }
}

}  // namespace gfl
