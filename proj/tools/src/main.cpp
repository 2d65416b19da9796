#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "uqlens/analysis.hpp"
#include "uqlens/errors.hpp"
#include "uqlens/format.hpp"
#include "uqlens/gate.hpp"
#include "uqlens/model.hpp"
#include "uqlens/sampling.hpp"
#include "uqlens/study.hpp"

namespace {

using uqlens::AnalysisConfig;
using uqlens::ConfigError;
using uqlens::EvalError;
using uqlens::EvalPoint;
using uqlens::ModelKind;
using uqlens::ModelSpec;

struct AnalysisFlags {
  double sigma_pert = 0.3;
  double kernel_sigma = 0.75;
  int samples = 200;
  int replicates = 25;  // serves both the conformal draw and the refit ensemble
  int topk = 2;
  std::uint64_t seed = 0;

  AnalysisConfig to_config() const {
    AnalysisConfig cfg;
    cfg.sigma_pert = sigma_pert;
    cfg.kernel_sigma = kernel_sigma;
    cfg.surrogate_samples = samples;
    cfg.conformal_samples = replicates;
    cfg.replicates = replicates;
    cfg.topk = topk;
    cfg.seed = seed;
    return cfg;
  }
};

struct ModelFlags {
  std::string model;
  int dim = 0;                  // 0: kind-specific default
  std::uint64_t model_seed = 0;
  bool dim_set = false;
  bool model_seed_set = false;
};

void add_model_flags(CLI::App& cmd, ModelFlags& flags) {
  cmd.add_option("--model", flags.model, "Built-in model name or model spec JSON file")
      ->required();
  cmd.add_option("--dim", flags.dim, "Feature dimension for built-in models")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--model-seed", flags.model_seed,
                 "Seed for sampled built-in model parameters (0 keeps canonical defaults)");
}

void add_analysis_flags(CLI::App& cmd, AnalysisFlags& flags) {
  cmd.add_option("--sigma-pert", flags.sigma_pert, "Perturbation standard deviation")
      ->capture_default_str();
  cmd.add_option("--kernel-sigma", flags.kernel_sigma, "Gaussian kernel width for fit weights")
      ->capture_default_str();
  cmd.add_option("--samples", flags.samples, "Samples per surrogate fit")
      ->capture_default_str();
  cmd.add_option("--replicates", flags.replicates,
                 "Perturbations for dispersion stats and refit replicates")
      ->capture_default_str();
  cmd.add_option("--topk", flags.topk, "Top-k set size for the overlap metric")
      ->capture_default_str();
}

int default_dimension(ModelKind kind) {
  switch (kind) {
    case ModelKind::wavelike: return 4;
    case ModelKind::radial: return 4;
    case ModelKind::sigmoid_network: return 4;
    case ModelKind::piecewise_linear: return 3;
    case ModelKind::linear: return 4;
    case ModelKind::external: return 0;
  }
  return 0;
}

nlohmann::json load_json_file(const std::string& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(what + " file '" + path + "': cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(what + " file '" + path + "': " + e.what());
  }
}

ModelSpec resolve_model(const ModelFlags& flags) {
  std::optional<ModelKind> kind;
  try {
    kind = uqlens::model_kind_from_string(flags.model);
  } catch (const ConfigError&) {
    kind.reset();  // not a builtin name: treat as a spec file
  }

  if (kind.has_value()) {
    if (*kind == ModelKind::external) {
      throw ConfigError("external models need a spec file with params.command");
    }
    const int dim = flags.dim_set ? flags.dim : default_dimension(*kind);
    return ModelSpec::builtin(*kind, dim, flags.model_seed);
  }

  if (flags.dim_set || flags.model_seed_set) {
    throw ConfigError("--dim/--model-seed apply to built-in model names, not spec files");
  }
  return ModelSpec::from_json(load_json_file(flags.model, "model"));
}

std::vector<double> parse_csv_row(const std::string& line, const std::string& where) {
  std::vector<double> out;
  std::string token;
  std::stringstream stream(line);
  while (std::getline(stream, token, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      while (used < token.size() && std::isspace(static_cast<unsigned char>(token[used]))) ++used;
      if (used != token.size()) throw std::invalid_argument(token);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(where + ": malformed number '" + token + "'");
    }
  }
  if (out.empty()) throw ConfigError(where + ": empty row");
  return out;
}

std::vector<EvalPoint> load_points_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("points file '" + path + "': cannot open");
  std::vector<EvalPoint> points;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    points.push_back(EvalPoint(
        parse_csv_row(line, "points file '" + path + "' line " + std::to_string(lineno))));
  }
  return points;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  out << content;
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

void emit_document(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
  } else {
    write_text(out_path, content);
  }
}

int cmd_analyze(const ModelFlags& model_flags, const AnalysisFlags& analysis_flags,
                const std::string& point_csv, const std::string& out_path) {
  const ModelSpec spec = resolve_model(model_flags);
  const std::unique_ptr<uqlens::Model> model = uqlens::make_model(spec);
  const EvalPoint point(parse_csv_row(point_csv, "--point"));

  const uqlens::PointAnalysis analysis =
      uqlens::analyze_point(*model, point, analysis_flags.to_config());

  nlohmann::json doc = analysis.to_json();
  doc["model"] = spec.to_json();
  emit_document(out_path, doc.dump(2) + "\n");
  return 0;
}

int cmd_study(const ModelFlags& model_flags, const AnalysisFlags& analysis_flags, int points,
              int threads, double log_floor, std::uint64_t seed, const std::string& out_dir) {
  uqlens::StudyConfig cfg;
  cfg.model = resolve_model(model_flags);
  cfg.n_points = points;
  cfg.analysis = analysis_flags.to_config();
  cfg.seed = seed;
  cfg.log_floor = log_floor;
  cfg.threads = threads;
  cfg.validate();

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out_dir + "': " + ec.message());

  const uqlens::StudyResult result = uqlens::run_study(cfg);

  const auto in_dir = [&out_dir](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  uqlens::write_per_point_csv(result, in_dir("per_point.csv"));
  uqlens::write_correlations_csv(result, in_dir("correlations.csv"));
  uqlens::write_fits_json(result, in_dir("fits.json"));
  uqlens::emit_scatter(result, "local_linear_rmse", "hessian_mag",
                       in_dir("scatter_local_linear_rmse_hessian_mag.csv"));
  uqlens::emit_scatter(result, "conformal_sd", "lipschitz",
                       in_dir("scatter_conformal_sd_lipschitz.csv"));

  // Human-facing summary; the files carry the full-precision values.
  std::ostringstream table;
  table << "correlations (" << result.per_point.size() << " of " << result.requested_points
        << " points";
  if (result.hessian_degenerate_points > 0) {
    table << ", " << result.hessian_degenerate_points << " hessian-degenerate";
  }
  table << ")\n";
  const auto& names = result.correlations.metrics;
  table << "  " << std::left << std::setw(24) << "metric" << std::right;
  for (const std::string& name : names) table << std::setw(23) << name;
  table << '\n';
  table << std::fixed << std::setprecision(4);
  for (Eigen::Index a = 0; a < result.correlations.values.rows(); ++a) {
    table << "  " << std::left << std::setw(24) << names[static_cast<std::size_t>(a)]
          << std::right;
    for (Eigen::Index b = 0; b < result.correlations.values.cols(); ++b) {
      table << std::setw(23) << result.correlations.values(a, b);
    }
    table << '\n';
  }
  for (const uqlens::LogLinearFit& fit : result.fits) {
    table << "fit " << fit.y_metric << " ~ log(" << fit.x_metric << "): alpha=" << fit.alpha
          << " beta=" << fit.beta << " r_squared=" << fit.r_squared << '\n';
  }
  std::cout << table.str();
  return 0;
}

int cmd_gate(const ModelFlags& model_flags, const AnalysisFlags& analysis_flags,
             const std::string& policy_path, const std::string& fallback_path,
             const std::string& input_path, const std::string& out_path) {
  const ModelSpec spec = resolve_model(model_flags);
  const std::unique_ptr<uqlens::Model> model = uqlens::make_model(spec);
  const uqlens::GatePolicy policy =
      uqlens::GatePolicy::from_json(load_json_file(policy_path, "policy"));
  const uqlens::FallbackModel fallback =
      uqlens::FallbackModel::from_json(load_json_file(fallback_path, "fallback"));
  const std::vector<EvalPoint> points = load_points_file(input_path);

  std::string lines;
  std::size_t fallback_count = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    AnalysisConfig cfg = analysis_flags.to_config();
    cfg.seed = uqlens::derive_seed(analysis_flags.seed, i);
    try {
      const uqlens::GateDecision decision =
          uqlens::decide(*model, fallback, policy, points[i], cfg);
      if (decision.source == uqlens::ForecastSource::fallback) ++fallback_count;
      lines += decision.to_json().dump();
      lines += '\n';
    } catch (const EvalError& e) {
      throw EvalError("gate: row " + std::to_string(i) + ": " + e.what(), i);
    } catch (const uqlens::DimensionError& e) {
      throw ConfigError("gate: row " + std::to_string(i) + ": " + e.what());
    }
  }
  emit_document(out_path, lines);

  if (points.empty()) {
    std::cerr << "gate: 0 decisions, fallback fraction n/a\n";
  } else {
    const double fraction =
        static_cast<double>(fallback_count) / static_cast<double>(points.size());
    std::cerr << "gate: " << points.size() << " decisions, " << fallback_count
              << " fallback (fraction " << std::fixed << std::setprecision(4) << fraction
              << ")\n";
  }
  return 0;
}

int cmd_map_regions(const ModelFlags& model_flags, const AnalysisFlags& analysis_flags,
                    const std::string& policy_path, const std::string& input_path,
                    const std::string& grid_spec, int grid_axis, const std::string& out_path) {
  const ModelSpec spec = resolve_model(model_flags);
  const std::unique_ptr<uqlens::Model> model = uqlens::make_model(spec);
  const uqlens::GatePolicy policy =
      uqlens::GatePolicy::from_json(load_json_file(policy_path, "policy"));

  std::vector<EvalPoint> probes;
  if (!input_path.empty()) {
    probes = load_points_file(input_path);
  } else {
    // lo:hi:count sweep along one axis, all other coordinates at the origin.
    const std::vector<double> parts = parse_csv_row(
        [&grid_spec] {
          std::string csv = grid_spec;
          std::replace(csv.begin(), csv.end(), ':', ',');
          return csv;
        }(),
        "--grid");
    if (parts.size() != 3) throw ConfigError("--grid: expected lo:hi:count");
    const double lo = parts[0];
    const double hi = parts[1];
    const int count = static_cast<int>(parts[2]);
    if (!(lo < hi)) throw ConfigError("--grid: lo must be < hi");
    if (count < 2 || static_cast<double>(count) != parts[2]) {
      throw ConfigError("--grid: count must be an integer >= 2");
    }
    if (grid_axis < 0 || grid_axis >= spec.dimension) {
      throw ConfigError("--axis: must lie in [0, " + std::to_string(spec.dimension - 1) + "]");
    }
    probes.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
      EvalPoint p;
      p.coords.assign(static_cast<std::size_t>(spec.dimension), 0.0);
      p.coords[static_cast<std::size_t>(grid_axis)] =
          lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
      probes.push_back(std::move(p));
    }
  }

  const uqlens::RegionMap map =
      uqlens::map_unforecastable_region(*model, policy, probes, analysis_flags.to_config());
  emit_document(out_path, map.to_json().dump(2) + "\n");
  std::cerr << "map-regions: " << map.probes.size() << " probes, " << map.failures.size()
            << " failures, " << map.exceed_count << " exceedances (fraction " << std::fixed
            << std::setprecision(4) << map.exceed_fraction << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pointwise forecast-uncertainty and explanation-stability diagnostics"};
  app.require_subcommand(1);

  ModelFlags model_flags;
  AnalysisFlags analysis_flags;
  std::string point_csv;
  std::string out_path;
  std::string policy_path;
  std::string fallback_path;
  std::string input_path;
  std::string grid_spec;
  int grid_axis = 0;
  int points = 200;
  int threads = 0;
  double log_floor = 1e-12;

  CLI::App* analyze = app.add_subcommand("analyze", "Full diagnosis of one evaluation point");
  CLI::App* study =
      app.add_subcommand("study", "Metric correlation study over random evaluation points");
  CLI::App* gate = app.add_subcommand("gate", "Uncertainty-gated forecasts for a batch of points");
  CLI::App* map_regions =
      app.add_subcommand("map-regions", "Sweep the gate metric to locate unforecastable regions");

  for (CLI::App* cmd : {analyze, study, gate, map_regions}) {
    add_model_flags(*cmd, model_flags);
    add_analysis_flags(*cmd, analysis_flags);
  }

  analyze->add_option("--point", point_csv, "Evaluation point as comma-separated floats")
      ->required();
  analyze->add_option("--seed", analysis_flags.seed, "Base seed for all random draws")
      ->capture_default_str();
  analyze->add_option("--out", out_path, "Output file (default: stdout)");

  study->add_option("--points", points, "Number of random evaluation points")
      ->capture_default_str();
  study->add_option("--seed", analysis_flags.seed, "Study seed (required; no wall-clock seeding)")
      ->required();
  study->add_option("--threads", threads, "Worker cap, 0 = hardware concurrency")
      ->capture_default_str();
  study->add_option("--log-floor", log_floor, "Floor applied before logarithms")
      ->capture_default_str();
  study->add_option("--out", out_path, "Output directory")->capture_default_str();

  gate->add_option("--policy", policy_path, "Gate policy JSON file")->required();
  gate->add_option("--fallback", fallback_path, "Fallback model JSON file")->required();
  gate->add_option("--input", input_path, "Points file, one CSV row per line")->required();
  gate->add_option("--seed", analysis_flags.seed, "Base seed for all random draws")
      ->capture_default_str();
  gate->add_option("--out", out_path, "Decisions JSONL file (default: stdout)");

  map_regions->add_option("--policy", policy_path, "Gate policy JSON file")->required();
  map_regions->add_option("--input", input_path, "Probe points file, one CSV row per line");
  map_regions->add_option("--grid", grid_spec, "Probe sweep as lo:hi:count along --axis");
  map_regions->add_option("--axis", grid_axis, "Swept axis for --grid")->capture_default_str();
  map_regions->add_option("--seed", analysis_flags.seed, "Base seed for all random draws")
      ->capture_default_str();
  map_regions->add_option("--out", out_path, "Region map JSON file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  model_flags.dim_set = app.get_subcommands().front()->count("--dim") > 0;
  model_flags.model_seed_set = app.get_subcommands().front()->count("--model-seed") > 0;
  if (out_path.empty() && study->parsed()) out_path = ".";

  try {
    if (analyze->parsed()) {
      return cmd_analyze(model_flags, analysis_flags, point_csv, out_path);
    }
    if (study->parsed()) {
      return cmd_study(model_flags, analysis_flags, points, threads, log_floor,
                       analysis_flags.seed, out_path);
    }
    if (gate->parsed()) {
      return cmd_gate(model_flags, analysis_flags, policy_path, fallback_path, input_path,
                      out_path);
    }
    if (map_regions->parsed()) {
      if (input_path.empty() == grid_spec.empty()) {
        throw ConfigError("map-regions needs exactly one of --input or --grid");
      }
      return cmd_map_regions(model_flags, analysis_flags, policy_path, input_path, grid_spec,
                             grid_axis, out_path);
    }
    throw ConfigError("no subcommand given");
  } catch (const uqlens::StudyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const EvalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const uqlens::DegenerateError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
}
