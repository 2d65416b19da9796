#include "uqlens/study.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <thread>

#include "uqlens/errors.hpp"
#include "uqlens/format.hpp"
#include "uqlens/sampling.hpp"

namespace uqlens {

namespace {

constexpr std::uint64_t kCoordStream = 0;

bool is_hessian_metric(const std::string& name) { return name.rfind("hessian_", 0) == 0; }

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  return out;
}

// Rows usable for a metric pair: hessian columns skip degenerate points.
std::pair<std::vector<double>, std::vector<double>> paired_columns(
    const StudyResult& result, const std::string& x_metric, const std::string& y_metric) {
  const bool drop_degenerate = is_hessian_metric(x_metric) || is_hessian_metric(y_metric);
  std::vector<double> xs;
  std::vector<double> ys;
  xs.reserve(result.per_point.size());
  ys.reserve(result.per_point.size());
  for (const PointRecord& rec : result.per_point) {
    if (drop_degenerate && rec.analysis.instability.hessian_degenerate) continue;
    xs.push_back(point_metric(rec, x_metric, result.log_floor));
    ys.push_back(point_metric(rec, y_metric, result.log_floor));
  }
  return {std::move(xs), std::move(ys)};
}

// Throws like fit_log_linear; callers decide how to surface a degenerate fit.
LogLinearFit named_fit(const StudyResult& result, const std::string& x_metric,
                       const std::string& y_metric) {
  const auto [xs, ys] = paired_columns(result, x_metric, y_metric);
  LogLinearFit fit = fit_log_linear(xs, ys, result.log_floor);
  fit.x_metric = x_metric;
  fit.y_metric = y_metric;
  return fit;
}

void write_fit_object(std::ofstream& out, const LogLinearFit& fit, double log_floor,
                      const char* indent) {
  out << indent << "{\n";
  out << indent << "  \"x_metric\": \"" << fit.x_metric << "\",\n";
  out << indent << "  \"y_metric\": \"" << fit.y_metric << "\",\n";
  out << indent << "  \"alpha\": " << format_double(fit.alpha) << ",\n";
  out << indent << "  \"beta\": " << format_double(fit.beta) << ",\n";
  out << indent << "  \"r_squared\": " << format_double(fit.r_squared) << ",\n";
  out << indent << "  \"log_floor\": " << format_double(log_floor) << "\n";
  out << indent << "}";
}

}  // namespace

void StudyConfig::validate() const {
  if (n_points < 10) throw ConfigError("study needs at least 10 points");
  if (!(log_floor > 0.0)) throw ConfigError("log_floor must be > 0");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  const ModelSpec resolved = model.resolved();
  resolved.validate();
  AnalysisConfig per_point = analysis;
  per_point.seed = 0;
  per_point.validate(resolved.dimension);
}

double pearson_correlation(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ConfigError("correlation inputs differ in length");
  const std::size_t n = xs.size();
  if (n < 3) throw ConfigError("correlation needs at least 3 pairs, got " + std::to_string(n));

  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw DegenerateError("correlation undefined: non-finite input");
    }
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) {
    throw DegenerateError("correlation undefined: zero-variance series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

LogLinearFit fit_log_linear(std::span<const double> xs, std::span<const double> ys,
                            double log_floor) {
  if (xs.size() != ys.size()) throw ConfigError("fit inputs differ in length");
  if (xs.size() < 3) throw ConfigError("log-linear fit needs at least 3 points");
  if (!(log_floor > 0.0)) throw ConfigError("log_floor must be > 0");

  const std::size_t n = xs.size();
  std::vector<double> lx(n);
  for (std::size_t i = 0; i < n; ++i) lx[i] = std::log(std::max(xs[i], log_floor));

  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);

  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = lx[i] - mx;
    const double dy = ys[i] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }

  if (!(sxx > 0.0)) {
    throw DegenerateError("log-linear fit: regressor is constant after flooring");
  }

  LogLinearFit fit;
  fit.beta = sxy / sxx;
  fit.alpha = my - fit.beta * mx;

  if (syy > 0.0) {
    double ssres = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ys[i] - (fit.alpha + fit.beta * lx[i]);
      ssres += r * r;
    }
    fit.r_squared = std::clamp(1.0 - ssres / syy, 0.0, 1.0);
  }
  return fit;
}

const std::vector<std::string>& correlation_metric_names() {
  static const std::vector<std::string> names = {
      "lipschitz",   "jaccard_topk",    "hessian_mag",          "hessian_cpl",
      "hessian_overall", "conformal_sd", "log_local_linear_rmse"};
  return names;
}

double point_metric(const PointRecord& rec, const std::string& metric, double log_floor) {
  const InstabilityReport& ins = rec.analysis.instability;
  const UncertaintyReport& unc = rec.analysis.uncertainty;
  if (metric == "lipschitz" || metric == "lipschitz_fd_mean") return ins.lipschitz_fd_mean;
  if (metric == "lipschitz_fd_max") return ins.lipschitz_fd_max;
  if (metric == "lipschitz_surrogate") return ins.lipschitz_surrogate;
  if (metric == "jaccard_topk" || metric == "jaccard_avg") return ins.jaccard_avg;
  if (metric == "hessian_mag") return ins.hessian_mag;
  if (metric == "hessian_mag_stability") return ins.hessian_mag_stability;
  if (metric == "hessian_cpl") return ins.hessian_cpl;
  if (metric == "hessian_cpl_stability") return ins.hessian_cpl_stability;
  if (metric == "hessian_overall") return ins.hessian_overall;
  if (metric == "conformal_sd") return unc.conformal_sd;
  if (metric == "conformal_iqr") return unc.conformal_iqr;
  if (metric == "conformal_range") return unc.conformal_range;
  if (metric == "conformal_q05") return unc.conformal_q05;
  if (metric == "conformal_q95") return unc.conformal_q95;
  if (metric == "local_linear_rmse") return unc.local_linear_rmse;
  if (metric == "log_local_linear_rmse") {
    return std::log(std::max(unc.local_linear_rmse, log_floor));
  }
  throw ConfigError("unknown metric '" + metric + "'");
}

StudyResult run_study(const StudyConfig& cfg) {
  cfg.validate();
  const ModelSpec spec = cfg.model.resolved();
  const std::unique_ptr<Model> model = make_model(spec);
  const int dim = spec.dimension;
  const int n = cfg.n_points;

  // Coordinates and per-point seeds are fixed up front so the sweep result is
  // independent of the thread count.
  std::mt19937_64 coord_rng(derive_seed(cfg.seed, kCoordStream));
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  std::vector<EvalPoint> points(static_cast<std::size_t>(n));
  std::vector<AnalysisConfig> configs(static_cast<std::size_t>(n), cfg.analysis);
  for (int i = 0; i < n; ++i) {
    points[static_cast<std::size_t>(i)].coords.resize(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) {
      points[static_cast<std::size_t>(i)].coords[static_cast<std::size_t>(d)] =
          unit_normal(coord_rng);
    }
    configs[static_cast<std::size_t>(i)].seed =
        derive_seed(cfg.seed, static_cast<std::uint64_t>(i) + 1);
  }

  std::vector<std::optional<PointAnalysis>> analyses(static_cast<std::size_t>(n));
  std::vector<std::string> errors(static_cast<std::size_t>(n));

  unsigned int worker_count = cfg.threads > 0
                                  ? static_cast<unsigned int>(cfg.threads)
                                  : std::max(1u, std::thread::hardware_concurrency());
  worker_count = std::min<unsigned int>(worker_count, static_cast<unsigned int>(n));

  std::atomic<int> cursor{0};
  auto worker = [&]() {
    while (true) {
      const int i = cursor.fetch_add(1);
      if (i >= n) return;
      const std::size_t idx = static_cast<std::size_t>(i);
      try {
        analyses[idx] = analyze_point(*model, points[idx], configs[idx]);
      } catch (const Error& e) {
        errors[idx] = e.what();
      }
    }
  };

  if (worker_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(worker_count);
    for (unsigned int t = 0; t < worker_count; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  StudyResult result;
  result.requested_points = n;
  result.log_floor = cfg.log_floor;
  for (int i = 0; i < n; ++i) {
    const std::size_t idx = static_cast<std::size_t>(i);
    if (analyses[idx].has_value()) {
      result.per_point.push_back({i, std::move(*analyses[idx])});
      if (result.per_point.back().analysis.instability.hessian_degenerate) {
        ++result.hessian_degenerate_points;
      }
    } else {
      ++result.failed_points;
      result.failures.push_back("point " + std::to_string(i) + ": " + errors[idx]);
    }
  }

  if (result.failed_points * 10 > n) {
    std::string message = "study aborted: " + std::to_string(result.failed_points) + " of " +
                          std::to_string(n) + " points failed (limit 10%)";
    if (!result.failures.empty()) message += "; first failure: " + result.failures.front();
    throw StudyError(message);
  }

  const std::vector<std::string>& names = correlation_metric_names();
  const int k = static_cast<int>(names.size());
  result.correlations.metrics = names;
  result.correlations.values.resize(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) {
      const auto [xs, ys] =
          paired_columns(result, names[static_cast<std::size_t>(a)],
                         names[static_cast<std::size_t>(b)]);
      double r;
      try {
        r = pearson_correlation(xs, ys);
        if (a == b) r = 1.0;  // exact unit diagonal for non-degenerate columns
      } catch (const Error&) {
        r = std::numeric_limits<double>::quiet_NaN();
      }
      result.correlations.values(a, b) = r;
      result.correlations.values(b, a) = r;
    }
  }

  // A degenerate regressor (e.g. an exactly linear model pinning every RMSE to
  // the floor) simply drops that canonical fit.
  for (const auto& [x_metric, y_metric] :
       {std::pair<const char*, const char*>{"local_linear_rmse", "hessian_mag"},
        std::pair<const char*, const char*>{"conformal_sd", "lipschitz"}}) {
    try {
      result.fits.push_back(named_fit(result, x_metric, y_metric));
    } catch (const DegenerateError&) {
    } catch (const ConfigError&) {
    }
  }
  return result;
}

void emit_scatter(const StudyResult& result, const std::string& x_metric,
                  const std::string& y_metric, const std::string& path) {
  const auto [xs, ys] = paired_columns(result, x_metric, y_metric);

  std::ofstream out = open_output(path);
  out << x_metric << ',' << y_metric << '\n';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out << format_double(xs[i]) << ',' << format_double(ys[i]) << '\n';
  }
  if (!out) throw ConfigError("failed writing '" + path + "'");
  out.close();

  std::ofstream side = open_output(path + ".fit.json");
  side << "{\n";
  side << "  \"points\": " << xs.size() << ",\n";
  side << "  \"fit\": ";
  try {
    const LogLinearFit fit = named_fit(result, x_metric, y_metric);
    // Sidecar fit carries the same floor the study used for its log axis.
    write_fit_object(side, fit, result.log_floor, "  ");
  } catch (const DegenerateError&) {
    side << "null";
  } catch (const ConfigError&) {
    side << "null";
  }
  side << "\n}\n";
  if (!side) throw ConfigError("failed writing '" + path + ".fit.json'");
}

void write_per_point_csv(const StudyResult& result, const std::string& path) {
  std::ofstream out = open_output(path);

  int dim = 0;
  if (!result.per_point.empty()) dim = result.per_point.front().analysis.point.dimension();

  out << "index";
  for (int d = 0; d < dim; ++d) out << ",x" << d;
  out << ",local_linear_rmse,conformal_sd,conformal_iqr,conformal_range,conformal_q05"
         ",conformal_q95,lipschitz_surrogate,lipschitz_fd_mean,lipschitz_fd_max,jaccard_avg"
         ",hessian_mag,hessian_mag_stability,hessian_cpl,hessian_cpl_stability,hessian_overall"
         ",hessian_degenerate\n";

  for (const PointRecord& rec : result.per_point) {
    const UncertaintyReport& unc = rec.analysis.uncertainty;
    const InstabilityReport& ins = rec.analysis.instability;
    out << rec.index;
    for (double c : rec.analysis.point.coords) out << ',' << format_double(c);
    out << ',' << format_double(unc.local_linear_rmse) << ',' << format_double(unc.conformal_sd)
        << ',' << format_double(unc.conformal_iqr) << ',' << format_double(unc.conformal_range)
        << ',' << format_double(unc.conformal_q05) << ',' << format_double(unc.conformal_q95)
        << ',' << format_double(ins.lipschitz_surrogate) << ','
        << format_double(ins.lipschitz_fd_mean) << ',' << format_double(ins.lipschitz_fd_max)
        << ',' << format_double(ins.jaccard_avg) << ',' << format_double(ins.hessian_mag) << ','
        << format_double(ins.hessian_mag_stability) << ',' << format_double(ins.hessian_cpl)
        << ',' << format_double(ins.hessian_cpl_stability) << ','
        << format_double(ins.hessian_overall) << ',' << (ins.hessian_degenerate ? 1 : 0) << '\n';
  }
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

void write_correlations_csv(const StudyResult& result, const std::string& path) {
  std::ofstream out = open_output(path);
  out << "metric";
  for (const std::string& name : result.correlations.metrics) out << ',' << name;
  out << '\n';
  for (Eigen::Index a = 0; a < result.correlations.values.rows(); ++a) {
    out << result.correlations.metrics[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < result.correlations.values.cols(); ++b) {
      out << ',' << format_double(result.correlations.values(a, b));
    }
    out << '\n';
  }
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

void write_fits_json(const StudyResult& result, const std::string& path) {
  std::ofstream out = open_output(path);
  out << "{\n  \"fits\": [\n";
  for (std::size_t i = 0; i < result.fits.size(); ++i) {
    write_fit_object(out, result.fits[i], result.log_floor, "    ");
    out << (i + 1 < result.fits.size() ? ",\n" : "\n");
  }
  out << "  ]\n}\n";
  if (!out) throw ConfigError("failed writing '" + path + "'");
}

}  // namespace uqlens
