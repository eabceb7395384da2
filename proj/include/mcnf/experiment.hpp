#ifndef MCNF_EXPERIMENT_HPP
#define MCNF_EXPERIMENT_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mcnf/conformal.hpp"
#include "mcnf/dataset.hpp"
#include "mcnf/mcnf.hpp"
#include "mcnf/metrics.hpp"

namespace mcnf {

struct DatasetSpec {
  std::string name = "romano-mod";
  bool synthetic = true;
  SyntheticParams params = SyntheticParams::romano_mod();
  std::size_t n_points = 1000;
  std::string csv_path;
  std::string target_column;

  static DatasetSpec romano_original() {
    DatasetSpec s;
    s.name = "romano-og";
    s.params = SyntheticParams::romano_original();
    return s;
  }
  static DatasetSpec romano_mod() { return DatasetSpec{}; }
  static DatasetSpec outlier_study(double b, double gamma,
                                   double rate = 0.01) {
    DatasetSpec s;
    std::ostringstream nm;
    nm << "outlier-b" << b << "-g" << gamma;
    s.name = nm.str();
    s.params = SyntheticParams::romano_mod();
    s.params.b = b;
    s.params.gamma = gamma;
    s.params.u_bar = rate;
    return s;
  }
  static DatasetSpec csv(const std::string& path, const std::string& target,
                         const std::string& name) {
    DatasetSpec s;
    s.synthetic = false;
    s.csv_path = path;
    s.target_column = target;
    s.name = name;
    return s;
  }
};

struct ExperimentConfig {
  DatasetSpec dataset;
  std::vector<std::string> methods = {"dqr",  "mcqr", "mcd", "cqr",
                                      "mccp", "mcnf", "nf"};
  std::vector<std::uint64_t> seeds = {1,  2,  3,  4,  5,  6,  7,  8,  9,  10,
                                      11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
  double split_ratio = 0.8;
  QuantileNetConfig net;
  TrainConfig train;
  McnfConfig mcnf;
  ConformalConfig conformal;
  double alpha = 0.05;           // per-tail level for quantile intervals
  std::size_t n_resamples = 1000;  // MCD / MCQR dropout passes
  std::string out_dir;             // empty: keep results in memory only
};

inline Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed,
                            double split_ratio) {
  Dataset ds = spec.synthetic
                   ? generate_romano(spec.params, spec.n_points, seed)
                   : load_csv(spec.csv_path, spec.target_column);
  split_standardize(ds, split_ratio, seed);
  return ds;
}

// FNV-1a over the split index sets; asserted identical across methods.
inline std::uint64_t split_hash(const Dataset& ds) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::size_t v) {
    for (std::size_t i = 0; i < sizeof(v); ++i) {
      h = (h ^ ((v >> (8 * i)) & 0xff)) * 1099511628211ULL;
    }
  };
  for (std::size_t i : ds.train_idx) mix(i);
  mix(~std::size_t(0));
  for (std::size_t i : ds.test_idx) mix(i);
  return h;
}

namespace detail {

inline Interval sample_interval(std::vector<double> samples, double alpha) {
  std::sort(samples.begin(), samples.end());
  return {quantile_sorted(samples, alpha),
          quantile_sorted(samples, 1.0 - alpha),
          quantile_sorted(samples, 0.5)};
}

inline void atomic_write(const std::filesystem::path& path,
                         const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

// One seed's trained state: the base quantile net plus (optionally) the
// flow head, all sharing the same data partition.
struct SeedRun {
  Dataset ds;
  std::unique_ptr<QuantileNet> net;
  std::unique_ptr<McnfModel> model;  // null unless mcnf/nf requested
  std::uint64_t seed = 0;
  std::uint64_t partition_hash = 0;
};

inline bool wants(const std::vector<std::string>& methods,
                  const std::string& m) {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

inline SeedRun train_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedRun run;
  run.seed = seed;
  run.ds = make_dataset(cfg.dataset, seed, cfg.split_ratio);
  run.partition_hash = split_hash(run.ds);
  run.net = std::make_unique<QuantileNet>(run.ds.dim(), cfg.net, seed);
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  train(*run.net, run.ds, tc);
  if (wants(cfg.methods, "mcnf") || wants(cfg.methods, "nf")) {
    FlowConfig fc;
    fc.context_dim = 2 + run.net->proxy_width();
    run.model = std::make_unique<McnfModel>(*run.net, fc, cfg.mcnf, seed);
    const auto summaries =
        precompute_summaries(*run.net, run.ds, cfg.mcnf.n_mcd, seed);
    train_mcnf(*run.model, run.ds, summaries, seed);
  }
  return run;
}

// Evaluate one method on the partition held by `run`. Conformal methods
// evaluate on their post-calibration subset; the rest use the whole test set.
inline IntervalReport evaluate_method(const ExperimentConfig& cfg,
                                      SeedRun& run, const std::string& method) {
  if (split_hash(run.ds) != run.partition_hash)
    throw std::logic_error("evaluate_method: data partition changed underfoot");
  IntervalReport rep;
  rep.method = method;
  rep.seed = run.seed;
  const Dataset& ds = run.ds;
  QuantileNet& net = *run.net;
  auto push = [&](std::size_t i, const Interval& iv) {
    rep.points.push_back({ds.y[i], iv.lo, iv.hi, iv.median});
  };

  if (method == "dqr") {
    for (std::size_t i : ds.test_idx) {
      const auto q = net.predict_quantiles(ds.X.row_vec(i), false);
      push(i, {q[0], q[2], q[1]});
    }
  } else if (method == "mcqr") {
    for (std::size_t i : ds.test_idx)
      push(i, mcqr_intervals(net, ds.X.row_vec(i), cfg.n_resamples,
                             mix_seed(run.seed, 0x6e00 + i)));
  } else if (method == "mcd") {
    for (std::size_t i : ds.test_idx)
      push(i, mcd_predictive_intervals(net, ds.X.row_vec(i), cfg.n_resamples,
                                       cfg.alpha,
                                       mix_seed(run.seed, 0x6d00 + i)));
  } else if (method == "cqr") {
    const ConformalRun cr = run_cqr(net, ds, cfg.conformal, run.seed);
    for (std::size_t k = 0; k < cr.eval_idx.size(); ++k)
      push(cr.eval_idx[k], cr.intervals[k]);
  } else if (method == "mccp") {
    const ConformalRun cr =
        run_mccp(net, ds, cfg.conformal, cfg.n_resamples, run.seed);
    for (std::size_t k = 0; k < cr.eval_idx.size(); ++k)
      push(cr.eval_idx[k], cr.intervals[k]);
  } else if (method == "mcnf" || method == "nf") {
    if (!run.model) throw std::logic_error(method + ": flow head not trained");
    for (std::size_t i : ds.test_idx) {
      const std::uint64_t s = mix_seed(run.seed, 0x6f00 + i);
      auto samples = (method == "mcnf")
                         ? infer(*run.model, ds.X.row_vec(i),
                                 cfg.mcnf.n_nf, s)
                         : infer_nf_ablation(*run.model, ds.X.row_vec(i),
                                             cfg.mcnf.n_nf, s);
      push(i, detail::sample_interval(std::move(samples.y), cfg.alpha));
    }
  } else {
    throw std::invalid_argument("unknown method '" + method + "'");
  }
  return rep;
}

struct MethodAggregate {
  std::string method;
  std::size_t n_seeds = 0;
  // mean / sample std per metric over seeds
  double coverage_mean = 0, coverage_std = 0;
  double delta_mean = 0, delta_std = 0;
  double mae_mean = 0, mae_std = 0;
  double mae_q_mean = 0, mae_q_std = 0;
  std::vector<double> delta_v_mean;  // at delta_v_levels()
};

struct BenchmarkResult {
  ExperimentConfig config;
  // reports[s][m] aligns with config.seeds x config.methods
  std::vector<std::vector<IntervalReport>> reports;
  std::vector<MethodAggregate> aggregates;
  std::vector<std::string> errors;  // per-seed failures, benchmark continues

  const MethodAggregate& method(const std::string& m) const {
    for (const auto& a : aggregates)
      if (a.method == m) return a;
    throw std::out_of_range("no aggregate for method " + m);
  }
};

namespace detail {

inline void mean_std(const std::vector<double>& v, double& m, double& s) {
  m = mean(v);
  s = v.size() >= 2 ? std::sqrt(sample_variance(v)) : 0.0;
}

inline void write_reports(const ExperimentConfig& cfg,
                          const std::vector<IntervalReport>& reps,
                          std::uint64_t seed) {
  if (cfg.out_dir.empty()) return;
  for (const auto& r : reps) {
    const std::filesystem::path dir = std::filesystem::path(cfg.out_dir) /
                                      cfg.dataset.name / std::to_string(seed) /
                                      r.method;
    std::ostringstream csv, json;
    write_report_csv(r, csv);
    write_report_json(r, json);
    atomic_write(dir / "report.csv", csv.str());
    atomic_write(dir / "report.json", json.str());
  }
}

inline std::string summary_csv(const BenchmarkResult& res) {
  std::ostringstream os;
  os.precision(10);
  os << "dataset,method,n_seeds,coverage_mean,coverage_std,delta_mean,"
        "delta_std,mae_mean,mae_std,mae_q_mean,mae_q_std";
  for (double v : delta_v_levels()) os << ",delta_v" << v << "_mean";
  os << "\n";
  for (const auto& a : res.aggregates) {
    os << res.config.dataset.name << "," << a.method << "," << a.n_seeds << ","
       << a.coverage_mean << "," << a.coverage_std << "," << a.delta_mean
       << "," << a.delta_std << "," << a.mae_mean << "," << a.mae_std << ","
       << a.mae_q_mean << "," << a.mae_q_std;
    for (double v : a.delta_v_mean) os << "," << v;
    os << "\n";
  }
  return os.str();
}

}  // namespace detail

inline BenchmarkResult run_benchmark(const ExperimentConfig& cfg) {
  BenchmarkResult res;
  res.config = cfg;
  for (std::uint64_t seed : cfg.seeds) {
    try {
      SeedRun run = train_seed(cfg, seed);
      std::vector<IntervalReport> reps;
      for (const auto& m : cfg.methods)
        reps.push_back(evaluate_method(cfg, run, m));
      detail::write_reports(cfg, reps, seed);
      res.reports.push_back(std::move(reps));
    } catch (const std::exception& e) {
      res.errors.push_back("seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  if (res.reports.empty())
    throw std::runtime_error("run_benchmark: every seed failed; first error: " +
                             (res.errors.empty() ? "?" : res.errors.front()));

  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    MethodAggregate agg;
    agg.method = cfg.methods[m];
    std::vector<double> cov, dlt, maes, maeqs;
    std::vector<std::vector<double>> dvs;
    for (const auto& reps : res.reports) {
      const ReportSummary s = reps[m].summarize();
      cov.push_back(s.coverage);
      dlt.push_back(s.delta_median);
      maes.push_back(s.mae);
      maeqs.push_back(s.mae_q);
      dvs.push_back(s.delta_v);
    }
    agg.n_seeds = cov.size();
    detail::mean_std(cov, agg.coverage_mean, agg.coverage_std);
    detail::mean_std(dlt, agg.delta_mean, agg.delta_std);
    detail::mean_std(maes, agg.mae_mean, agg.mae_std);
    detail::mean_std(maeqs, agg.mae_q_mean, agg.mae_q_std);
    agg.delta_v_mean.assign(delta_v_levels().size(), 0.0);
    for (const auto& dv : dvs)
      for (std::size_t k = 0; k < dv.size(); ++k) agg.delta_v_mean[k] += dv[k];
    for (auto& v : agg.delta_v_mean) v /= double(dvs.size());
    res.aggregates.push_back(std::move(agg));
  }
  if (!cfg.out_dir.empty())
    detail::atomic_write(std::filesystem::path(cfg.out_dir) /
                             cfg.dataset.name / "summary.csv",
                         detail::summary_csv(res));
  return res;
}

enum class SweepAxis { epochs, n_nf, n_mcd, tau };

inline SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "epochs") return SweepAxis::epochs;
  if (s == "n_nf") return SweepAxis::n_nf;
  if (s == "n_mcd") return SweepAxis::n_mcd;
  if (s == "tau") return SweepAxis::tau;
  throw std::invalid_argument("unknown sweep axis '" + s +
                              "' (expected epochs|n_nf|n_mcd|tau)");
}

struct SweepResult {
  SweepAxis axis;
  std::vector<double> values;
  std::vector<BenchmarkResult> runs;  // one per value
};

inline ExperimentConfig apply_axis(ExperimentConfig cfg, SweepAxis axis,
                                   double value) {
  switch (axis) {
    case SweepAxis::epochs:
      cfg.mcnf.epochs = std::size_t(value);
      break;
    case SweepAxis::n_nf:
      cfg.mcnf.n_nf = std::size_t(value);
      break;
    case SweepAxis::n_mcd:
      cfg.mcnf.n_mcd = std::size_t(value);
      break;
    case SweepAxis::tau:
      cfg.mcnf.tau = value;
      break;
  }
  return cfg;
}

inline std::string sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::epochs: return "epochs";
    case SweepAxis::n_nf: return "n_nf";
    case SweepAxis::n_mcd: return "n_mcd";
    case SweepAxis::tau: return "tau";
  }
  return "?";
}

// One full benchmark per axis value; long-format CSV if out_dir is set.
inline SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis,
                             const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("run_sweep: no values");
  SweepResult res;
  res.axis = axis;
  res.values = values;
  for (double v : values) {
    ExperimentConfig cfg = apply_axis(base, axis, v);
    if (!cfg.out_dir.empty()) {
      std::ostringstream nm;
      nm << cfg.dataset.name << "-" << sweep_axis_name(axis) << v;
      cfg.dataset.name = nm.str();
    }
    res.runs.push_back(run_benchmark(cfg));
  }
  if (!base.out_dir.empty()) {
    std::ostringstream os;
    os.precision(10);
    os << "axis,value,dataset,method,coverage_mean,coverage_std,delta_mean,"
          "mae_mean,mae_q_mean\n";
    for (std::size_t k = 0; k < values.size(); ++k)
      for (const auto& a : res.runs[k].aggregates)
        os << sweep_axis_name(axis) << "," << values[k] << ","
           << base.dataset.name << "," << a.method << "," << a.coverage_mean
           << "," << a.coverage_std << "," << a.delta_mean << ","
           << a.mae_mean << "," << a.mae_q_mean << "\n";
    detail::atomic_write(std::filesystem::path(base.out_dir) /
                             (base.dataset.name + "-sweep-" +
                              sweep_axis_name(axis) + ".csv"),
                         os.str());
  }
  return res;
}

// Root-mean-squared error of the median head over the test partition.
inline double test_rmse(QuantileNet& net, const Dataset& ds) {
  double acc = 0.0;
  for (std::size_t i : ds.test_idx) {
    const double e = ds.y[i] - net.predict_quantiles(ds.X.row_vec(i), false)[1];
    acc += e * e;
  }
  return std::sqrt(acc / double(ds.test_idx.size()));
}

struct FitQualityResult {
  double well_trained_rmse = 0.0;
  double underfitted_rmse = 0.0;
  std::vector<IntervalReport> well_trained;  // aligned with methods
  std::vector<IntervalReport> underfitted;
};

// Fit-quality study: among 15 fully trained candidates keep the best
// (lowest test RMSE); among 15 briefly trained candidates keep the worst
// (highest test RMSE). Every requested method then runs on both bases.
inline FitQualityResult run_fit_quality_study(const ExperimentConfig& cfg,
                                              std::uint64_t seed,
                                              std::size_t n_candidates = 15,
                                              std::size_t short_epochs = 6) {
  Dataset ds = make_dataset(cfg.dataset, seed, cfg.split_ratio);

  auto pick = [&](std::size_t epochs, bool want_min) {
    std::unique_ptr<QuantileNet> best;
    double best_rmse = 0.0;
    for (std::size_t k = 0; k < n_candidates; ++k) {
      const std::uint64_t cs = mix_seed(seed, 0x1500 + k + (want_min ? 0 : 64));
      auto cand = std::make_unique<QuantileNet>(ds.dim(), cfg.net, cs);
      TrainConfig tc = cfg.train;
      tc.epochs = epochs;
      tc.seed = cs;
      train(*cand, ds, tc);
      const double r = test_rmse(*cand, ds);
      if (!best || (want_min ? r < best_rmse : r > best_rmse)) {
        best = std::move(cand);
        best_rmse = r;
      }
    }
    return std::make_pair(std::move(best), best_rmse);
  };

  auto [well, well_rmse] = pick(cfg.train.epochs, true);
  auto [under, under_rmse] = pick(short_epochs, false);

  auto evaluate_base = [&](std::unique_ptr<QuantileNet> net) {
    SeedRun run;
    run.seed = seed;
    run.ds = ds;
    run.partition_hash = split_hash(run.ds);
    run.net = std::move(net);
    if (wants(cfg.methods, "mcnf") || wants(cfg.methods, "nf")) {
      FlowConfig fc;
      fc.context_dim = 2 + run.net->proxy_width();
      run.model =
          std::make_unique<McnfModel>(*run.net, fc, cfg.mcnf, seed);
      const auto summaries =
          precompute_summaries(*run.net, run.ds, cfg.mcnf.n_mcd, seed);
      train_mcnf(*run.model, run.ds, summaries, seed);
    }
    std::vector<IntervalReport> reps;
    for (const auto& m : cfg.methods)
      reps.push_back(evaluate_method(cfg, run, m));
    return reps;
  };

  FitQualityResult res;
  res.well_trained_rmse = well_rmse;
  res.underfitted_rmse = under_rmse;
  res.well_trained = evaluate_base(std::move(well));
  res.underfitted = evaluate_base(std::move(under));
  return res;
}

// Plot-ready files for a 1-D predictor: per-grid-point predictive and prior
// sample sets with Gaussian KDE curves, plus an interval band over the test
// points with a covered flag.
inline void emit_plot_data(McnfModel& model, const Dataset& ds,
                           const std::vector<double>& x_grid, double alpha,
                           std::size_t n_nf, std::uint64_t seed,
                           const std::string& out_dir) {
  if (ds.dim() != 1)
    throw std::invalid_argument(
        "emit_plot_data: only 1-D predictors are supported");
  const std::filesystem::path dir = out_dir;
  for (std::size_t g = 0; g < x_grid.size(); ++g) {
    const std::vector<double> x{x_grid[g]};
    auto s = infer(model, x, n_nf, mix_seed(seed, 0x9000 + g));
    auto dump = [&](const std::vector<double>& samples,
                    const std::string& stem) {
      std::vector<double> grid;
      const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
      const double pad = 0.1 * std::max(*hi - *lo, 1e-6);
      for (int k = 0; k < 200; ++k)
        grid.push_back(*lo - pad + (*hi - *lo + 2 * pad) * k / 199.0);
      const double bw = silverman_bandwidth(samples);
      const auto dens = kde_gaussian(samples, grid, bw);
      std::ostringstream os;
      os.precision(17);
      os << "value,density\n";
      for (double v : samples) os << v << ",\n";
      for (std::size_t k = 0; k < grid.size(); ++k)
        os << grid[k] << "," << dens[k] << "\n";
      detail::atomic_write(
          dir / (stem + "-grid" + std::to_string(g) + ".csv"), os.str());
    };
    dump(s.y, "mcnf-samples");
    dump(s.summary.samples, "mcd-prior-samples");
  }

  std::ostringstream band;
  band.precision(17);
  band << "x,lo,hi,median,covered\n";
  for (std::size_t i : ds.test_idx) {
    const Interval iv = predictive_interval(model, ds.X.row_vec(i), alpha,
                                            n_nf, mix_seed(seed, 0xa000 + i));
    band << ds.X(i, 0) << "," << iv.lo << "," << iv.hi << "," << iv.median
         << "," << ((ds.y[i] >= iv.lo && ds.y[i] <= iv.hi) ? 1 : 0) << "\n";
  }
  detail::atomic_write(dir / "interval-band.csv", band.str());
}

}  // namespace mcnf

#endif
