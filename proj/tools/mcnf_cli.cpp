// Benchmark CLI: trains base models, runs the UQ method suite over seeds,
// and emits report/sweep/plot data files.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

#include "mcnf/checkpoint.hpp"
#include "mcnf/experiment.hpp"

namespace {

using nlohmann::json;

mcnf::DatasetSpec dataset_from_name(const std::string& name, const json& j) {
  if (name == "romano-og") return mcnf::DatasetSpec::romano_original();
  if (name == "romano-mod") return mcnf::DatasetSpec::romano_mod();
  if (name == "outlier")
    return mcnf::DatasetSpec::outlier_study(j.value("b", 0.0),
                                            j.value("gamma", 25.0),
                                            j.value("outlier_rate", 0.01));
  if (name == "csv")
    return mcnf::DatasetSpec::csv(j.at("csv_path").get<std::string>(),
                                  j.at("target_column").get<std::string>(),
                                  j.value("name", std::string("csv")));
  throw std::invalid_argument("unknown dataset '" + name +
                              "' (expected romano-og|romano-mod|outlier|csv)");
}

mcnf::ExperimentConfig config_from_json(const json& j) {
  mcnf::ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    cfg.dataset = dataset_from_name(d.value("kind", std::string("romano-mod")), d);
    cfg.dataset.n_points = d.value("n_points", cfg.dataset.n_points);
    if (d.contains("squared_sine"))
      cfg.dataset.params.squared_sine = d["squared_sine"].get<bool>();
  }
  if (j.contains("methods"))
    cfg.methods = j["methods"].get<std::vector<std::string>>();
  if (j.contains("seeds"))
    cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
  cfg.split_ratio = j.value("split_ratio", cfg.split_ratio);
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.n_resamples = j.value("n_resamples", cfg.n_resamples);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  if (j.contains("net")) {
    const json& n = j["net"];
    cfg.net.hidden_width = n.value("hidden_width", cfg.net.hidden_width);
    cfg.net.dropout_rate = n.value("dropout_rate", cfg.net.dropout_rate);
    cfg.net.proxy_tap = n.value("proxy_tap", cfg.net.proxy_tap);
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
  }
  if (j.contains("mcnf")) {
    const json& m = j["mcnf"];
    cfg.mcnf.tau = m.value("tau", cfg.mcnf.tau);
    cfg.mcnf.epochs = m.value("epochs", cfg.mcnf.epochs);
    cfg.mcnf.lr = m.value("lr", cfg.mcnf.lr);
    cfg.mcnf.batch_size = m.value("batch_size", cfg.mcnf.batch_size);
    cfg.mcnf.n_nf = m.value("n_nf", cfg.mcnf.n_nf);
    cfg.mcnf.n_mcd = m.value("n_mcd", cfg.mcnf.n_mcd);
  }
  if (j.contains("conformal")) {
    const json& c = j["conformal"];
    cfg.conformal.alpha = c.value("alpha", cfg.conformal.alpha);
    cfg.conformal.cal_fraction =
        c.value("cal_fraction", cfg.conformal.cal_fraction);
  }
  return cfg;
}

struct CommonFlags {
  std::string config_path;
  std::string dataset;
  std::string methods;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::int64_t seed = -1;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config_path, "JSON config file");
  app->add_option("--dataset", f.dataset,
                  "dataset kind: romano-og|romano-mod|outlier|csv");
  app->add_option("--methods", f.methods, "comma-separated method list");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--seeds", f.seeds, "explicit seed list");
  app->add_option("--seed", f.seed, "single seed (overrides --seeds)");
}

mcnf::ExperimentConfig resolve_config(const CommonFlags& f) {
  json j = json::object();
  if (!f.config_path.empty()) {
    std::ifstream is(f.config_path);
    if (!is)
      throw std::runtime_error("cannot open config file " + f.config_path);
    is >> j;
  }
  mcnf::ExperimentConfig cfg = config_from_json(j);
  // flags win over the config file
  if (!f.dataset.empty())
    cfg.dataset = dataset_from_name(f.dataset, j.value("dataset", json::object()));
  if (!f.methods.empty()) {
    cfg.methods.clear();
    std::stringstream ss(f.methods);
    std::string tok;
    while (std::getline(ss, tok, ',')) cfg.methods.push_back(tok);
  }
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.seeds.empty()) cfg.seeds = f.seeds;
  if (f.seed >= 0) cfg.seeds = {std::uint64_t(f.seed)};
  return cfg;
}

void print_error(const std::string& stage, const std::exception& e) {
  json err;
  err["status"] = "error";
  err["stage"] = stage;
  err["message"] = e.what();
  std::cerr << err.dump() << "\n";
}

void print_benchmark(const mcnf::BenchmarkResult& res) {
  json out;
  out["status"] = res.errors.empty() ? "ok" : "partial";
  out["dataset"] = res.config.dataset.name;
  out["errors"] = res.errors;
  json table = json::array();
  for (const auto& a : res.aggregates) {
    json row;
    row["method"] = a.method;
    row["n_seeds"] = a.n_seeds;
    row["coverage"] = {{"mean", a.coverage_mean}, {"std", a.coverage_std}};
    row["delta"] = {{"mean", a.delta_mean}, {"std", a.delta_std}};
    row["mae"] = {{"mean", a.mae_mean}, {"std", a.mae_std}};
    row["mae_q"] = {{"mean", a.mae_q_mean}, {"std", a.mae_q_std}};
    row["delta_v_mean"] = a.delta_v_mean;
    table.push_back(row);
  }
  out["table"] = table;
  std::cout << out.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MCNF uncertainty-quantification benchmark"};
  app.require_subcommand(1);

  CommonFlags flags;

  auto* cmd_train = app.add_subcommand(
      "train-base", "train the base quantile regressor and checkpoint it");
  std::string ckpt_path = "base.ckpt";
  add_common(cmd_train, flags);
  cmd_train->add_option("--checkpoint", ckpt_path, "checkpoint output path");

  auto* cmd_bench =
      app.add_subcommand("benchmark", "run the full method benchmark");
  add_common(cmd_bench, flags);

  auto* cmd_sweep =
      app.add_subcommand("sweep", "benchmark across one hyperparameter axis");
  std::string axis = "tau";
  std::vector<double> axis_values;
  add_common(cmd_sweep, flags);
  cmd_sweep->add_option("--axis", axis, "epochs|n_nf|n_mcd|tau");
  cmd_sweep->add_option("--values", axis_values, "axis values")->required();

  auto* cmd_fit = app.add_subcommand(
      "fit-quality", "well-trained vs underfitted base comparison");
  add_common(cmd_fit, flags);

  auto* cmd_gen =
      app.add_subcommand("synth-gen", "export a synthetic dataset as CSV");
  std::string gen_out = "synthetic.csv";
  add_common(cmd_gen, flags);
  cmd_gen->add_option("--csv-out", gen_out, "CSV output path");

  auto* cmd_plot = app.add_subcommand(
      "plot-data", "emit per-grid-point samples, KDEs, and interval bands");
  std::size_t grid_points = 9;
  add_common(cmd_plot, flags);
  cmd_plot->add_option("--grid-points", grid_points,
                       "number of evenly spaced x grid points");

  CLI11_PARSE(app, argc, argv);

  try {
    mcnf::ExperimentConfig cfg = resolve_config(flags);
    const std::uint64_t seed = cfg.seeds.empty() ? 1 : cfg.seeds.front();

    if (cmd_train->parsed()) {
      mcnf::Dataset ds =
          mcnf::make_dataset(cfg.dataset, seed, cfg.split_ratio);
      mcnf::QuantileNet net(ds.dim(), cfg.net, seed);
      mcnf::TrainConfig tc = cfg.train;
      tc.seed = seed;
      const auto trace = mcnf::train(net, ds, tc);
      mcnf::save_network(ckpt_path, net.network(), seed);
      json out;
      out["status"] = "ok";
      out["checkpoint"] = ckpt_path;
      out["final_loss"] = trace.back();
      out["test_rmse"] = mcnf::test_rmse(net, ds);
      std::cout << out.dump(2) << "\n";
    } else if (cmd_bench->parsed()) {
      const auto res = mcnf::run_benchmark(cfg);
      print_benchmark(res);
      if (!res.errors.empty()) return 2;
    } else if (cmd_sweep->parsed()) {
      const auto res =
          mcnf::run_sweep(cfg, mcnf::parse_sweep_axis(axis), axis_values);
      json out;
      out["status"] = "ok";
      out["axis"] = axis;
      json runs = json::array();
      for (std::size_t k = 0; k < res.values.size(); ++k) {
        json r;
        r["value"] = res.values[k];
        for (const auto& a : res.runs[k].aggregates)
          r[a.method] = {{"coverage", a.coverage_mean},
                         {"delta", a.delta_mean},
                         {"mae", a.mae_mean}};
        runs.push_back(r);
      }
      out["runs"] = runs;
      std::cout << out.dump(2) << "\n";
    } else if (cmd_fit->parsed()) {
      const auto res = mcnf::run_fit_quality_study(cfg, seed);
      json out;
      out["status"] = "ok";
      out["well_trained_rmse"] = res.well_trained_rmse;
      out["underfitted_rmse"] = res.underfitted_rmse;
      for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
        const auto ws = res.well_trained[m].summarize();
        const auto us = res.underfitted[m].summarize();
        out["well_trained"][cfg.methods[m]] = {{"coverage", ws.coverage},
                                               {"delta", ws.delta_median}};
        out["underfitted"][cfg.methods[m]] = {{"coverage", us.coverage},
                                              {"delta", us.delta_median}};
      }
      std::cout << out.dump(2) << "\n";
    } else if (cmd_gen->parsed()) {
      if (!cfg.dataset.synthetic)
        throw std::invalid_argument("synth-gen needs a synthetic dataset");
      mcnf::Dataset ds =
          mcnf::generate_romano(cfg.dataset.params, cfg.dataset.n_points, seed);
      mcnf::save_csv(ds, gen_out);
      json out;
      out["status"] = "ok";
      out["csv"] = gen_out;
      out["n_points"] = ds.size();
      std::cout << out.dump(2) << "\n";
    } else if (cmd_plot->parsed()) {
      if (cfg.out_dir.empty())
        throw std::invalid_argument("plot-data requires --out");
      mcnf::SeedRun run;
      {
        mcnf::ExperimentConfig pc = cfg;
        if (!mcnf::wants(pc.methods, "mcnf")) pc.methods.push_back("mcnf");
        run = mcnf::train_seed(pc, seed);
      }
      if (run.ds.dim() != 1)
        throw std::invalid_argument("plot-data supports 1-D predictors only");
      std::vector<double> grid;
      double xmin = run.ds.X(0, 0), xmax = run.ds.X(0, 0);
      for (std::size_t i = 0; i < run.ds.size(); ++i) {
        xmin = std::min(xmin, run.ds.X(i, 0));
        xmax = std::max(xmax, run.ds.X(i, 0));
      }
      for (std::size_t g = 0; g < grid_points; ++g)
        grid.push_back(grid_points == 1
                           ? 0.5 * (xmin + xmax)
                           : xmin + (xmax - xmin) * double(g) /
                                        double(grid_points - 1));
      mcnf::emit_plot_data(*run.model, run.ds, grid, cfg.alpha,
                           cfg.mcnf.n_nf, seed, cfg.out_dir);
      json out;
      out["status"] = "ok";
      out["out_dir"] = cfg.out_dir;
      out["grid_points"] = grid_points;
      std::cout << out.dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    print_error(app.get_subcommands().empty()
                    ? "cli"
                    : app.get_subcommands().front()->get_name(),
                e);
    return 1;
  }
  return 0;
}
