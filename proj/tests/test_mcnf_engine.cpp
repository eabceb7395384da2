#include <catch_amalgamated.hpp>

#include <map>

#include "mcnf/mcnf.hpp"

using namespace mcnf;

TEST_CASE("epoch batches partition the observation indices") {
  Rng rng = make_rng(1, 0x7);
  const auto batches = build_epoch_batches(64, 50, 32, rng);
  REQUIRE(batches.size() == 2);
  std::vector<int> seen(64, 0);
  for (const auto& b : batches) {
    REQUIRE(b.size() == 32);
    for (const auto& e : b) seen[e.obs]++;
  }
  for (int c : seen) REQUIRE(c == 1);
}

TEST_CASE("ragged final batch still partitions") {
  Rng rng = make_rng(2, 0x7);
  const auto batches = build_epoch_batches(70, 10, 32, rng);
  REQUIRE(batches.size() == 3);
  REQUIRE(batches.back().size() == 6);
  std::size_t total = 0;
  for (const auto& b : batches) total += b.size();
  REQUIRE(total == 70);
}

TEST_CASE("drawn MCD sample indices are approximately uniform") {
  const std::size_t n_mcd = 50;
  std::map<std::size_t, std::size_t> counts;
  Rng rng = make_rng(3, 0x7);
  const std::size_t epochs = 1000, n_obs = 10;
  for (std::size_t e = 0; e < epochs; ++e) {
    for (const auto& b : build_epoch_batches(n_obs, n_mcd, 32, rng))
      for (const auto& entry : b) counts[entry.mcd_sample]++;
  }
  const double expected = double(epochs * n_obs) / double(n_mcd);
  double chi2 = 0.0;
  for (std::size_t k = 0; k < n_mcd; ++k) {
    const double d = double(counts[k]) - expected;
    chi2 += d * d / expected;
  }
  // chi-square with 49 dof: 0.01 critical value is 74.9
  REQUIRE(chi2 < 74.9);
}

TEST_CASE("batch weights are uniform within 1e-9 at tau = 1e10") {
  std::vector<double> lp{-1.0, -250.0, -3.5, -900.0};
  const auto w = batch_weights(lp, 1e10);
  for (double v : w) REQUIRE(v == Catch::Approx(0.25).margin(1e-9));
}

TEST_CASE("low-density outliers get vanishing weight at small tau") {
  const auto w = batch_weights({0.0, -300.0}, 1.0);
  REQUIRE(w[0] == Catch::Approx(1.0).margin(1e-10));
  REQUIRE(w[1] < 1e-10);
}

TEST_CASE("batch weights always sum to one") {
  Rng rng = make_rng(4, 0x99);
  for (double tau : {0.5, 10.0, 1e4, 1e10}) {
    std::vector<double> lp(17);
    for (auto& v : lp) v = -50.0 * uniform01(rng);
    const auto w = batch_weights(lp, tau);
    double sum = 0.0;
    for (double v : w) {
      REQUIRE(v >= 0.0);
      sum += v;
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("non-positive tau is rejected") {
  REQUIRE_THROWS_AS(batch_weights({0.0}, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(batch_weights({0.0}, -1.0), std::invalid_argument);
}

namespace {

// Small shared fixture: a quick base net and trained flow head on a noisy
// linear dataset.
struct TrainedMcnf {
  Dataset ds;
  QuantileNet net;
  McnfModel model;

  static Dataset make_data(std::uint64_t seed, double noise) {
    Dataset ds;
    const std::size_t n = 300;
    ds.X = Matrix(n, 1);
    ds.y.resize(n);
    Rng rng = make_rng(seed, 0xfee);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = 2.0 * uniform01(rng) - 1.0;
      ds.X(i, 0) = x;
      ds.y[i] = x + noise * gaussian(rng);
    }
    split_standardize(ds, 0.8, seed);
    return ds;
  }

  explicit TrainedMcnf(std::uint64_t seed, double noise = 0.5,
                       std::size_t mcnf_epochs = 60)
      : ds(make_data(seed, noise)),
        net(1, QuantileNetConfig{}, seed),
        model(net,
              [&] {
                FlowConfig fc;
                fc.context_dim = 2 + 64;
                return fc;
              }(),
              [&] {
                McnfConfig mc;
                mc.epochs = mcnf_epochs;
                mc.n_mcd = 20;
                mc.n_nf = 300;
                return mc;
              }(),
              seed) {
    TrainConfig tc;
    tc.epochs = 20;
    tc.seed = seed;
    train(net, ds, tc);
    const auto summaries = precompute_summaries(net, ds, 20, seed);
    train_mcnf(model, ds, summaries, seed);
  }
};

}  // namespace

TEST_CASE("inference before training is rejected") {
  Dataset ds = TrainedMcnf::make_data(5, 0.3);
  QuantileNet net(1, QuantileNetConfig{}, 5);
  FlowConfig fc;
  fc.context_dim = 2 + net.proxy_width();
  McnfModel model(net, fc, McnfConfig{}, 5);
  REQUIRE_THROWS_AS(infer(model, {0.0}, 10, 0), std::logic_error);
}

TEST_CASE("mcnf training leaves the base model untouched") {
  TrainedMcnf t(7);
  const std::uint64_t before = t.net.parameter_hash();
  const auto summaries = precompute_summaries(t.net, t.ds, 20, 8);
  train_mcnf(t.model, t.ds, summaries, 8);
  REQUIRE(t.net.parameter_hash() == before);
}

TEST_CASE("mcnf training loss decreases") {
  Dataset ds = TrainedMcnf::make_data(11, 0.5);
  QuantileNet net(1, QuantileNetConfig{}, 11);
  TrainConfig tc;
  tc.epochs = 20;
  tc.seed = 11;
  train(net, ds, tc);
  FlowConfig fc;
  fc.context_dim = 2 + net.proxy_width();
  McnfConfig mc;
  mc.epochs = 60;
  mc.n_mcd = 20;
  McnfModel model(net, fc, mc, 11);
  const auto summaries = precompute_summaries(net, ds, 20, 11);
  const auto trace = train_mcnf(model, ds, summaries, 11);
  REQUIRE(trace.back() < trace.front());
}

TEST_CASE("trained flow recovers a Gaussian residual scale within 15%") {
  // Homoskedastic Gaussian noise: residuals are trained against fresh prior
  // draws, so their scale is the noise convolved with the dropout spread and
  // the sample mean absolute deviation should sit near
  // sqrt(sigma^2 + var_MCD) * sqrt(2/pi).
  const double noise = 0.5;
  TrainedMcnf t(13, noise);
  // noise in standardized target units
  const double sigma_std = noise / t.ds.y_std;
  std::vector<double> devs, expects;
  for (std::size_t k = 0; k < 30; ++k) {
    const std::size_t i = t.ds.test_idx[k];
    auto s = infer_nf_ablation(t.model, t.ds.X.row_vec(i), 300,
                               mix_seed(13, 0x700 + i));
    for (double y : s.y) devs.push_back(std::fabs(y - s.summary.mean));
    expects.push_back(std::sqrt(sigma_std * sigma_std + s.summary.variance()) *
                      std::sqrt(2.0 / std::acos(-1.0)));
  }
  const double mad = mean(devs);
  REQUIRE(mad == Catch::Approx(mean(expects)).epsilon(0.15));
}

TEST_CASE("ablation samples have no more spread than full inference") {
  TrainedMcnf t(17);
  double var_full = 0.0, var_abl = 0.0;
  for (std::size_t k = 0; k < 20; ++k) {
    const std::size_t i = t.ds.test_idx[k];
    auto f = infer(t.model, t.ds.X.row_vec(i), 400, mix_seed(17, 0x800 + i));
    auto a = infer_nf_ablation(t.model, t.ds.X.row_vec(i), 400,
                               mix_seed(17, 0x800 + i));
    var_full += sample_variance(f.y);
    var_abl += sample_variance(a.y);
  }
  REQUIRE(var_abl <= var_full);
}

TEST_CASE("ablation sample densities match flow density evaluation") {
  TrainedMcnf t(19);
  const std::size_t i = t.ds.test_idx[0];
  auto s = infer_nf_ablation(t.model, t.ds.X.row_vec(i), 50,
                             mix_seed(19, 0x900));
  const auto c = build_context(s.summary);
  for (std::size_t k = 0; k < s.y.size(); ++k) {
    const double delta = s.y[k] - s.summary.mean;
    REQUIRE(t.model.flow().log_prob(delta, c) ==
            Catch::Approx(s.log_dens[k]).margin(1e-8));
  }
}

TEST_CASE("inference is reproducible per seed") {
  TrainedMcnf t(23);
  const auto a = infer(t.model, {0.1}, 50, 42);
  const auto b = infer(t.model, {0.1}, 50, 42);
  REQUIRE(a.y == b.y);
  const auto c = infer(t.model, {0.1}, 50, 43);
  REQUIRE(a.y != c.y);
}

TEST_CASE("predictive interval brackets its own median") {
  TrainedMcnf t(29);
  const Interval iv = predictive_interval(t.model, {0.0}, 0.05, 400, 3);
  REQUIRE(iv.lo <= iv.median);
  REQUIRE(iv.median <= iv.hi);
}

TEST_CASE("degenerate residuals give a sharply peaked flow") {
  // Nearly noiseless data: the only residual spread left is the dropout
  // spread, so the predictive scale collapses well below the marginal target
  // scale of 1 after standardization.
  TrainedMcnf t(31, 0.01, 80);
  const std::size_t i = t.ds.test_idx[0];
  auto s = infer_nf_ablation(t.model, t.ds.X.row_vec(i), 400,
                             mix_seed(31, 0xa00));
  REQUIRE(std::sqrt(sample_variance(s.y)) < 0.5);
}
