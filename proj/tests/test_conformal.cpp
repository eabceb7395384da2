#include <catch_amalgamated.hpp>

#include "mcnf/conformal.hpp"
#include "mcnf/dataset.hpp"

using namespace mcnf;

TEST_CASE("cqr score is negative strictly inside the interval") {
  REQUIRE(cqr_score(0.5, 0.0, 1.0) < 0.0);
  REQUIRE(cqr_score(0.0, 0.0, 1.0) == 0.0);
  REQUIRE(cqr_score(1.5, 0.0, 1.0) == Catch::Approx(0.5));
  REQUIRE(cqr_score(-2.0, 0.0, 1.0) == Catch::Approx(2.0));
}

TEST_CASE("calibration picks the ceil((n+1)(1-alpha)) order statistic") {
  std::vector<double> scores;
  for (int i = 1; i <= 9; ++i) scores.push_back(double(i));
  // n=9, alpha=0.1: k = ceil(10*0.9) = 9 -> largest score
  REQUIRE(calibrate(scores, 0.1).q_hat == 9.0);
  // n=9, alpha=0.5: k = ceil(10*0.5) = 5
  REQUIRE(calibrate(scores, 0.5).q_hat == 5.0);
}

TEST_CASE("calibration with unsorted input matches the sort oracle") {
  Rng rng = make_rng(5, 0xabc);
  std::vector<double> scores(37);
  for (auto& v : scores) v = gaussian(rng);
  const double q = calibrate(scores, 0.1).q_hat;
  std::sort(scores.begin(), scores.end());
  const std::size_t k = std::size_t(std::ceil(38.0 * 0.9));
  REQUIRE(q == scores[k - 1]);
}

TEST_CASE("too few calibration scores is an error naming the minimum") {
  std::vector<double> scores(8, 0.0);
  // n=8, alpha=0.1: k = ceil(9*0.9) = 9 > 8
  try {
    calibrate(scores, 0.1);
    FAIL("expected calibration error");
  } catch (const std::runtime_error& e) {
    REQUIRE(std::string(e.what()).find("9") != std::string::npos);
  }
}

TEST_CASE("negative adjustments shrink and clamp crossed endpoints") {
  const Interval iv{0.0, 1.0, 0.5};
  const Interval wide = conformalize(iv, {0.4});
  REQUIRE(wide.lo == Catch::Approx(-0.4));
  REQUIRE(wide.hi == Catch::Approx(1.4));
  const Interval crossed = conformalize(iv, {-0.8});
  REQUIRE(crossed.lo <= crossed.hi);
  REQUIRE(crossed.lo == Catch::Approx(0.2));
  REQUIRE(crossed.hi == Catch::Approx(0.8));
  REQUIRE(crossed.median == 0.5);
}

TEST_CASE("calibration split is disjoint, seeded, and sized by fraction") {
  std::vector<std::size_t> test_idx;
  for (std::size_t i = 0; i < 50; ++i) test_idx.push_back(i * 2);
  const auto s = make_calibration_split(test_idx, 0.2, 7);
  REQUIRE(s.cal_idx.size() == 10);
  REQUIRE(s.eval_idx.size() == 40);
  std::vector<std::size_t> all = s.cal_idx;
  all.insert(all.end(), s.eval_idx.begin(), s.eval_idx.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> sorted_test = test_idx;
  std::sort(sorted_test.begin(), sorted_test.end());
  REQUIRE(all == sorted_test);

  const auto again = make_calibration_split(test_idx, 0.2, 7);
  REQUIRE(again.cal_idx == s.cal_idx);
  const auto other = make_calibration_split(test_idx, 0.2, 8);
  REQUIRE(other.cal_idx != s.cal_idx);
}

TEST_CASE("invalid calibration fraction is rejected") {
  std::vector<std::size_t> idx(10, 0);
  REQUIRE_THROWS_AS(make_calibration_split(idx, 0.0, 0),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(make_calibration_split(idx, 1.0, 0),
                    std::invalid_argument);
}

TEST_CASE("simulated conformal coverage over 100 exchangeable repeats") {
  // Deliberately misspecified base interval [-0.5, 0.5] for N(0,1) data:
  // calibration must widen it back to >= 1 - alpha coverage on average.
  double total = 0.0;
  const double alpha = 0.1;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    Rng rng = make_rng(rep, 0xc0);
    std::vector<double> scores;
    for (int i = 0; i < 50; ++i)
      scores.push_back(cqr_score(gaussian(rng), -0.5, 0.5));
    const auto adj = calibrate(scores, alpha);
    std::size_t hits = 0;
    const std::size_t n_eval = 200;
    for (std::size_t i = 0; i < n_eval; ++i) {
      const double y = gaussian(rng);
      const Interval iv = conformalize({-0.5, 0.5, 0.0}, adj);
      if (y >= iv.lo && y <= iv.hi) ++hits;
    }
    total += double(hits) / double(n_eval);
  }
  REQUIRE(total / 100.0 >= 0.88);
}

namespace {

Dataset linear_data(std::uint64_t seed) {
  Dataset ds;
  const std::size_t n = 250;
  ds.X = Matrix(n, 1);
  ds.y.resize(n);
  Rng rng = make_rng(seed, 0xfed);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = uniform01(rng);
    ds.X(i, 0) = x;
    ds.y[i] = x + 0.2 * gaussian(rng);
  }
  split_standardize(ds, 0.8, seed);
  return ds;
}

}  // namespace

TEST_CASE("cqr evaluation set avoids calibration points") {
  Dataset ds = linear_data(3);
  QuantileNet net(1, QuantileNetConfig{}, 3);
  TrainConfig tc;
  tc.epochs = 10;
  tc.seed = 3;
  train(net, ds, tc);
  const auto run = run_cqr(net, ds, ConformalConfig{}, 3);
  for (std::size_t i : run.eval_idx)
    REQUIRE(std::find(run.split.cal_idx.begin(), run.split.cal_idx.end(), i) ==
            run.split.cal_idx.end());
  REQUIRE(run.intervals.size() == run.eval_idx.size());
}

TEST_CASE("mccp with dropout disabled equals cqr bit for bit") {
  Dataset ds = linear_data(9);
  QuantileNetConfig cfg;
  cfg.dropout_rate = 0.0;
  QuantileNet net(1, cfg, 9);
  TrainConfig tc;
  tc.epochs = 10;
  tc.seed = 9;
  train(net, ds, tc);

  const auto a = run_cqr(net, ds, ConformalConfig{}, 9);
  const auto b = run_mccp(net, ds, ConformalConfig{}, 1000, 9);
  REQUIRE(a.eval_idx == b.eval_idx);
  REQUIRE(a.adjustment.q_hat == b.adjustment.q_hat);
  for (std::size_t k = 0; k < a.intervals.size(); ++k) {
    REQUIRE(a.intervals[k].lo == b.intervals[k].lo);
    REQUIRE(a.intervals[k].hi == b.intervals[k].hi);
    REQUIRE(a.intervals[k].median == b.intervals[k].median);
  }
}
