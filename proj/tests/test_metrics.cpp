#include <catch_amalgamated.hpp>

#include <sstream>

#include "mcnf/metrics.hpp"
#include "mcnf/rng.hpp"

using namespace mcnf;

TEST_CASE("coverage counts closed-interval hits") {
  REQUIRE(coverage({1, 2, 3}, {0, 0, 0}, {10, 10, 10}) == 1.0);
  REQUIRE(coverage({1, 2, 30}, {0, 0, 0}, {10, 10, 10}) ==
          Catch::Approx(2.0 / 3.0));
  // boundary counts as covered
  REQUIRE(coverage({1.0}, {1.0}, {2.0}) == 1.0);
  REQUIRE(coverage({2.0}, {1.0}, {2.0}) == 1.0);
}

TEST_CASE("coverage is permutation invariant") {
  const std::vector<double> y{1, 5, 9}, lo{0, 6, 8}, hi{2, 7, 10};
  const double a = coverage(y, lo, hi);
  const double b = coverage({9, 1, 5}, {8, 0, 6}, {10, 2, 7});
  REQUIRE(a == b);
}

TEST_CASE("coverage rejects misaligned vectors") {
  REQUIRE_THROWS_AS(coverage({1}, {0, 0}, {1}), std::invalid_argument);
}

TEST_CASE("interval size quantiles on simple widths") {
  // constant width 2
  const auto c = interval_size_quantiles({0, 1, 2}, {2, 3, 4}, delta_v_levels());
  for (double v : c) REQUIRE(v == 2.0);
  // widths {1,2,3}, median 2
  const auto m = interval_size_quantiles({0, 0, 0}, {1, 2, 3}, {0.5});
  REQUIRE(m[0] == 2.0);
}

TEST_CASE("interval size quantiles match a sort oracle and are monotone") {
  Rng rng = make_rng(3, 0x31);
  std::vector<double> lo(101), hi(101);
  for (std::size_t i = 0; i < lo.size(); ++i) {
    lo[i] = gaussian(rng);
    hi[i] = lo[i] + 3.0 * uniform01(rng);
  }
  const auto q = interval_size_quantiles(lo, hi, delta_v_levels());
  for (std::size_t k = 1; k < q.size(); ++k) REQUIRE(q[k - 1] <= q[k]);

  std::vector<double> widths;
  for (std::size_t i = 0; i < lo.size(); ++i) widths.push_back(hi[i] - lo[i]);
  std::sort(widths.begin(), widths.end());
  for (std::size_t k = 0; k < q.size(); ++k)
    REQUIRE(q[k] == quantile_sorted(widths, delta_v_levels()[k]));
}

TEST_CASE("mae basics") {
  REQUIRE(mae({1, 2}, {1, 2}) == 0.0);
  REQUIRE(mae({0, 0}, {1, -1}) == 1.0);
}

TEST_CASE("mae matches a long-double summation oracle on random vectors") {
  Rng rng = make_rng(9, 0x32);
  std::vector<double> y(500), p(500);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = 100.0 * gaussian(rng);
    p[i] = 100.0 * gaussian(rng);
  }
  long double acc = 0.0L;
  for (std::size_t i = 0; i < y.size(); ++i)
    acc += fabsl((long double)y[i] - (long double)p[i]);
  acc /= (long double)y.size();
  REQUIRE(std::fabs(mae(y, p) - double(acc)) <= 1e-12 * double(acc));
}

TEST_CASE("mae_q basics") {
  // midpoint of a width-w interval scores exactly w
  REQUIRE(mae_q({1.0}, {0.0}, {2.0}) == 2.0);
  REQUIRE(mae_q({5.0}, {5.0}, {5.0}) == 0.0);
  REQUIRE(mae_q({1.0}, {0.0}, {3.0}) == 3.0);
}

TEST_CASE("mae_q dominates mean width over covered interior points") {
  Rng rng = make_rng(21, 0x33);
  std::vector<double> y, lo, hi;
  for (int i = 0; i < 200; ++i) {
    const double l = gaussian(rng);
    const double w = 1.0 + uniform01(rng);
    y.push_back(l + w * uniform01(rng));  // strictly inside
    lo.push_back(l);
    hi.push_back(l + w);
  }
  double mean_width = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) mean_width += hi[i] - lo[i];
  mean_width /= double(y.size());
  REQUIRE(mae_q(y, lo, hi) == Catch::Approx(mean_width).epsilon(1e-12));
}

TEST_CASE("report summary statistics recompute from the stored triples") {
  IntervalReport r;
  r.method = "probe";
  r.seed = 4;
  r.points = {{0.5, 0.0, 1.0, 0.4}, {2.0, 0.0, 1.0, 0.9}, {0.2, 0.1, 0.6, 0.3}};
  const ReportSummary s = r.summarize();
  REQUIRE(s.coverage == Catch::Approx(2.0 / 3.0));
  REQUIRE(s.delta_median == 1.0);  // widths {1, 1, 0.5}
  REQUIRE(s.mae == Catch::Approx((0.1 + 1.1 + 0.1) / 3.0));
  REQUIRE(s.delta_v.size() == delta_v_levels().size());
  REQUIRE(s.delta_median == s.delta_v[2]);
}

TEST_CASE("empty reports cannot be summarized") {
  IntervalReport r;
  REQUIRE_THROWS_AS(r.summarize(), std::runtime_error);
}

TEST_CASE("csv serialization has the documented schema") {
  IntervalReport r;
  r.method = "probe";
  r.points = {{0.5, 0.0, 1.0, 0.4}, {9.0, 0.0, 1.0, 0.5}};
  std::ostringstream os;
  write_report_csv(r, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  REQUIRE(line == "y,lo,hi,median,covered");
  std::getline(is, line);
  REQUIRE(line.back() == '1');
  std::getline(is, line);
  REQUIRE(line.back() == '0');
}

TEST_CASE("json summary carries every table column") {
  IntervalReport r;
  r.method = "probe";
  r.seed = 12;
  r.points = {{0.5, 0.0, 1.0, 0.4}};
  const auto j = report_summary_json(r);
  REQUIRE(j["method"] == "probe");
  REQUIRE(j["seed"] == 12);
  REQUIRE(j.contains("coverage"));
  REQUIRE(j.contains("delta_median"));
  REQUIRE(j["delta_v"].size() == 5);
  REQUIRE(j.contains("mae"));
  REQUIRE(j.contains("mae_q"));
}
