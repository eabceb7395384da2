#include <catch_amalgamated.hpp>

#include <sstream>

#include "mcnf/adam.hpp"
#include "mcnf/checkpoint.hpp"
#include "mcnf/layers.hpp"

using namespace mcnf;

namespace {

// Scalar loss: fixed random projection of the network output.
double projected_loss(Network& net, const Matrix& x,
                      const std::vector<double>& proj, std::uint64_t drop_seed) {
  Rng rng = make_rng(drop_seed, 0x3);
  Matrix out = net.forward(x, Mode{true, false}, &rng);
  double loss = 0.0;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c)
      loss += proj[c] * out(r, c);
  return loss;
}

void check_gradients(Network& net, const Matrix& x, std::size_t out_dim,
                     std::uint64_t seed) {
  std::vector<double> proj(out_dim);
  Rng prng = make_rng(seed, 0x77);
  for (auto& v : proj) v = gaussian(prng);

  net.zero_grad();
  projected_loss(net, x, proj, seed);
  Matrix gout(x.rows(), out_dim);
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < out_dim; ++c) gout(r, c) = proj[c];
  net.backward(gout);

  const auto params = net.parameters();
  const auto grads = net.gradients();
  const double h = 1e-5;
  for (std::size_t i = 0; i < params.size(); i += 7) {  // stride keeps it fast
    const double save = *params[i];
    *params[i] = save + h;
    const double lp = projected_loss(net, x, proj, seed);
    *params[i] = save - h;
    const double lm = projected_loss(net, x, proj, seed);
    *params[i] = save;
    const double fd = (lp - lm) / (2.0 * h);
    const double an = *grads[i];
    const double rel =
        std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1.0});
    INFO("param " << i << " analytic " << an << " fd " << fd);
    REQUIRE(rel <= 1e-4);
  }
}

}  // namespace

TEST_CASE("dense layer with identity weights passes input through") {
  Rng rng = make_rng(0);
  DenseLayer d(3, 3, rng, true);
  for (std::size_t i = 0; i < 3; ++i) d.weights()[i * 3 + i] = 1.0;
  Matrix x(1, 3);
  x(0, 0) = 1.5;
  x(0, 1) = -2.0;
  x(0, 2) = 0.25;
  Matrix y = d.forward(x, Mode{false, false}, nullptr);
  for (std::size_t j = 0; j < 3; ++j) REQUIRE(y(0, j) == x(0, j));
}

TEST_CASE("mlp parameter gradients match central finite differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Network net = make_mlp(4, {8, 8}, 3, seed);
    Matrix x(5, 4);
    Rng rng = make_rng(seed, 0x99);
    for (auto& v : x.data()) v = gaussian(rng);
    check_gradients(net, x, 3, seed);
  }
}

TEST_CASE("batchnorm network gradients match finite differences") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Network net;
    Rng rng = make_rng(seed, 0x1);
    net.add<BatchNormLayer>(4);
    net.add<DenseLayer>(4, 6, rng);
    net.add<ReluLayer>();
    net.add<DenseLayer>(6, 2, rng);
    Matrix x(8, 4);
    Rng xr = make_rng(seed, 0x98);
    for (auto& v : x.data()) v = 2.0 * gaussian(xr) + 0.5;
    check_gradients(net, x, 2, seed);
  }
}

TEST_CASE("dropout network gradients match finite differences with a fixed mask") {
  // The dropout rng is re-seeded identically for every evaluation, so the
  // mask is constant and the loss is differentiable.
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Network net;
    Rng rng = make_rng(seed, 0x1);
    net.add<DenseLayer>(4, 8, rng);
    net.add<ReluLayer>();
    net.add<DropoutLayer>(0.3);
    net.add<DenseLayer>(8, 2, rng);
    Matrix x(6, 4);
    Rng xr = make_rng(seed, 0x97);
    for (auto& v : x.data()) v = gaussian(xr);

    std::vector<double> proj(2);
    Rng prng = make_rng(seed, 0x77);
    for (auto& v : proj) v = gaussian(prng);

    auto loss = [&]() {
      Rng drng = make_rng(seed, 0xdd);
      Matrix out = net.forward(x, Mode{true, true}, &drng);
      double l = 0.0;
      for (std::size_t r = 0; r < out.rows(); ++r)
        for (std::size_t c = 0; c < 2; ++c) l += proj[c] * out(r, c);
      return l;
    };

    net.zero_grad();
    loss();
    Matrix gout(x.rows(), 2);
    for (std::size_t r = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < 2; ++c) gout(r, c) = proj[c];
    net.backward(gout);

    const auto params = net.parameters();
    const auto grads = net.gradients();
    const double h = 1e-5;
    for (std::size_t i = 0; i < params.size(); i += 5) {
      const double save = *params[i];
      *params[i] = save + h;
      const double lp = loss();
      *params[i] = save - h;
      const double lm = loss();
      *params[i] = save;
      const double fd = (lp - lm) / (2.0 * h);
      const double rel = std::fabs(*grads[i] - fd) /
                         std::max({std::fabs(*grads[i]), std::fabs(fd), 1.0});
      REQUIRE(rel <= 1e-4);
    }
  }
}

TEST_CASE("adam first step matches the hand-computed recurrence") {
  double p = 1.0, g = 1.0;
  Adam opt(AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
  opt.step({&p}, {&g});
  // bias-corrected m-hat = v-hat = 1, so the step is lr / (1 + eps)
  REQUIRE(p == Catch::Approx(1.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));

  // second step with the same gradient
  const double m2 = 0.9 * 0.1 + 0.1;             // raw first moment
  const double v2 = 0.999 * 0.001 + 0.001;       // raw second moment
  const double mh = m2 / (1.0 - 0.81);
  const double vh = v2 / (1.0 - 0.999 * 0.999);
  const double expect = p - 0.1 * mh / (std::sqrt(vh) + 1e-8);
  opt.step({&p}, {&g});
  REQUIRE(p == Catch::Approx(expect).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients") {
  double p = 0.0, g = std::numeric_limits<double>::quiet_NaN();
  Adam opt(AdamConfig{});
  REQUIRE_THROWS_AS(opt.step({&p}, {&g}), std::runtime_error);
}

TEST_CASE("decoupled weight decay shrinks parameters before the update") {
  double p = 2.0, g = 0.0;
  Adam opt(AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.5});
  opt.step({&p}, {&g});
  REQUIRE(p == Catch::Approx(2.0 * (1.0 - 0.1 * 0.5)).epsilon(1e-12));
}

TEST_CASE("dropout keeps roughly 1-rate of the units and rescales them") {
  DropoutLayer drop(0.1);
  Matrix x(100, 100, 1.0);
  Rng rng = make_rng(42, 0xd);
  Matrix y = drop.forward(x, Mode{false, true}, &rng);
  std::size_t zeros = 0;
  for (double v : y.data()) {
    if (v == 0.0)
      ++zeros;
    else
      REQUIRE(v == Catch::Approx(1.0 / 0.9).epsilon(1e-12));
  }
  const double drop_frac = double(zeros) / double(y.data().size());
  REQUIRE(drop_frac == Catch::Approx(0.1).margin(0.02));
}

TEST_CASE("dropout throws if active without an rng") {
  DropoutLayer drop(0.5);
  Matrix x(1, 4, 1.0);
  REQUIRE_THROWS_AS(drop.forward(x, Mode{false, true}, nullptr),
                    std::invalid_argument);
  // inactive path needs no rng
  REQUIRE_NOTHROW(drop.forward(x, Mode{false, false}, nullptr));
}

TEST_CASE("batchnorm inference is deterministic and uses running statistics") {
  BatchNormLayer bn(2);
  Matrix x(16, 2);
  Rng rng = make_rng(3, 0xb);
  for (auto& v : x.data()) v = 3.0 * gaussian(rng) - 1.0;
  bn.forward(x, Mode{true, false}, nullptr);

  Matrix probe(1, 2);
  probe(0, 0) = 0.7;
  probe(0, 1) = -0.3;
  Matrix a = bn.forward(probe, Mode{false, false}, nullptr);
  Matrix b = bn.forward(probe, Mode{false, false}, nullptr);
  REQUIRE(a(0, 0) == b(0, 0));
  REQUIRE(a(0, 1) == b(0, 1));
}

TEST_CASE("checkpoint round trip is bit-exact") {
  Network net;
  Rng rng = make_rng(9, 0x1);
  net.add<BatchNormLayer>(3);
  net.add<DenseLayer>(3, 5, rng);
  net.add<ReluLayer>();
  net.add<DropoutLayer>(0.1);
  net.add<DenseLayer>(5, 2, rng);

  // give the batchnorm non-trivial running stats
  Matrix x(8, 3);
  Rng xr = make_rng(9, 0x2);
  for (auto& v : x.data()) v = gaussian(xr);
  net.forward(x, Mode{true, false}, nullptr);

  std::stringstream ss;
  save_network(ss, net, 1234);
  std::uint64_t seed = 0;
  Network loaded = load_network(ss, &seed);
  REQUIRE(seed == 1234);
  REQUIRE(loaded.plan() == net.plan());

  const auto pa = net.parameters();
  const auto pb = loaded.parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(*pa[i] == *pb[i]);

  Matrix probe(1, 3);
  probe(0, 0) = 0.2;
  probe(0, 1) = -1.0;
  probe(0, 2) = 4.0;
  Matrix ya = net.forward(probe, Mode{false, false}, nullptr);
  Matrix yb = loaded.forward(probe, Mode{false, false}, nullptr);
  REQUIRE(ya(0, 0) == yb(0, 0));
  REQUIRE(ya(0, 1) == yb(0, 1));
}

TEST_CASE("checkpoint loader rejects malformed input") {
  std::stringstream ss("not-a-checkpoint 1\n");
  REQUIRE_THROWS_AS(load_network(ss), std::runtime_error);
}
