#include "scpo/safety_metric.hpp"

#include <cmath>

#include "doctest.h"

using namespace scpo;

namespace {

NetSpec tiny_spec() {
  NetSpec s;
  s.hidden_width = 8;
  s.num_blocks = 2;
  s.rng_seed = 31;
  return s;
}

}  // namespace

TEST_CASE("grid metric at the zero policy is constant -bound") {
  NetSpec s = tiny_spec();
  GridBoundMetric metric(s);
  PolicyNet net = PolicyNet::init_zero_residual(s);
  const Eigen::VectorXd g = metric.evaluate(net.params());
  REQUIRE(g.size() == 64);
  for (int j = 0; j < g.size(); ++j) CHECK(g[j] == -1.4);
}

TEST_CASE("grid nodes are v_j = -3 + 6j/63") {
  GridBoundMetric metric(tiny_spec());
  const Eigen::VectorXd& v = metric.grid();
  REQUIRE(v.size() == 64);
  for (int j = 0; j < 64; ++j) {
    CHECK(v[j] == doctest::Approx(-3.0 + 6.0 * j / 63.0).epsilon(1e-15));
  }
  CHECK(v[0] == -3.0);
  CHECK(v[63] == 3.0);
}

TEST_CASE("metric matches direct |net(v_j)| - bound evaluation") {
  NetSpec s = tiny_spec();
  GridBoundMetric metric(s);
  PolicyNet net = PolicyNet::init_zero_residual(s);
  ParamVector p = net.params();
  // Perturb the output layer so the net is no longer identically zero.
  p.tail(s.hidden_width + 1).setLinSpaced(s.hidden_width + 1, -0.8, 0.9);
  const Eigen::VectorXd g = metric.evaluate(p);
  Eigen::VectorXd x(1);
  for (int j = 0; j < 64; ++j) {
    x[0] = metric.grid()[j];
    const double direct = std::abs(forward(s, p, x)[0]) - 1.4;
    CHECK(g[j] == direct);
  }
}

TEST_CASE("scaling the output layer scales violations monotonically") {
  NetSpec s = tiny_spec();
  GridBoundMetric metric(s);
  ParamVector base = PolicyNet::init_zero_residual(s).params();
  base.tail(s.hidden_width + 1).setLinSpaced(s.hidden_width + 1, -2.0, 2.0);

  double prev = -1e300;
  for (double scale : {0.0, 0.5, 1.0, 2.0}) {
    ParamVector p = base;
    p.tail(s.hidden_width + 1) *= scale;
    const double worst = metric.evaluate(p).maxCoeff();
    CHECK(worst >= prev);
    prev = worst;
  }
}

TEST_CASE("evaluate is deterministic") {
  NetSpec s = tiny_spec();
  GridBoundMetric metric(s);
  ParamVector p = PolicyNet::init_zero_residual(s).params();
  p.tail(9).setConstant(0.3);
  CHECK(metric.evaluate(p) == metric.evaluate(p));
}

TEST_CASE("violation summary separates raw and positive parts") {
  Eigen::VectorXd g(4);
  g << -1.0, 0.0, 2.0, -0.5;
  const ViolationSummary s = violation_summary(g);
  CHECK(s.raw_l1 == doctest::Approx((1.0 + 0.0 + 2.0 + 0.5) / 4.0));
  CHECK(s.positive_l1 == doctest::Approx(2.0 / 4.0));

  const ViolationSummary safe = violation_summary(Eigen::VectorXd::Constant(3, -0.2));
  CHECK(safe.positive_l1 == 0.0);
  CHECK(safe.raw_l1 == doctest::Approx(0.2));
}

TEST_CASE("metric rejects non-scalar networks") {
  NetSpec s = tiny_spec();
  s.input_dim = 2;
  CHECK_THROWS_AS(GridBoundMetric{s}, std::invalid_argument);
}
