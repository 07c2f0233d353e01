#include "scpo/projection.hpp"

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Eigenvalues>

#include "doctest.h"

using namespace scpo;

namespace {

struct LambdaMetric : SafetyMetric {
  int k;
  std::function<Eigen::VectorXd(const ParamVector&)> fn;
  LambdaMetric(int k_, std::function<Eigen::VectorXd(const ParamVector&)> f)
      : k(k_), fn(std::move(f)) {}
  int dimension() const override { return k; }
  Eigen::VectorXd evaluate(const ParamVector& p) const override { return fn(p); }
};

// Dense 1-D scan of the scalar program.
double oracle_best_c_1d(const ProjectionProblem& p, double lo, double hi,
                        double step) {
  double best_c = 0.0;
  double best_obj = std::numeric_limits<double>::infinity();
  Eigen::VectorXd c(1);
  for (double v = lo; v <= hi + 1e-12; v += step) {
    c[0] = v;
    if (constraint_values(p, c).maxCoeff() > 0.0) continue;
    const double obj = projection_objective(p, c);
    if (obj < best_obj) {
      best_obj = obj;
      best_c = v;
    }
  }
  return best_c;
}

// Dense 2-D scan; returns the best feasible objective.
double oracle_best_obj_2d(const ProjectionProblem& p, double lo, double hi,
                          double step) {
  REQUIRE(p.m() == 2);
  REQUIRE(p.k() == 1);
  const double g = p.g_ref[0];
  const double L = p.L[0];
  const double G1 = p.G(0, 0), G2 = p.G(0, 1);
  const double S11 = p.S(0, 0), S12 = p.S(0, 1), S22 = p.S(1, 1);
  const double d1 = p.diag_s[0], d2 = p.diag_s[1];
  double best = std::numeric_limits<double>::infinity();
  for (double c1 = lo; c1 <= hi + 1e-12; c1 += step) {
    const double t1 = g + (G1 - g) * c1;
    const double q1 = S11 * c1 * c1 + d1 * std::abs(c1);
    for (double c2 = lo; c2 <= hi + 1e-12; c2 += step) {
      const double quad = q1 + 2.0 * S12 * c1 * c2 + S22 * c2 * c2 +
                          d2 * std::abs(c2);
      const double h = t1 + (G2 - g) * c2 + 0.5 * quad * L;
      if (h > 0.0) continue;
      const double r1 = c1, r2 = c2 - 1.0;
      const double obj = S11 * r1 * r1 + 2.0 * S12 * r1 * r2 + S22 * r2 * r2;
      if (obj < best) best = obj;
    }
  }
  return best;
}

ProjectionProblem random_feasible_problem(std::mt19937_64& rng, int m, int k) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd D(5, m);
  for (int i = 0; i < D.size(); ++i) D(i / m, i % m) = u(rng);
  ProjectionProblem p;
  p.S = D.transpose() * D;
  p.diag_s = p.S.diagonal();
  p.G.resize(k, m);
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < m; ++i) p.G(j, i) = u(rng);
  p.g_ref.resize(k);
  for (int j = 0; j < k; ++j) p.g_ref[j] = -0.5 + 0.45 * u(rng);  // in [-0.95, -0.05]
  p.L.resize(k);
  for (int j = 0; j < k; ++j) p.L[j] = 1.0 + u(rng);  // in [0, 2]
  return p;
}

}  // namespace

TEST_CASE("bank evicts oldest entries beyond capacity") {
  UpdateBank bank(3, 2, Eigen::VectorXd::Constant(1, -1.0));
  for (int i = 0; i < 5; ++i) {
    bank.push(ParamVector::Constant(2, static_cast<double>(i)),
              Eigen::VectorXd::Constant(1, -0.1 * i));
  }
  REQUIRE(bank.size() == 3);
  CHECK(bank.entry(0).delta[0] == 2.0);
  CHECK(bank.entry(1).delta[0] == 3.0);
  CHECK(bank.entry(2).delta[0] == 4.0);
}

TEST_CASE("bank rejects mismatched dimensions") {
  UpdateBank bank(2, 3, Eigen::VectorXd::Constant(2, -1.0));
  CHECK_THROWS_AS(bank.push(ParamVector::Zero(4), Eigen::VectorXd::Zero(2)),
                  std::invalid_argument);
  CHECK_THROWS_AS(bank.push(ParamVector::Zero(3), Eigen::VectorXd::Zero(1)),
                  std::invalid_argument);
}

TEST_CASE("gram of orthogonal deltas is diagonal with squared norms") {
  UpdateBank bank(4, 2, Eigen::VectorXd::Constant(1, -1.0));
  ParamVector d1(2), d2(2);
  d1 << 1.0, 0.0;
  d2 << 0.0, 2.0;
  bank.push(d1, Eigen::VectorXd::Constant(1, -0.9));
  bank.push(d2, Eigen::VectorXd::Constant(1, -0.8));
  const GramData g = make_gram(bank);
  CHECK(g.S(0, 0) == 1.0);
  CHECK(g.S(1, 1) == 4.0);
  CHECK(g.S(0, 1) == 0.0);
  CHECK(g.diag_s[0] == 1.0);
  CHECK(g.diag_s[1] == 4.0);
  CHECK(g.e_m[1] == 1.0);
}

TEST_CASE("gram is symmetric positive semidefinite on random banks") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 6, m = 4;
    UpdateBank bank(m, d, Eigen::VectorXd::Constant(2, -1.0));
    for (int i = 0; i < m; ++i) {
      ParamVector delta(d);
      for (int j = 0; j < d; ++j) delta[j] = n(rng);
      if (i == 1) delta.setZero();  // include a degenerate column
      bank.push(delta, Eigen::VectorXd::Constant(2, -0.5));
    }
    const Eigen::MatrixXd S = bank.gram();
    CHECK((S - S.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("single zero entry reduces every constraint to g_ref") {
  UpdateBank bank(2, 4, Eigen::VectorXd::Constant(3, -0.7));
  bank.push(ParamVector::Zero(4), Eigen::VectorXd::Constant(3, -0.7));
  SmoothnessVector L;
  L.values = Eigen::VectorXd::Ones(3);
  const ProjectionProblem p = build_problem(bank, bank.reference_g(), L);
  CHECK(p.S(0, 0) == 0.0);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd c(1);
    c[0] = u(rng);
    const Eigen::VectorXd h = constraint_values(p, c);
    for (int j = 0; j < 3; ++j) CHECK(h[j] == doctest::Approx(-0.7).epsilon(1e-12));
  }
}

TEST_CASE("build_problem rejects an unsafe reference") {
  UpdateBank bank(2, 2, Eigen::VectorXd::Constant(1, 0.2));
  bank.push(ParamVector::Ones(2), Eigen::VectorXd::Constant(1, -0.1));
  SmoothnessVector L;
  L.values = Eigen::VectorXd::Ones(1);
  CHECK_THROWS_AS(build_problem(bank, bank.reference_g(), L),
                  std::invalid_argument);
}

TEST_CASE("constraint value at c = 0 equals g_ref exactly") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const ProjectionProblem p = random_feasible_problem(rng, 3, 2);
    const Eigen::VectorXd h = constraint_values(p, Eigen::VectorXd::Zero(3));
    CHECK(h == p.g_ref);
  }
}

TEST_CASE("feasible raw step is returned unchanged") {
  ProjectionProblem p;
  p.S = Eigen::MatrixXd::Identity(2, 2);
  p.diag_s = Eigen::VectorXd::Ones(2);
  p.G.resize(1, 2);
  p.G << -0.9, -0.8;
  p.g_ref = Eigen::VectorXd::Constant(1, -1.0);
  p.L = Eigen::VectorXd::Constant(1, 0.1);  // h(e_m) = -0.8 + 0.1 < 0
  const ProjectionResult r = solve_projection(p);
  CHECK(r.status == ProjectionStatus::kRawStepFeasible);
  CHECK(r.c_star[0] == 0.0);
  CHECK(r.c_star[1] == 1.0);
  CHECK(r.objective == 0.0);
}

TEST_CASE("scalar program matches a dense 1-D oracle") {
  ProjectionProblem p;
  p.S = Eigen::MatrixXd::Constant(1, 1, 1.0);
  p.diag_s = Eigen::VectorXd::Ones(1);
  p.G = Eigen::MatrixXd::Constant(1, 1, 0.5);
  p.g_ref = Eigen::VectorXd::Constant(1, -1.0);
  p.L = Eigen::VectorXd::Ones(1);

  const ProjectionResult r = solve_projection(p);
  REQUIRE(r.status == ProjectionStatus::kProjected);
  const double oracle_c = oracle_best_c_1d(p, -3.0, 3.0, 1e-4);
  // Analytic optimum of 0.5c^2 + 2c - 1 <= 0 on c >= 0 is sqrt(6) - 2.
  CHECK(oracle_c == doctest::Approx(std::sqrt(6.0) - 2.0).epsilon(1e-3));
  CHECK(std::abs(r.c_star[0] - oracle_c) <= 1e-3);
  CHECK(constraint_values(p, r.c_star).maxCoeff() <= kConstraintTolerance);
}

TEST_CASE("m=2 solver objective beats a dense grid oracle") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 3; ++trial) {
    const ProjectionProblem p = random_feasible_problem(rng, 2, 1);
    const ProjectionResult r = solve_projection(p);
    CHECK(constraint_values(p, r.c_star).maxCoeff() <= kConstraintTolerance);
    const double oracle = oracle_best_obj_2d(p, -3.0, 3.0, 1e-3);
    CHECK(r.objective <= oracle + 1e-4);
  }
}

TEST_CASE("scaled coefficients stay feasible (Lemma 1 property)") {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 3);
    const int k = 1 + static_cast<int>(rng() % 3);
    const ProjectionProblem p = random_feasible_problem(rng, m, k);
    const ProjectionResult r = solve_projection(p);
    for (int s = 0; s <= 20; ++s) {
      const double kappa = s / 20.0;
      const Eigen::VectorXd h = constraint_values(p, kappa * r.c_star);
      CHECK(h.maxCoeff() <= kConstraintTolerance);
    }
  }
}

TEST_CASE("projected step satisfies the descent inequality") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n(0.0, 1.0);
  const double eta = 0.05;
  int projected_seen = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const int d = 8, m = 3, k = 2;
    UpdateBank bank(m, d, Eigen::VectorXd::Constant(k, -0.4));
    ParamVector grad(d);
    for (int i = 0; i < m; ++i) {
      ParamVector delta(d);
      for (int j = 0; j < d; ++j) delta[j] = 0.3 * n(rng);
      Eigen::VectorXd g(k);
      if (i == m - 1) {
        for (int j = 0; j < d; ++j) grad[j] = n(rng);
        delta = -eta * grad;  // raw gradient step, newest column
        g << 0.3 + 0.2 * std::abs(n(rng)), 0.1;  // raw step unsafe
      } else {
        g << -0.3, -0.2;
      }
      bank.push(delta, g);
    }
    SmoothnessVector L;
    L.values = Eigen::VectorXd::Constant(k, 2.0);
    const ProjectionProblem p = build_problem(bank, bank.reference_g(), L);
    const ProjectionResult r = solve_projection(p);
    if (r.status != ProjectionStatus::kProjected) continue;
    ++projected_seen;
    const ParamVector delta_star = bank.combine(r.c_star);
    if (delta_star.isZero(0.0)) continue;
    const double lhs = -grad.dot(delta_star);
    const double rhs = delta_star.squaredNorm() / eta -
                       1e-6 * (1.0 + delta_star.squaredNorm());
    CHECK(lhs >= rhs);
  }
  CHECK(projected_seen >= 10);
}

TEST_CASE("smoothness estimate follows the pairwise slope formula") {
  UpdateBank bank(3, 3, Eigen::VectorXd::Constant(1, -0.5));
  ParamVector d1 = ParamVector::Zero(3);
  d1[0] = 1.0;  // unit norm
  bank.push(d1, Eigen::VectorXd::Constant(1, -0.2));
  const SmoothnessVector L = estimate_initial_L(bank, bank.reference_g());
  CHECK(L.values[0] == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("constant g across the bank gives zero smoothness") {
  std::mt19937_64 rng(37);
  std::normal_distribution<double> n(0.0, 1.0);
  UpdateBank bank(4, 5, Eigen::VectorXd::Constant(2, -0.3));
  for (int i = 0; i < 4; ++i) {
    ParamVector delta(5);
    for (int j = 0; j < 5; ++j) delta[j] = n(rng);
    bank.push(delta, Eigen::VectorXd::Constant(2, -0.3));
  }
  const SmoothnessVector L = estimate_initial_L(bank, bank.reference_g());
  CHECK(L.values.maxCoeff() == 0.0);
}

TEST_CASE("quadratic ground truth is never overestimated from zero reference") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 4;
    UpdateBank bank(5, d, Eigen::VectorXd::Zero(1));
    for (int i = 0; i < 5; ++i) {
      ParamVector delta(d);
      for (int j = 0; j < d; ++j) delta[j] = n(rng);
      bank.push(delta, Eigen::VectorXd::Constant(1, delta.squaredNorm()));
    }
    const SmoothnessVector L = estimate_initial_L(bank, bank.reference_g());
    CHECK(L.values[0] <= 2.0 + 1e-12);
    CHECK(L.values[0] == doctest::Approx(2.0));
  }
}

TEST_CASE("zero-delta banks give a zero smoothness vector") {
  UpdateBank bank(2, 3, Eigen::VectorXd::Constant(1, -0.5));
  bank.push(ParamVector::Zero(3), Eigen::VectorXd::Constant(1, -0.5));
  const SmoothnessVector L = estimate_initial_L(bank, bank.reference_g());
  CHECK(L.values[0] == 0.0);
}

TEST_CASE("affine true metric verifies on the first attempt") {
  const int d = 4;
  Eigen::VectorXd w(d);
  w << 0.3, -0.2, 0.5, 0.1;
  const double b = -1.0;
  LambdaMetric metric(1, [&](const ParamVector& p) {
    return Eigen::VectorXd::Constant(1, w.dot(p) + b);
  });

  const ParamVector theta = ParamVector::Zero(d);
  const Eigen::VectorXd g_ref = metric.evaluate(theta);
  UpdateBank bank(3, d, g_ref);
  std::mt19937_64 rng(43);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 3; ++i) {
    ParamVector delta(d);
    for (int j = 0; j < d; ++j) delta[j] = n(rng);
    bank.push(delta, metric.evaluate(theta + delta));
  }
  const SmoothnessVector L0 = estimate_initial_L(bank, g_ref);
  const AdaptiveProjection out =
      adaptive_project_and_verify(bank, g_ref, L0, metric, theta);
  CHECK(out.doublings == 0);
  CHECK(out.verified_g.maxCoeff() <= kSafetyTolerance);
  CHECK(out.smoothness.values == L0.values);
}

TEST_CASE("stale bank data forces doublings until the endpoint verifies") {
  // The bank claims the raw candidate at theta_1 = 0.8 is safe, but the true
  // metric peaks right there. Verification must catch the lie and double L
  // until the projected step retreats below the bump.
  const int d = 3;
  auto bump = [](double x) { return 0.5 - 4.0 * (x - 0.8) * (x - 0.8); };
  LambdaMetric metric(1, [&](const ParamVector& p) {
    return Eigen::VectorXd::Constant(1, bump(p[0]));
  });

  const ParamVector theta = ParamVector::Zero(d);
  const Eigen::VectorXd g_ref = metric.evaluate(theta);
  REQUIRE(g_ref[0] == doctest::Approx(-2.06));
  UpdateBank bank(2, d, g_ref);
  ParamVector raw(d);
  raw << 0.8, 0.0, 0.0;
  bank.push(raw, Eigen::VectorXd::Constant(1, -0.1));  // stale: truly +0.5

  SmoothnessVector L0;
  L0.values = Eigen::VectorXd::Constant(1, 0.05);
  const AdaptiveProjection out =
      adaptive_project_and_verify(bank, g_ref, L0, metric, theta);
  CHECK(out.doublings >= 1);
  CHECK(out.verified_g.maxCoeff() <= kSafetyTolerance);
  CHECK(out.result.status == ProjectionStatus::kProjected);
  CHECK(out.smoothness.values[0] > L0.values[0]);
  // The accepted point really is safe under the ground truth.
  CHECK(bump(theta[0] + out.result.delta_star[0]) <= kSafetyTolerance);
}

TEST_CASE("exhausted doublings fall back to the zero step") {
  const int d = 2;
  LambdaMetric metric(1, [](const ParamVector&) {
    return Eigen::VectorXd::Constant(1, 0.5);  // every candidate is unsafe
  });
  const Eigen::VectorXd g_ref = Eigen::VectorXd::Constant(1, -0.5);
  UpdateBank bank(2, d, g_ref);
  ParamVector raw(d);
  raw << 1.0, 0.0;
  bank.push(raw, Eigen::VectorXd::Constant(1, -0.4));  // bank believes raw is safe

  SmoothnessVector L0;
  L0.values = Eigen::VectorXd::Constant(1, 0.1);
  L0.max_doublings = 6;
  const AdaptiveProjection out =
      adaptive_project_and_verify(bank, g_ref, L0, metric, ParamVector::Zero(d));
  CHECK(out.result.status == ProjectionStatus::kZeroStep);
  CHECK(out.result.delta_star.isZero(0.0));
  CHECK(out.doublings == 6);
  CHECK(out.verified_g == g_ref);
}

TEST_CASE("armijo accepts the full step on a benign quadratic") {
  auto loss = [](const ParamVector& t) { return t.squaredNorm(); };
  ParamVector theta(2), delta(2);
  theta << 1.0, 0.0;
  delta << -1.0, 0.0;
  const ArmijoResult r = armijo_search(loss, theta, delta);
  CHECK(r.alpha == 1.0);
  CHECK(r.new_loss == 0.0);
  CHECK(r.base_loss == 1.0);
}

TEST_CASE("armijo rejects a non-descent direction") {
  auto loss = [](const ParamVector& t) { return t.squaredNorm(); };
  ParamVector theta(2), delta(2);
  theta << 1.0, 0.0;
  delta << 1.0, 0.0;
  const ArmijoResult r = armijo_search(loss, theta, delta);
  CHECK(r.alpha == 0.0);
  CHECK(r.new_loss == r.base_loss);
}

TEST_CASE("armijo inequality holds at the accepted step on rosenbrock") {
  auto loss = [](const ParamVector& t) {
    const double x = t[0], y = t[1];
    return (1.0 - x) * (1.0 - x) + 100.0 * (y - x * x) * (y - x * x);
  };
  auto grad = [](const ParamVector& t) {
    const double x = t[0], y = t[1];
    ParamVector g(2);
    g[0] = -2.0 * (1.0 - x) - 400.0 * x * (y - x * x);
    g[1] = 200.0 * (y - x * x);
    return g;
  };
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int trial = 0; trial < 10; ++trial) {
    ParamVector theta(2);
    theta << u(rng), u(rng);
    const ParamVector delta = -grad(theta);
    if (delta.isZero(0.0)) continue;
    const ArmijoResult r = armijo_search(loss, theta, delta);
    REQUIRE(r.alpha > 0.0);
    CHECK(loss(theta + r.alpha * delta) <=
          r.base_loss - 0.1 * r.alpha * delta.squaredNorm() + 1e-15);
  }
}

TEST_CASE("armijo rejects a zero direction") {
  auto loss = [](const ParamVector& t) { return t.squaredNorm(); };
  CHECK_THROWS_AS(armijo_search(loss, ParamVector::Ones(2), ParamVector::Zero(2)),
                  std::invalid_argument);
}

TEST_CASE("recenter with zero applied leaves the bank unchanged") {
  UpdateBank bank(2, 2, Eigen::VectorXd::Constant(1, -0.5));
  ParamVector d1(2);
  d1 << 1.0, 2.0;
  bank.push(d1, Eigen::VectorXd::Constant(1, -0.3));
  bank.recenter(ParamVector::Zero(2), bank.reference_g());
  CHECK(bank.entry(0).delta == d1);
  CHECK(bank.reference_g()[0] == -0.5);
}

TEST_CASE("recentering by an entry's own delta zeroes it") {
  UpdateBank bank(2, 2, Eigen::VectorXd::Constant(1, -0.5));
  ParamVector d1(2);
  d1 << 1.0, 2.0;
  const Eigen::VectorXd g1 = Eigen::VectorXd::Constant(1, -0.3);
  bank.push(d1, g1);
  bank.recenter(d1, g1);
  CHECK(bank.entry(0).delta.isZero(0.0));
  CHECK(bank.reference_g() == g1);
  CHECK(bank.entry(0).g_value == g1);  // now describes the new reference
}

TEST_CASE("recentered deltas still address the same absolute points") {
  NetSpec s;
  s.hidden_width = 6;
  s.num_blocks = 2;
  s.rng_seed = 9;
  GridBoundMetric metric(s);
  const ParamVector theta = PolicyNet::init_zero_residual(s).params();

  UpdateBank bank(3, s.param_count(), metric.evaluate(theta));
  std::mt19937_64 rng(53);
  std::normal_distribution<double> n(0.0, 0.05);
  std::vector<ParamVector> absolute;
  for (int i = 0; i < 3; ++i) {
    ParamVector delta(s.param_count());
    for (Eigen::Index j = 0; j < delta.size(); ++j) delta[j] = n(rng);
    absolute.push_back(theta + delta);
    bank.push(delta, metric.evaluate(theta + delta));
  }

  const ParamVector applied = 0.5 * bank.entry(1).delta;
  const ParamVector theta_next = theta + applied;
  bank.recenter(applied, metric.evaluate(theta_next));

  for (int i = 0; i < 3; ++i) {
    const Eigen::VectorXd re = metric.evaluate(theta_next + bank.entry(i).delta);
    CHECK((re - bank.entry(i).g_value).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((theta_next + bank.entry(i).delta - absolute[static_cast<size_t>(i)])
              .cwiseAbs()
              .maxCoeff() <= 1e-12);
  }
}
