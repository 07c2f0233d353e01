#include "scpo/linear_control.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "scpo/rng.hpp"

namespace scpo {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void LinearSystem::validate() const {
  const int nx = state_dim();
  const int nu = input_dim();
  if (A.rows() != A.cols()) throw std::invalid_argument("A must be square");
  if (B.rows() != nx) throw std::invalid_argument("B row count must match A");
  if (state_lo.size() != nx || state_hi.size() != nx ||
      input_lo.size() != nu || input_hi.size() != nu) {
    throw std::invalid_argument("box dimensions do not match the system");
  }
  if ((state_lo.array() >= 0.0).any() || (state_hi.array() <= 0.0).any() ||
      (input_lo.array() >= 0.0).any() || (input_hi.array() <= 0.0).any()) {
    throw std::invalid_argument("boxes must contain the origin strictly");
  }
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
}

bool LinearSystem::state_in_box(const Eigen::VectorXd& x) const {
  return (x.array() >= state_lo.array()).all() &&
         (x.array() <= state_hi.array()).all();
}

Eigen::VectorXd LinearSystem::clip_input(const Eigen::VectorXd& u) const {
  return u.cwiseMax(input_lo).cwiseMin(input_hi);
}

LinearSystem LinearSystem::double_integrator() {
  LinearSystem s;
  const double dt = 0.1;
  s.dt = dt;
  s.A.resize(2, 2);
  s.A << 1.0, dt, 0.0, 1.0;
  s.B.resize(2, 1);
  s.B << 0.005, 0.1;  // dt^2/2, dt
  s.state_lo = Eigen::VectorXd::Constant(2, -15.0);
  s.state_hi = Eigen::VectorXd::Constant(2, 15.0);
  s.input_lo = Eigen::VectorXd::Constant(1, -1.0);
  s.input_hi = Eigen::VectorXd::Constant(1, 1.0);
  s.validate();
  return s;
}

DareSolution solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const int cap = 100000;
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < cap; ++it) {
    const Eigen::MatrixXd BtP = B.transpose() * P;
    const Eigen::MatrixXd gain_core =
        (R + BtP * B).ldlt().solve(BtP * A);  // (R + B'PB)^{-1} B'PA
    const Eigen::MatrixXd next =
        Q + A.transpose() * (P * A - P * B * gain_core);
    const double diff = (next - P).cwiseAbs().maxCoeff();
    P = 0.5 * (next + next.transpose());  // keep symmetric against drift
    if (diff <= 1e-12) {
      const Eigen::MatrixXd BtP2 = B.transpose() * P;
      DareSolution sol;
      sol.P = P;
      sol.K = (R + BtP2 * B).ldlt().solve(BtP2 * A);
      const Eigen::VectorXcd eigs = (A - B * sol.K).eigenvalues();
      if (eigs.cwiseAbs().maxCoeff() >= 1.0) {
        throw std::runtime_error(
            "solve_dare: closed loop not stable; is (A, B) stabilizable?");
      }
      return sol;
    }
  }
  throw std::runtime_error(
      "solve_dare: Riccati iteration did not converge; is (A, B) stabilizable?");
}

BackupController BackupController::lqr(const LinearSystem& sys,
                                       const StageCost& cost) {
  const DareSolution sol = solve_dare(sys.A, sys.B, cost.Q, cost.R);
  BackupController b;
  b.K = sol.K;
  b.P = sol.P;
  b.input_lo = sys.input_lo;
  b.input_hi = sys.input_hi;
  return b;
}

TargetSet TargetSet::norm_ball(double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be positive");
  TargetSet t;
  t.use_level_ = false;
  t.threshold_ = radius;
  return t;
}

TargetSet TargetSet::value_level(double level, Eigen::MatrixXd P) {
  if (!(level > 0.0)) throw std::invalid_argument("level must be positive");
  TargetSet t;
  t.use_level_ = true;
  t.threshold_ = level;
  t.P_ = std::move(P);
  return t;
}

bool TargetSet::contains(const Eigen::VectorXd& x) const {
  if (use_level_) return x.dot(P_ * x) <= threshold_;
  return x.norm() <= threshold_;
}

Trajectory rollout(const LinearSystem& system, const StatePolicy& policy,
                   const Eigen::VectorXd& x0, int max_steps,
                   const TargetSet& target, const StageCost& cost) {
  if (max_steps < 1) throw std::invalid_argument("rollout: max_steps must be >= 1");
  Trajectory traj;
  traj.states.push_back(x0);
  if (!system.state_in_box(x0)) {
    traj.feasible = false;
    return traj;
  }
  if (target.contains(x0)) {
    traj.reached_target = true;
    traj.steps_to_target = 0;
    return traj;
  }
  Eigen::VectorXd x = x0;
  for (int k = 0; k < max_steps; ++k) {
    const Eigen::VectorXd u = system.clip_input(policy(x));
    traj.inputs.push_back(u);
    traj.cost += cost(x, u);
    x = system.step(x, u);
    traj.states.push_back(x);
    if (!system.state_in_box(x)) {
      traj.feasible = false;
      return traj;
    }
    if (target.contains(x)) {
      traj.reached_target = true;
      traj.steps_to_target = k + 1;
      return traj;
    }
  }
  return traj;
}

double value_backup(const ControlProblem& problem, const Eigen::VectorXd& x) {
  if (!problem.system.state_in_box(x)) return kInf;
  const auto backup_policy = [&](const Eigen::VectorXd& s) {
    return problem.backup.act(s);
  };
  const Trajectory traj = rollout(problem.system, backup_policy, x,
                                  problem.value_horizon, problem.target,
                                  problem.cost);
  if (!traj.feasible || !traj.reached_target) return kInf;
  const Eigen::VectorXd& xf = traj.states.back();
  return traj.cost + xf.dot(problem.backup.P * xf);
}

QAdvantage q_and_advantage(const ControlProblem& problem,
                           const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  QAdvantage out;
  const Eigen::VectorXd uc = problem.system.clip_input(u);
  const double v_next = value_backup(problem, problem.system.step(x, uc));
  if (!std::isfinite(v_next)) {
    out.q = kInf;
    out.advantage = kInf;
    return out;
  }
  out.q = problem.cost(x, uc) + v_next;
  const double v_here = value_backup(problem, x);
  if (!std::isfinite(v_here)) {
    // Unrecoverable base state: surface the sentinel rather than -inf.
    out.advantage = kInf;
    return out;
  }
  out.advantage = out.q - v_here;
  return out;
}

std::vector<Eigen::VectorXd> uniform_grid(const LinearSystem& system, int nx,
                                          int ny) {
  if (system.state_dim() != 2) {
    throw std::invalid_argument("uniform_grid expects a 2-D state space");
  }
  if (nx < 2 || ny < 2) throw std::invalid_argument("grid must be at least 2x2");
  const Eigen::VectorXd xs =
      Eigen::VectorXd::LinSpaced(nx, system.state_lo[0], system.state_hi[0]);
  const Eigen::VectorXd ys =
      Eigen::VectorXd::LinSpaced(ny, system.state_lo[1], system.state_hi[1]);
  std::vector<Eigen::VectorXd> grid;
  grid.reserve(static_cast<size_t>(nx) * static_cast<size_t>(ny));
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      Eigen::VectorXd p(2);
      p << xs[i], ys[j];
      grid.push_back(std::move(p));
    }
  }
  return grid;
}

StatePolicy make_composite_policy(const ControlProblem& problem,
                                  const NetSpec& spec, ParamVector params) {
  if (params.size() != spec.param_count()) {
    throw std::invalid_argument("make_composite_policy: parameter mismatch");
  }
  return [problem, spec, params = std::move(params)](const Eigen::VectorXd& x) {
    const Eigen::VectorXd base = problem.backup.act(x);
    if (problem.target.contains(x)) return base;
    const Eigen::VectorXd u = base + forward(spec, params, x);
    return problem.system.clip_input(u);
  };
}

ImprovementMetric::ImprovementMetric(ControlProblem problem, NetSpec spec,
                                     std::vector<Eigen::VectorXd> grid,
                                     double mu)
    : problem_(std::move(problem)), spec_(spec), mu_(mu) {
  spec_.validate();
  if (spec_.input_dim != problem_.system.state_dim() ||
      spec_.output_dim != problem_.system.input_dim()) {
    throw std::invalid_argument("ImprovementMetric: network shape mismatch");
  }
  for (auto& x : grid) {
    if (problem_.target.contains(x)) continue;  // alpha-tilde degenerates there
    const double v = value_backup(problem_, x);
    if (!std::isfinite(v)) continue;  // outside the recoverable set
    grid_.push_back(std::move(x));
    values_.push_back(v);
  }
  if (grid_.empty()) {
    throw std::invalid_argument(
        "ImprovementMetric: no certified grid states (empty filtered grid)");
  }
}

Eigen::VectorXd ImprovementMetric::evaluate(const ParamVector& params) const {
  double worst = -kInf;
  for (size_t i = 0; i < grid_.size(); ++i) {
    const Eigen::VectorXd& x = grid_[i];
    const Eigen::VectorXd u = problem_.system.clip_input(
        problem_.backup.act(x) + forward(spec_, params, x));
    const double v_next = value_backup(problem_, problem_.system.step(x, u));
    double adv;
    if (!std::isfinite(v_next)) {
      adv = kInf;
    } else {
      adv = problem_.cost(x, u) + v_next - values_[i];
    }
    const double slack = adv - (1.0 - mu_) * x.squaredNorm();
    if (slack > worst) worst = slack;
  }
  return Eigen::VectorXd::Constant(1, worst);
}

ExpertPolicy::ExpertPolicy(const LinearSystem& system, std::uint64_t seed,
                           double noise_std)
    : input_lo_(system.input_lo), input_hi_(system.input_hi),
      noise_std_(noise_std), rng_(seed) {
  if (system.input_dim() != 1 || system.state_dim() != 2) {
    throw std::invalid_argument("ExpertPolicy targets the 2-state/1-input system");
  }
}

Eigen::VectorXd ExpertPolicy::operator()(const Eigen::VectorXd& x) {
  const double u = -2.0 * (x[0] + x[1]) + noise_std_ * gaussian01(rng_);
  return Eigen::VectorXd::Constant(1, u).cwiseMax(input_lo_).cwiseMin(input_hi_);
}

void ExpertPolicy::reseed(std::uint64_t seed) { rng_.seed(seed); }

std::vector<bool> estimate_reachable_set(const LinearSystem& system,
                                         const StatePolicy& policy,
                                         const std::vector<Eigen::VectorXd>& grid,
                                         int horizon, const TargetSet& target,
                                         const StageCost& cost) {
  std::vector<bool> mask(grid.size(), false);
  for (size_t i = 0; i < grid.size(); ++i) {
    const Trajectory t =
        rollout(system, policy, grid[i], horizon, target, cost);
    mask[i] = t.feasible && t.reached_target;
  }
  return mask;
}

}  // namespace scpo
