#pragma once

#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "scpo/policy_net.hpp"
#include "scpo/safety_metric.hpp"

namespace scpo {

/// x_{k+1} = A x_k + B u_k with box constraints on state and input.
struct LinearSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::VectorXd state_lo, state_hi;
  Eigen::VectorXd input_lo, input_hi;
  double dt = 0.1;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }

  void validate() const;
  bool state_in_box(const Eigen::VectorXd& x) const;
  Eigen::VectorXd clip_input(const Eigen::VectorXd& u) const;
  Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return A * x + B * u;
  }

  /// Discretized double integrator: position/velocity with dt = 0.1,
  /// |x_i| <= 15, |u| <= 1.
  static LinearSystem double_integrator();
};

/// c(x, u) = x^T Q x + u^T R u.
struct StageCost {
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;

  double operator()(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return x.dot(Q * x) + u.dot(R * u);
  }
};

struct DareSolution {
  Eigen::MatrixXd P;  // fixed point of the Riccati recursion, symmetric PD
  Eigen::MatrixXd K;  // (R + B^T P B)^{-1} B^T P A
};

/// Riccati iteration until ||P_next - P||_inf <= 1e-12 (cap 1e5 sweeps).
/// Throws std::runtime_error naming stabilizability when it fails to settle
/// or the closed loop ends up unstable.
DareSolution solve_dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

/// pi_safe(x) = clip(-K x) onto the input box.
struct BackupController {
  Eigen::MatrixXd K;
  Eigen::MatrixXd P;
  Eigen::VectorXd input_lo, input_hi;

  Eigen::VectorXd act(const Eigen::VectorXd& x) const {
    return (-K * x).cwiseMax(input_lo).cwiseMin(input_hi);
  }

  static BackupController lqr(const LinearSystem& sys, const StageCost& cost);
};

/// Terminal region: either a norm ball ||x|| <= radius or a sublevel set
/// x^T P x <= level of the local quadratic value function.
class TargetSet {
 public:
  /// Default-constructed set is the degenerate ball {0}.
  TargetSet() = default;

  static TargetSet norm_ball(double radius);
  static TargetSet value_level(double level, Eigen::MatrixXd P);

  bool contains(const Eigen::VectorXd& x) const;

 private:
  bool use_level_ = false;
  double threshold_ = 0.0;
  Eigen::MatrixXd P_;
};

struct Trajectory {
  std::vector<Eigen::VectorXd> states;  // length = inputs.size() + 1
  std::vector<Eigen::VectorXd> inputs;
  double cost = 0.0;
  bool feasible = true;
  bool reached_target = false;
  std::optional<int> steps_to_target;
};

using StatePolicy = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Closed-loop simulation with input clipping; stops early on target entry
/// or on leaving the state box (infeasibility is recorded, not thrown).
Trajectory rollout(const LinearSystem& system, const StatePolicy& policy,
                   const Eigen::VectorXd& x0, int max_steps,
                   const TargetSet& target, const StageCost& cost);

/// Everything the value/advantage estimators need, bundled.
struct ControlProblem {
  LinearSystem system;
  StageCost cost;
  BackupController backup;
  TargetSet target;
  int value_horizon = 3000;
};

/// Cost-to-go under the backup controller until target entry plus the
/// terminal x^T P x correction; +inf when the rollout leaves the box or the
/// horizon expires first (the state is treated as unrecoverable).
double value_backup(const ControlProblem& problem, const Eigen::VectorXd& x);

struct QAdvantage {
  double q = 0.0;
  double advantage = 0.0;
};

/// Q(x, u) = c(x, clip(u)) + V(A x + B clip(u)); advantage = Q - V(x).
/// Any non-finite intermediate propagates as +inf.
QAdvantage q_and_advantage(const ControlProblem& problem,
                           const Eigen::VectorXd& x, const Eigen::VectorXd& u);

/// nx-by-ny uniform grid over the state box (2-D systems).
std::vector<Eigen::VectorXd> uniform_grid(const LinearSystem& system, int nx,
                                          int ny);

/// Composite policy: the backup inside the target set, otherwise
/// clip(pi_safe(x) + phi_theta(x)).
StatePolicy make_composite_policy(const ControlProblem& problem,
                                  const NetSpec& spec, ParamVector params);

/// Scalar (k = 1) safety metric: max over certified grid states of
/// advantage(x, pi_theta(x)) - (1 - mu) ||x||^2. Grid states are filtered
/// once to finite V and to lie outside the target set.
class ImprovementMetric : public SafetyMetric {
 public:
  ImprovementMetric(ControlProblem problem, NetSpec spec,
                    std::vector<Eigen::VectorXd> grid, double mu = 0.0);

  int dimension() const override { return 1; }
  Eigen::VectorXd evaluate(const ParamVector& params) const override;

  const std::vector<Eigen::VectorXd>& certified_grid() const { return grid_; }
  const std::vector<double>& grid_values() const { return values_; }
  const ControlProblem& problem() const { return problem_; }

 private:
  ControlProblem problem_;
  NetSpec spec_;
  std::vector<Eigen::VectorXd> grid_;  // finite-value states outside target
  std::vector<double> values_;         // cached V(x) per grid state
  double mu_;
};

/// Noisy proportional expert: u = clip(-2 (x_1 + x_2) + delta),
/// delta ~ N(0, std 0.4), drawn from an owned seeded stream.
class ExpertPolicy {
 public:
  ExpertPolicy(const LinearSystem& system, std::uint64_t seed,
               double noise_std = 0.4);

  Eigen::VectorXd operator()(const Eigen::VectorXd& x);
  void reseed(std::uint64_t seed);

 private:
  Eigen::VectorXd input_lo_, input_hi_;
  double noise_std_;
  std::mt19937_64 rng_;
};

/// mask[i] = rollout from grid[i] stays in the boxes and reaches the target
/// within the horizon.
std::vector<bool> estimate_reachable_set(const LinearSystem& system,
                                         const StatePolicy& policy,
                                         const std::vector<Eigen::VectorXd>& grid,
                                         int horizon, const TargetSet& target,
                                         const StageCost& cost);

}  // namespace scpo
