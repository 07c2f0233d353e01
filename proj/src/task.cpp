#include "scpo/task.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "scpo/rng.hpp"

namespace scpo {

RegressionTask::RegressionTask(NetSpec spec, int grid_size, double lo,
                               double hi, double bound)
    : spec_(spec), metric_(spec, grid_size, lo, hi, bound) {
  spec_.validate();
}

double RegressionTask::target_fn(double x) {
  return std::sin(x) + std::sin(3.0 * x) + std::sin(7.0 * x);
}

Batch RegressionTask::sample_batch(const ParamVector& /*params*/,
                                   int batch_size,
                                   std::mt19937_64& rng) const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  Batch batch;
  batch.inputs.resize(batch_size, 1);
  batch.targets.resize(batch_size, 1);
  for (int i = 0; i < batch_size; ++i) {
    const double x = gaussian01(rng);
    batch.inputs(i, 0) = x;
    batch.targets(i, 0) = target_fn(x);
  }
  return batch;
}

ControlTask::ControlTask() : ControlTask(Options()) {}

ControlTask::ControlTask(Options opts) : opts_(opts) {
  spec_ = NetSpec{};
  spec_.input_dim = 2;
  spec_.output_dim = 1;
  spec_.hidden_width = opts_.hidden_width;
  spec_.num_blocks = opts_.num_blocks;
  spec_.activation = opts_.activation;
  spec_.validate();

  LinearSystem system = LinearSystem::double_integrator();
  StageCost cost{Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(1, 1)};
  BackupController backup = BackupController::lqr(system, cost);
  problem_ = ControlProblem{system, cost, backup,
                            TargetSet::norm_ball(opts_.target_radius),
                            opts_.value_horizon};
  metric_ = std::make_unique<ImprovementMetric>(
      problem_, spec_, uniform_grid(system, opts_.grid_nx, opts_.grid_ny));
}

namespace {

Eigen::VectorXd uniform_box_state(const LinearSystem& system,
                                  std::mt19937_64& rng) {
  Eigen::VectorXd x(system.state_dim());
  for (int i = 0; i < x.size(); ++i) {
    x[i] = system.state_lo[i] +
           uniform01(rng) * (system.state_hi[i] - system.state_lo[i]);
  }
  return x;
}

}  // namespace

Batch ControlTask::sample_batch(const ParamVector& params, int batch_size,
                                std::mt19937_64& rng) const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const StatePolicy policy = composite_policy(params);

  std::vector<Eigen::VectorXd> states;
  for (int retry = 0; retry <= opts_.max_resample_retries; ++retry) {
    for (int t = 0; t < opts_.trajectories_per_epoch; ++t) {
      const Eigen::VectorXd x0 = uniform_box_state(problem_.system, rng);
      Trajectory traj = rollout(problem_.system, policy, x0,
                                opts_.rollout_horizon, problem_.target,
                                problem_.cost);
      // Keep only trajectories the backup can still rescue at the end.
      if (!traj.feasible) continue;
      if (!std::isfinite(value_backup(problem_, traj.states.back()))) continue;
      states.insert(states.end(), traj.states.begin(), traj.states.end());
    }
    if (!states.empty()) break;
  }
  if (states.empty()) {
    throw std::runtime_error(
        "control batch sampler: every trajectory was filtered out after " +
        std::to_string(opts_.max_resample_retries + 1) + " rounds");
  }

  // Cap via partial Fisher-Yates so batches stay reproducible from the seed.
  const int n = std::min<int>(batch_size, static_cast<int>(states.size()));
  for (int i = 0; i < n; ++i) {
    const int span = static_cast<int>(states.size()) - i;
    int j = i + std::min(span - 1, static_cast<int>(uniform01(rng) * span));
    std::swap(states[static_cast<size_t>(i)], states[static_cast<size_t>(j)]);
  }

  ExpertPolicy expert = make_expert(rng());
  Batch batch;
  batch.inputs.resize(n, 2);
  batch.targets.resize(n, 1);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd& x = states[static_cast<size_t>(i)];
    // Targets are expert minus backup, so the MSE equals the imitation gap
    // of the (unclipped) composite policy.
    batch.inputs.row(i) = x.transpose();
    batch.targets(i, 0) = (expert(x) - problem_.backup.act(x))(0);
  }
  return batch;
}

}  // namespace scpo
