#pragma once

#include <memory>
#include <random>
#include <string>

#include "scpo/linear_control.hpp"
#include "scpo/policy_net.hpp"
#include "scpo/safety_metric.hpp"

namespace scpo {

/// A training problem: network shape, safety metric, and a batch source.
/// Control tasks sample on-policy, so the current parameters are an input.
class Task {
 public:
  virtual ~Task() = default;

  virtual const NetSpec& net_spec() const = 0;
  virtual const SafetyMetric& metric() const = 0;
  virtual Batch sample_batch(const ParamVector& params, int batch_size,
                             std::mt19937_64& rng) const = 0;
  virtual std::string name() const = 0;
};

/// Fit f(x) = sin x + sin 3x + sin 7x from N(0,1) draws while the policy
/// stays inside |pi_theta| <= bound on the certification grid.
class RegressionTask : public Task {
 public:
  explicit RegressionTask(NetSpec spec = {}, int grid_size = 64,
                          double lo = -3.0, double hi = 3.0,
                          double bound = 1.4);

  const NetSpec& net_spec() const override { return spec_; }
  const SafetyMetric& metric() const override { return metric_; }
  Batch sample_batch(const ParamVector& params, int batch_size,
                     std::mt19937_64& rng) const override;
  std::string name() const override { return "regression"; }

  const GridBoundMetric& grid_metric() const { return metric_; }

  static double target_fn(double x);

 private:
  NetSpec spec_;
  GridBoundMetric metric_;
};

/// Imitate a noisy aggressive expert on the double integrator while the
/// one-step improvement metric keeps the composite policy stabilizing.
class ControlTask : public Task {
 public:
  struct Options {
    int trajectories_per_epoch = 32;
    int rollout_horizon = 200;
    int grid_nx = 50;
    int grid_ny = 50;
    double expert_noise_std = 0.4;
    double target_radius = 0.01;
    int value_horizon = 3000;
    int max_resample_retries = 8;
    int hidden_width = 64;
    int num_blocks = 7;
    Activation activation = Activation::kTanh;
  };

  ControlTask();
  explicit ControlTask(Options opts);

  const NetSpec& net_spec() const override { return spec_; }
  const SafetyMetric& metric() const override { return *metric_; }
  /// States visited by on-policy rollouts whose endpoint the backup can still
  /// recover (finite value); targets are the expert residual relative to the
  /// backup action. Resamples fresh initial states when every trajectory is
  /// filtered out, up to max_resample_retries.
  Batch sample_batch(const ParamVector& params, int batch_size,
                     std::mt19937_64& rng) const override;
  std::string name() const override { return "double-integrator"; }

  const ControlProblem& problem() const { return problem_; }
  const ImprovementMetric& improvement_metric() const { return *metric_; }
  const Options& options() const { return opts_; }

  ExpertPolicy make_expert(std::uint64_t seed) const {
    return ExpertPolicy(problem_.system, seed, opts_.expert_noise_std);
  }
  StatePolicy composite_policy(const ParamVector& params) const {
    return make_composite_policy(problem_, spec_, params);
  }

 private:
  Options opts_;
  NetSpec spec_;
  ControlProblem problem_;
  std::unique_ptr<ImprovementMetric> metric_;
};

}  // namespace scpo
