#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "scpo/projection.hpp"
#include "scpo/task.hpp"

namespace scpo {

struct TrainerConfig {
  double eta = 0.1;         // raw-step scale: delta_raw = -eta * grad
  int bank_capacity = 8;    // m, number of retained update candidates
  double sigma = 0.1;       // Armijo sufficient-decrease fraction
  double shrink = 0.5;      // Armijo backtracking factor
  int max_backtracks = 20;
  double growth_factor = 2.0;  // smoothness doubling factor
  int max_doublings = 16;
  int epochs = 0;
  int batch_size = 64;
  std::uint64_t rng_seed = 0;
  double lambda_pen = 1.0;  // soft-penalty baseline weight

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss_pre = 0.0;       // frozen-batch loss at theta_t
  double loss_post = 0.0;      // frozen-batch loss at theta_{t+1}
  double g_mean_l1 = 0.0;      // ||g(theta_{t+1})||_1 / k
  double g_max = 0.0;          // max_j g_j(theta_{t+1})
  double alpha = 0.0;          // accepted line-search fraction (0 = no move)
  double step_norm = 0.0;      // ||Delta theta*|| before the line search
  double grad_dot_step = 0.0;  // grad L(theta_t)^T Delta theta*
  int doublings = 0;
  std::string status;          // projection status or trainer-level override
  double wall_ms = 0.0;
  std::vector<double> l_snapshot;  // smoothness vector used for the step
};

struct TrainLog {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> records;

  void write_csv(std::ostream& out) const;
  /// Column line, pinned so downstream parsers can golden-test the schema.
  static const char* csv_header();
};

/// Field-exact comparison that ignores wall-clock timings.
bool same_run(const TrainLog& a, const TrainLog& b);

/// One safe-projection training state: policy plus update bank. Construction
/// verifies the zero-residual start is feasible; an unsafe metric at theta_0
/// is fatal because every later guarantee inducts from it.
class ScpoTrainer {
 public:
  ScpoTrainer(const Task& task, TrainerConfig config);

  /// One full step on a frozen batch: raw gradient step, bank append,
  /// adaptive projection, Armijo, verified apply (rollback on a failed
  /// verification), recenter, record.
  EpochRecord step(const Batch& batch);

  const PolicyNet& net() const { return net_; }
  const UpdateBank& bank() const { return bank_; }
  const Eigen::VectorXd& reference_g() const { return bank_.reference_g(); }
  int epoch() const { return epoch_; }

 private:
  EpochRecord make_zero_record(EpochRecord rec, double loss_pre);

  const Task& task_;
  TrainerConfig config_;
  PolicyNet net_;
  UpdateBank bank_;
  int epoch_ = 0;
};

/// Unconstrained baseline: gradient steps on L + lambda * 1^T relu(g).
/// The penalty term needs metric gradients, which only the grid-bound
/// regression metric exposes analytically, so the baseline is regression-only.
class SoftPenaltyTrainer {
 public:
  SoftPenaltyTrainer(const RegressionTask& task, TrainerConfig config);

  EpochRecord step(const Batch& batch);

  const PolicyNet& net() const { return net_; }
  int epoch() const { return epoch_; }

 private:
  const RegressionTask& task_;
  TrainerConfig config_;
  PolicyNet net_;
  int epoch_ = 0;
};

struct TrainResult {
  PolicyNet net;
  TrainLog log;
};

/// Outer loop of Algorithm 1: sample a batch with the current policy, run one
/// projected step, log, and checkpoint after every epoch when a directory is
/// given (epoch_NNNN.ckpt). epochs = 0 returns theta_0 and an empty log.
TrainResult train_scpo(const Task& task, const TrainerConfig& config,
                       const std::filesystem::path& checkpoint_dir = {});

TrainResult train_soft_penalty(const RegressionTask& task,
                               const TrainerConfig& config,
                               const std::filesystem::path& checkpoint_dir = {});

}  // namespace scpo
