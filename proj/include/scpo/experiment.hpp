#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "scpo/task.hpp"
#include "scpo/trainer.hpp"

namespace scpo {

enum class TaskKind { kRegression, kDoubleIntegrator };
enum class TrainMode { kScpo, kSoftPenalty };

/// Everything one training run needs, loadable from a single JSON file.
/// Unknown keys are rejected so config typos fail loudly.
struct ExperimentConfig {
  TaskKind task = TaskKind::kRegression;
  TrainMode mode = TrainMode::kScpo;
  TrainerConfig trainer;
  std::filesystem::path output_dir = "out";

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

const char* to_string(TaskKind task);
const char* to_string(TrainMode mode);

/// Output files written by run_experiment, all inside config.output_dir.
struct RunArtifacts {
  std::filesystem::path log_csv;        // per-epoch TrainLog
  std::filesystem::path final_ckpt;     // final policy parameters
  std::filesystem::path curve_csv;      // task-specific plot data
  std::filesystem::path config_echo;    // resolved config as JSON
  std::filesystem::path checkpoint_dir; // epoch_NNNN.ckpt series
  TrainResult result;
};

/// Train per the config and persist log.csv, final_policy.ckpt, curve.csv,
/// config_echo.json, and per-epoch checkpoints. The curve file holds the
/// 64-point grid fit for regression (x, target, policy) and example
/// closed-loop trajectories for the double integrator
/// (policy, k, x1, x2, u, cumulative_cost).
RunArtifacts run_experiment(const ExperimentConfig& config);

/// Reachable-set masks over the metric grid for pi_safe, pi_theta (from a
/// checkpoint), and pi_beta, written as one CSV per policy (x1, x2, flag).
/// Returns the paths in that order.
std::vector<std::filesystem::path> reachable_analysis(
    const ExperimentConfig& config, const std::filesystem::path& policy_ckpt);

}  // namespace scpo
