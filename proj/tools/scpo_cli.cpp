// Experiment driver: training runs, the soft-penalty baseline, and
// reachable-set analysis, all configured from a single JSON file.
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "scpo/experiment.hpp"

namespace {

constexpr const char* kSchemaNotes = R"(Output CSV schemas (stable column order):
  log.csv     first line "# seed=<n>", then
              epoch,loss_pre,loss_post,g_mean_l1,g_max,alpha,step_norm,
              grad_dot_step,doublings,status,wall_ms,l_snapshot
              (l_snapshot joins the per-constraint smoothness values with ';').
  curve.csv   regression: x,target,policy          (64 grid rows)
              double-integrator: policy,k,x1,x2,u,cumulative_cost
              (one block per policy: pi_safe, pi_theta, pi_beta; x1,x2 is the
              state at step k, u the input applied there).
  mask_*.csv  x1,x2,flag over the 50x50 grid; flag=1 when the closed loop
              reaches the target ball within the horizon (one file per policy:
              pi_safe, pi_theta, pi_beta).

Config JSON keys: task (regression | double-integrator), mode (scpo |
soft-penalty), output_dir, eta, bank_capacity, sigma, shrink, max_backtracks,
growth_factor, max_doublings, epochs, batch_size, rng_seed, lambda_pen.
Unknown keys are rejected.)";

int run_command(const std::string& config_path, const std::string& out,
                const std::string& seed, bool force_baseline) {
  scpo::ExperimentConfig config = scpo::ExperimentConfig::load(config_path);
  if (force_baseline) config.mode = scpo::TrainMode::kSoftPenalty;
  if (!out.empty()) config.output_dir = out;
  if (!seed.empty()) config.trainer.rng_seed = std::stoull(seed);
  config.validate();

  const scpo::RunArtifacts art = scpo::run_experiment(config);
  std::printf("task=%s mode=%s epochs=%d seed=%llu\n",
              scpo::to_string(config.task), scpo::to_string(config.mode),
              config.trainer.epochs,
              static_cast<unsigned long long>(config.trainer.rng_seed));
  std::printf("wrote %s\n", art.log_csv.string().c_str());
  std::printf("wrote %s\n", art.final_ckpt.string().c_str());
  std::printf("wrote %s\n", art.curve_csv.string().c_str());
  std::printf("wrote %s\n", art.config_echo.string().c_str());
  if (!art.result.log.records.empty()) {
    const auto& first = art.result.log.records.front();
    const auto& last = art.result.log.records.back();
    std::printf("loss %.6g -> %.6g, final g_max %.3g\n", first.loss_pre,
                last.loss_post, last.g_max);
  }
  return 0;
}

int reachable_command(const std::string& config_path, const std::string& out,
                      const std::string& seed, const std::string& ckpt) {
  scpo::ExperimentConfig config = scpo::ExperimentConfig::load(config_path);
  if (!out.empty()) config.output_dir = out;
  if (!seed.empty()) config.trainer.rng_seed = std::stoull(seed);

  const auto paths = scpo::reachable_analysis(config, ckpt);
  for (const auto& p : paths) {
    std::printf("wrote %s\n", p.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("Safe constrained policy optimization experiments.\n\n") +
               kSchemaNotes};
  app.require_subcommand(1);

  std::string config_path, out_dir, seed, ckpt;

  CLI::App* run = app.add_subcommand(
      "run", "Train per the config; writes log.csv, final_policy.ckpt, "
             "curve.csv, config_echo.json, and checkpoints/.");
  run->add_option("--config", config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "override output_dir");
  run->add_option("--seed", seed, "override rng_seed");

  CLI::App* baseline = app.add_subcommand(
      "baseline", "Same as run with mode forced to soft-penalty "
                  "(regression only).");
  baseline->add_option("--config", config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  baseline->add_option("--out", out_dir, "override output_dir");
  baseline->add_option("--seed", seed, "override rng_seed");

  CLI::App* reachable = app.add_subcommand(
      "reachable", "Estimate reachable-set masks for pi_safe, pi_theta "
                   "(from --ckpt), and pi_beta over the metric grid.");
  reachable->add_option("--config", config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  reachable->add_option("--ckpt", ckpt, "policy checkpoint for pi_theta")
      ->required()
      ->check(CLI::ExistingFile);
  reachable->add_option("--out", out_dir, "override output_dir");
  reachable->add_option("--seed", seed, "override rng_seed (expert noise)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(config_path, out_dir, seed, false);
    if (baseline->parsed()) {
      return run_command(config_path, out_dir, seed, true);
    }
    return reachable_command(config_path, out_dir, seed, ckpt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
