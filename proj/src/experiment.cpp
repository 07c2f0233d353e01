#include "scpo/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace scpo {

namespace {

using nlohmann::json;

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "task",          "mode",          "output_dir",   "eta",
      "bank_capacity", "sigma",         "shrink",       "max_backtracks",
      "growth_factor", "max_doublings", "epochs",       "batch_size",
      "rng_seed",      "lambda_pen"};
  return keys;
}

TaskKind parse_task(const std::string& s) {
  if (s == "regression") return TaskKind::kRegression;
  if (s == "double-integrator") return TaskKind::kDoubleIntegrator;
  throw std::invalid_argument(
      "task must be \"regression\" or \"double-integrator\", got \"" + s +
      "\"");
}

TrainMode parse_mode(const std::string& s) {
  if (s == "scpo") return TrainMode::kScpo;
  if (s == "soft-penalty") return TrainMode::kSoftPenalty;
  throw std::invalid_argument(
      "mode must be \"scpo\" or \"soft-penalty\", got \"" + s + "\"");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write " + path.string());
  }
  return out;
}

}  // namespace

const char* to_string(TaskKind task) {
  return task == TaskKind::kRegression ? "regression" : "double-integrator";
}

const char* to_string(TrainMode mode) {
  return mode == TrainMode::kScpo ? "scpo" : "soft-penalty";
}

void ExperimentConfig::validate() const {
  trainer.validate();
  if (task == TaskKind::kDoubleIntegrator && mode == TrainMode::kSoftPenalty) {
    throw std::invalid_argument(
        "mode soft-penalty only applies to the regression task");
  }
  if (output_dir.empty()) {
    throw std::invalid_argument("output_dir must not be empty");
  }
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") +
                                e.what());
  }
  if (!j.is_object()) {
    throw std::invalid_argument("config must be a JSON object");
  }
  for (const auto& [key, value] : j.items()) {
    if (known_keys().count(key) == 0) {
      throw std::invalid_argument("unknown config key: " + key);
    }
  }

  ExperimentConfig cfg;
  try {
    if (j.contains("task")) cfg.task = parse_task(j.at("task"));
    if (j.contains("mode")) cfg.mode = parse_mode(j.at("mode"));
    if (j.contains("output_dir")) {
      cfg.output_dir = j.at("output_dir").get<std::string>();
    }
    TrainerConfig& t = cfg.trainer;
    if (j.contains("eta")) t.eta = j.at("eta").get<double>();
    if (j.contains("bank_capacity")) {
      t.bank_capacity = j.at("bank_capacity").get<int>();
    }
    if (j.contains("sigma")) t.sigma = j.at("sigma").get<double>();
    if (j.contains("shrink")) t.shrink = j.at("shrink").get<double>();
    if (j.contains("max_backtracks")) {
      t.max_backtracks = j.at("max_backtracks").get<int>();
    }
    if (j.contains("growth_factor")) {
      t.growth_factor = j.at("growth_factor").get<double>();
    }
    if (j.contains("max_doublings")) {
      t.max_doublings = j.at("max_doublings").get<int>();
    }
    if (j.contains("epochs")) t.epochs = j.at("epochs").get<int>();
    if (j.contains("batch_size")) t.batch_size = j.at("batch_size").get<int>();
    if (j.contains("rng_seed")) {
      t.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    }
    if (j.contains("lambda_pen")) {
      t.lambda_pen = j.at("lambda_pen").get<double>();
    }
  } catch (const json::type_error& e) {
    throw std::invalid_argument(std::string("config field has wrong type: ") +
                                e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open config file " + path.string());
  }
  std::ostringstream text;
  text << in.rdbuf();
  return from_json_text(text.str());
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["task"] = to_string(task);
  j["mode"] = to_string(mode);
  j["output_dir"] = output_dir.string();
  j["eta"] = trainer.eta;
  j["bank_capacity"] = trainer.bank_capacity;
  j["sigma"] = trainer.sigma;
  j["shrink"] = trainer.shrink;
  j["max_backtracks"] = trainer.max_backtracks;
  j["growth_factor"] = trainer.growth_factor;
  j["max_doublings"] = trainer.max_doublings;
  j["epochs"] = trainer.epochs;
  j["batch_size"] = trainer.batch_size;
  j["rng_seed"] = trainer.rng_seed;
  j["lambda_pen"] = trainer.lambda_pen;
  return j.dump(2) + "\n";
}

namespace {

void write_regression_curve(const std::filesystem::path& path,
                            const RegressionTask& task,
                            const PolicyNet& net) {
  std::ofstream out = open_out(path);
  out << "x,target,policy\n";
  const Eigen::VectorXd& grid = task.grid_metric().grid();
  for (int i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, grid[i]);
    out << fmt(grid[i]) << ',' << fmt(RegressionTask::target_fn(grid[i]))
        << ',' << fmt(net.forward(x)(0)) << '\n';
  }
}

// First grid state (row-major over the 50x50 grid) that pi_safe recovers but
// the expert destabilizes; it showcases the contrast between the policies.
Eigen::VectorXd pick_example_state(const ControlTask& task,
                                   std::uint64_t seed) {
  const ControlProblem& problem = task.problem();
  const auto grid = uniform_grid(problem.system, task.options().grid_nx,
                                 task.options().grid_ny);
  ExpertPolicy expert = task.make_expert(seed);
  const StatePolicy expert_policy = [&expert](const Eigen::VectorXd& x) {
    return expert(x);
  };
  const StatePolicy safe_policy = [&problem](const Eigen::VectorXd& x) {
    return problem.backup.act(x);
  };
  const int horizon = problem.value_horizon;
  for (const Eigen::VectorXd& x0 : grid) {
    const Trajectory safe = rollout(problem.system, safe_policy, x0, horizon,
                                    problem.target, problem.cost);
    if (!safe.reached_target) continue;
    const Trajectory bold = rollout(problem.system, expert_policy, x0, horizon,
                                    problem.target, problem.cost);
    if (!bold.reached_target) return x0;
  }
  // Degenerate fallback: nothing separates the policies; use the grid corner.
  return grid.front();
}

void write_control_curve(const std::filesystem::path& path,
                         const ControlTask& task, const PolicyNet& net,
                         std::uint64_t seed) {
  const ControlProblem& problem = task.problem();
  const Eigen::VectorXd x0 = pick_example_state(task, seed);

  ExpertPolicy expert = task.make_expert(seed + 1);
  struct Row {
    const char* name;
    StatePolicy policy;
  };
  const Row rows[] = {
      {"pi_safe",
       [&problem](const Eigen::VectorXd& x) { return problem.backup.act(x); }},
      {"pi_theta", task.composite_policy(net.params())},
      {"pi_beta", [&expert](const Eigen::VectorXd& x) { return expert(x); }},
  };

  std::ofstream out = open_out(path);
  out << "policy,k,x1,x2,u,cumulative_cost\n";
  for (const Row& row : rows) {
    const Trajectory traj =
        rollout(problem.system, row.policy, x0, problem.value_horizon,
                problem.target, problem.cost);
    double running = 0.0;
    for (size_t k = 0; k < traj.inputs.size(); ++k) {
      const Eigen::VectorXd& x = traj.states[k];
      running += problem.cost(x, traj.inputs[k]);
      out << row.name << ',' << k << ',' << fmt(x[0]) << ',' << fmt(x[1])
          << ',' << fmt(traj.inputs[k](0)) << ',' << fmt(running) << '\n';
    }
  }
}

void write_mask(const std::filesystem::path& path,
                const std::vector<Eigen::VectorXd>& grid,
                const std::vector<bool>& mask) {
  std::ofstream out = open_out(path);
  out << "x1,x2,flag\n";
  for (size_t i = 0; i < grid.size(); ++i) {
    out << fmt(grid[i][0]) << ',' << fmt(grid[i][1]) << ','
        << (mask[i] ? 1 : 0) << '\n';
  }
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);

  const auto log_csv = config.output_dir / "log.csv";
  const auto final_ckpt = config.output_dir / "final_policy.ckpt";
  const auto curve_csv = config.output_dir / "curve.csv";
  const auto config_echo = config.output_dir / "config_echo.json";
  const auto checkpoint_dir = config.output_dir / "checkpoints";

  open_out(config_echo) << config.to_json_text();

  std::optional<TrainResult> result;
  if (config.task == TaskKind::kRegression) {
    RegressionTask task;
    result = config.mode == TrainMode::kScpo
                 ? train_scpo(task, config.trainer, checkpoint_dir)
                 : train_soft_penalty(task, config.trainer, checkpoint_dir);
    write_regression_curve(curve_csv, task, result->net);
  } else {
    ControlTask task;
    result = train_scpo(task, config.trainer, checkpoint_dir);
    write_control_curve(curve_csv, task, result->net, config.trainer.rng_seed);
  }

  std::ofstream log = open_out(log_csv);
  result->log.write_csv(log);
  save_checkpoint(final_ckpt.string(), result->net.spec(),
                  result->net.params());
  return RunArtifacts{log_csv,    final_ckpt,     curve_csv,
                      config_echo, checkpoint_dir, std::move(*result)};
}

std::vector<std::filesystem::path> reachable_analysis(
    const ExperimentConfig& config, const std::filesystem::path& policy_ckpt) {
  if (config.task != TaskKind::kDoubleIntegrator) {
    throw std::invalid_argument(
        "reachable analysis only applies to the double-integrator task");
  }
  const auto [spec, params] = load_checkpoint(policy_ckpt.string());

  ControlTask task;
  const ControlProblem& problem = task.problem();
  const auto grid = uniform_grid(problem.system, task.options().grid_nx,
                                 task.options().grid_ny);
  const int horizon = problem.value_horizon;

  ExpertPolicy expert = task.make_expert(config.trainer.rng_seed);
  const StatePolicy policies[] = {
      [&problem](const Eigen::VectorXd& x) { return problem.backup.act(x); },
      make_composite_policy(problem, spec, params),
      [&expert](const Eigen::VectorXd& x) { return expert(x); },
  };
  const char* names[] = {"mask_pi_safe.csv", "mask_pi_theta.csv",
                         "mask_pi_beta.csv"};

  std::filesystem::create_directories(config.output_dir);
  std::vector<std::filesystem::path> outputs;
  for (int i = 0; i < 3; ++i) {
    const std::vector<bool> mask = estimate_reachable_set(
        problem.system, policies[i], grid, horizon, problem.target,
        problem.cost);
    const auto path = config.output_dir / names[i];
    write_mask(path, grid, mask);
    outputs.push_back(path);
  }
  return outputs;
}

}  // namespace scpo
