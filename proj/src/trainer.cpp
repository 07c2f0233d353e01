#include "scpo/trainer.hpp"

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace scpo {

namespace {

void require(bool ok, const char* field, const char* what) {
  if (!ok) {
    throw std::invalid_argument(std::string(field) + " " + what);
  }
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  const auto d = std::chrono::steady_clock::now() - start;
  return std::chrono::duration<double, std::milli>(d).count();
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void fill_g_stats(EpochRecord& rec, const Eigen::VectorXd& g) {
  const ViolationSummary summary = violation_summary(g);
  rec.g_mean_l1 = summary.raw_l1;
  rec.g_max = g.size() > 0 ? g.maxCoeff() : 0.0;
}

}  // namespace

void TrainerConfig::validate() const {
  require(eta > 0.0, "eta", "must be > 0");
  require(bank_capacity >= 1, "bank_capacity", "(m) must be >= 1");
  require(sigma > 0.0 && sigma < 1.0, "sigma", "must be in (0, 1)");
  require(shrink > 0.0 && shrink < 1.0, "shrink", "must be in (0, 1)");
  require(max_backtracks >= 0, "max_backtracks", "must be >= 0");
  require(growth_factor > 1.0, "growth_factor", "must be > 1");
  require(max_doublings >= 0, "max_doublings", "must be >= 0");
  require(epochs >= 0, "epochs", "must be >= 0");
  require(batch_size >= 1, "batch_size", "must be >= 1");
  require(lambda_pen >= 0.0, "lambda_pen", "must be >= 0");
}

const char* TrainLog::csv_header() {
  return "epoch,loss_pre,loss_post,g_mean_l1,g_max,alpha,step_norm,"
         "grad_dot_step,doublings,status,wall_ms,l_snapshot";
}

void TrainLog::write_csv(std::ostream& out) const {
  char head[64];
  std::snprintf(head, sizeof(head), "# seed=%" PRIu64, seed);
  out << head << "\n" << csv_header() << "\n";
  for (const EpochRecord& r : records) {
    out << r.epoch << ',' << fmt_double(r.loss_pre) << ','
        << fmt_double(r.loss_post) << ',' << fmt_double(r.g_mean_l1) << ','
        << fmt_double(r.g_max) << ',' << fmt_double(r.alpha) << ','
        << fmt_double(r.step_norm) << ',' << fmt_double(r.grad_dot_step) << ','
        << r.doublings << ',' << r.status << ',' << fmt_double(r.wall_ms)
        << ',';
    if (r.l_snapshot.empty()) {
      out << '-';
    } else {
      for (size_t i = 0; i < r.l_snapshot.size(); ++i) {
        if (i > 0) out << ';';
        out << fmt_double(r.l_snapshot[i]);
      }
    }
    out << '\n';
  }
}

bool same_run(const TrainLog& a, const TrainLog& b) {
  if (a.seed != b.seed || a.records.size() != b.records.size()) return false;
  for (size_t i = 0; i < a.records.size(); ++i) {
    const EpochRecord& x = a.records[i];
    const EpochRecord& y = b.records[i];
    if (x.epoch != y.epoch || x.loss_pre != y.loss_pre ||
        x.loss_post != y.loss_post || x.g_mean_l1 != y.g_mean_l1 ||
        x.g_max != y.g_max || x.alpha != y.alpha ||
        x.step_norm != y.step_norm || x.grad_dot_step != y.grad_dot_step ||
        x.doublings != y.doublings || x.status != y.status ||
        x.l_snapshot != y.l_snapshot) {
      return false;
    }
  }
  return true;
}

namespace {

TrainerConfig validated(TrainerConfig config) {
  config.validate();
  return config;
}

PolicyNet make_initial_net(const Task& task, const TrainerConfig& config) {
  NetSpec spec = task.net_spec();
  spec.rng_seed = config.rng_seed;  // one seed governs the whole run
  return PolicyNet::init_zero_residual(spec);
}

Eigen::VectorXd checked_initial_g(const Task& task, const PolicyNet& net) {
  Eigen::VectorXd g0 = task.metric().evaluate(net.params());
  if (g0.size() == 0 || g0.maxCoeff() > kSafetyTolerance) {
    throw std::runtime_error(
        "initial policy is infeasible: max_j g_j(theta_0) = " +
        fmt_double(g0.size() > 0 ? g0.maxCoeff() : 0.0) +
        "; safe training needs g(theta_0) <= 0");
  }
  return g0;
}

}  // namespace

ScpoTrainer::ScpoTrainer(const Task& task, TrainerConfig config)
    : task_(task), config_(validated(config)),
      net_(make_initial_net(task, config_)),
      bank_(config_.bank_capacity, static_cast<int>(net_.params().size()),
            checked_initial_g(task, net_)) {
  // Seed the bank with the zero update; after the first recenter it turns
  // into the direction pointing back at theta_0.
  bank_.push(ParamVector::Zero(bank_.param_dim()), bank_.reference_g());
}

EpochRecord ScpoTrainer::make_zero_record(EpochRecord rec, double loss_pre) {
  rec.alpha = 0.0;
  rec.loss_post = loss_pre;
  fill_g_stats(rec, bank_.reference_g());
  bank_.recenter(ParamVector::Zero(bank_.param_dim()), bank_.reference_g());
  return rec;
}

EpochRecord ScpoTrainer::step(const Batch& batch) {
  const auto start = std::chrono::steady_clock::now();
  const NetSpec& spec = net_.spec();
  const ParamVector theta = net_.params();
  const SafetyMetric& metric = task_.metric();

  EpochRecord rec;
  rec.epoch = epoch_;

  auto [loss_pre, grad] =
      net_.loss_and_grad(batch, LossKind::kMeanSquaredError);
  rec.loss_pre = loss_pre;

  // Alg. 1: the raw gradient step always becomes the newest bank column.
  // Metric failures surface here, before any state is touched.
  const ParamVector raw = -config_.eta * grad;
  Eigen::VectorXd g_raw = metric.evaluate(theta + raw);
  bank_.push(raw, std::move(g_raw));

  const Eigen::VectorXd g_ref = bank_.reference_g();
  SmoothnessVector initial_l = estimate_initial_L(bank_, g_ref);
  initial_l.growth_factor = config_.growth_factor;
  initial_l.max_doublings = config_.max_doublings;

  const AdaptiveProjection ap =
      adaptive_project_and_verify(bank_, g_ref, initial_l, metric, theta);
  rec.doublings = ap.doublings;
  rec.status = to_string(ap.result.status);
  rec.l_snapshot.assign(ap.smoothness.values.data(),
                        ap.smoothness.values.data() + ap.smoothness.values.size());

  const ParamVector& delta = ap.result.delta_star;
  rec.step_norm = delta.size() > 0 ? delta.norm() : 0.0;
  rec.grad_dot_step = delta.size() > 0 ? grad.dot(delta) : 0.0;

  if (rec.step_norm == 0.0) {
    // Fully blocked (or zero gradient): theta_{t+1} = theta_t.
    rec = make_zero_record(std::move(rec), loss_pre);
    epoch_ += 1;
    rec.wall_ms = elapsed_ms(start);
    return rec;
  }

  const auto loss_eval = [&](const ParamVector& p) {
    return mse_loss(spec, p, batch);
  };
  const ArmijoResult ls =
      armijo_search(loss_eval, theta, delta, config_.sigma, config_.shrink,
                    config_.max_backtracks);

  if (ls.alpha == 0.0) {
    rec = make_zero_record(std::move(rec), loss_pre);
    rec.status = "armijo-zero";
  } else {
    const ParamVector applied = ls.alpha * delta;
    // alpha = 1 is exactly the point the adaptive loop already verified;
    // shorter steps are only certified by the surrogate, so re-check.
    const Eigen::VectorXd g_new = ls.alpha == 1.0
                                      ? ap.verified_g
                                      : metric.evaluate(theta + applied);
    if (g_new.maxCoeff() > kSafetyTolerance) {
      rec = make_zero_record(std::move(rec), loss_pre);
      rec.status = "rolled-back";
    } else {
      net_.set_params(theta + applied);
      bank_.recenter(applied, g_new);
      rec.alpha = ls.alpha;
      rec.loss_post = ls.new_loss;
      fill_g_stats(rec, g_new);
    }
  }

  epoch_ += 1;
  rec.wall_ms = elapsed_ms(start);
  return rec;
}

SoftPenaltyTrainer::SoftPenaltyTrainer(const RegressionTask& task,
                                       TrainerConfig config)
    : task_(task), config_(validated(config)),
      net_(make_initial_net(task, config_)) {}

EpochRecord SoftPenaltyTrainer::step(const Batch& batch) {
  const auto start = std::chrono::steady_clock::now();
  const NetSpec& spec = net_.spec();
  const ParamVector theta = net_.params();
  const GridBoundMetric& metric = task_.grid_metric();

  EpochRecord rec;
  rec.epoch = epoch_;
  rec.status = "soft-penalty";

  auto [loss_pre, grad] =
      net_.loss_and_grad(batch, LossKind::kMeanSquaredError);
  rec.loss_pre = loss_pre;

  // Subgradient of lambda * 1^T relu(g): active grid nodes contribute
  // sign(pi(v_j)) * d pi(v_j)/d theta; g_j > 0 implies |pi(v_j)| > 0.
  const Eigen::VectorXd g = metric.evaluate(theta);
  ParamVector total = grad;
  if (config_.lambda_pen > 0.0) {
    ParamVector penalty = ParamVector::Zero(theta.size());
    for (int j = 0; j < g.size(); ++j) {
      if (g[j] <= 0.0) continue;
      const Eigen::VectorXd vj = Eigen::VectorXd::Constant(1, metric.grid()[j]);
      const ForwardTrace trace(spec, theta, vj);
      Eigen::VectorXd cot(1);
      cot << (trace.output()(0) >= 0.0 ? 1.0 : -1.0);
      trace.backward(cot, penalty);
    }
    total += config_.lambda_pen * penalty;
  }

  const ParamVector applied = -config_.eta * total;
  net_.set_params(theta + applied);

  rec.alpha = 1.0;
  rec.step_norm = applied.norm();
  rec.grad_dot_step = grad.dot(applied);
  rec.loss_post = mse_loss(spec, net_.params(), batch);
  fill_g_stats(rec, metric.evaluate(net_.params()));

  epoch_ += 1;
  rec.wall_ms = elapsed_ms(start);
  return rec;
}

namespace {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir,
                                      int epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
  return dir / name;
}

template <typename Trainer, typename TaskT>
TrainResult run_training(Trainer& trainer, const TaskT& task,
                         const TrainerConfig& config,
                         const std::filesystem::path& checkpoint_dir) {
  TrainLog log;
  log.seed = config.rng_seed;
  std::mt19937_64 rng(config.rng_seed);
  if (!checkpoint_dir.empty()) {
    std::filesystem::create_directories(checkpoint_dir);
  }
  for (int e = 0; e < config.epochs; ++e) {
    const Batch batch =
        task.sample_batch(trainer.net().params(), config.batch_size, rng);
    log.records.push_back(trainer.step(batch));
    if (!checkpoint_dir.empty()) {
      save_checkpoint(checkpoint_path(checkpoint_dir, e).string(),
                      trainer.net().spec(), trainer.net().params());
    }
  }
  return TrainResult{trainer.net(), std::move(log)};
}

}  // namespace

TrainResult train_scpo(const Task& task, const TrainerConfig& config,
                       const std::filesystem::path& checkpoint_dir) {
  config.validate();
  ScpoTrainer trainer(task, config);
  return run_training(trainer, task, config, checkpoint_dir);
}

TrainResult train_soft_penalty(const RegressionTask& task,
                               const TrainerConfig& config,
                               const std::filesystem::path& checkpoint_dir) {
  config.validate();
  SoftPenaltyTrainer trainer(task, config);
  return run_training(trainer, task, config, checkpoint_dir);
}

}  // namespace scpo
