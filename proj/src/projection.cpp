#include "scpo/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>

namespace scpo {

namespace {

constexpr double kSentinelClamp = 1e12;   // stand-in for +/-inf safety values
constexpr double kHessianReg = 1e-10;     // Newton regularization only
constexpr double kBarrierMu = 10.0;       // outer barrier decrease factor
constexpr double kGapTarget = 1e-10;      // certified duality gap at exit
constexpr int kMaxNewtonTotal = 400;      // across all outer stages

double sanitize(double v) {
  if (std::isnan(v)) return kSentinelClamp;
  return std::clamp(v, -kSentinelClamp, kSentinelClamp);
}

}  // namespace

UpdateBank::UpdateBank(int capacity, int param_dim, Eigen::VectorXd reference_g)
    : capacity_(capacity), param_dim_(param_dim),
      reference_g_(std::move(reference_g)) {
  if (capacity_ < 1) throw std::invalid_argument("UpdateBank: capacity must be >= 1");
  if (param_dim_ < 1) throw std::invalid_argument("UpdateBank: param_dim must be >= 1");
  if (reference_g_.size() < 1) {
    throw std::invalid_argument("UpdateBank: reference_g must be non-empty");
  }
}

void UpdateBank::push(ParamVector delta, Eigen::VectorXd g_value) {
  if (delta.size() != param_dim_) {
    throw std::invalid_argument("UpdateBank::push: delta dimension mismatch");
  }
  if (g_value.size() != reference_g_.size()) {
    throw std::invalid_argument("UpdateBank::push: g_value dimension mismatch");
  }
  entries_.push_back({std::move(delta), std::move(g_value)});
  while (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
}

void UpdateBank::recenter(const ParamVector& applied,
                          Eigen::VectorXd new_reference_g) {
  if (applied.size() != param_dim_) {
    throw std::invalid_argument("UpdateBank::recenter: applied dimension mismatch");
  }
  if (new_reference_g.size() != reference_g_.size()) {
    throw std::invalid_argument("UpdateBank::recenter: reference dimension mismatch");
  }
  for (auto& e : entries_) e.delta -= applied;
  reference_g_ = std::move(new_reference_g);
}

ParamVector UpdateBank::combine(const Eigen::VectorXd& c) const {
  if (c.size() != size()) {
    throw std::invalid_argument("UpdateBank::combine: coefficient length mismatch");
  }
  ParamVector out = ParamVector::Zero(param_dim_);
  for (int i = 0; i < size(); ++i) out += c[i] * entries_[static_cast<size_t>(i)].delta;
  return out;
}

Eigen::MatrixXd UpdateBank::g_matrix() const {
  Eigen::MatrixXd G(constraint_dim(), size());
  for (int i = 0; i < size(); ++i) G.col(i) = entries_[static_cast<size_t>(i)].g_value;
  return G;
}

Eigen::MatrixXd UpdateBank::gram() const {
  const int m = size();
  Eigen::MatrixXd S(m, m);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j <= i; ++j) {
      const double v = entries_[static_cast<size_t>(i)].delta.dot(
          entries_[static_cast<size_t>(j)].delta);
      S(i, j) = v;
      S(j, i) = v;
    }
  }
  return S;
}

GramData make_gram(const UpdateBank& bank) {
  GramData g;
  g.S = bank.gram();
  g.diag_s = g.S.diagonal();
  g.e_m = Eigen::VectorXd::Unit(bank.size(), bank.size() - 1);
  return g;
}

const char* to_string(ProjectionStatus status) {
  switch (status) {
    case ProjectionStatus::kRawStepFeasible: return "raw-step-feasible";
    case ProjectionStatus::kProjected: return "projected";
    case ProjectionStatus::kZeroStep: return "zero-step";
    case ProjectionStatus::kInfeasibleFallback: return "infeasible-fallback";
  }
  return "unknown";
}

Eigen::VectorXd constraint_values(const ProjectionProblem& problem,
                                  const Eigen::VectorXd& c) {
  const double ones_c = c.sum();
  const double quad = c.dot(problem.S * c) + c.cwiseAbs().dot(problem.diag_s);
  Eigen::VectorXd h = (1.0 - ones_c) * problem.g_ref + problem.G * c;
  h += 0.5 * quad * problem.L;
  return h;
}

double projection_objective(const ProjectionProblem& problem,
                            const Eigen::VectorXd& c) {
  const Eigen::VectorXd r = c - Eigen::VectorXd::Unit(problem.m(), problem.m() - 1);
  return r.dot(problem.S * r);
}

ProjectionProblem build_problem(const UpdateBank& bank,
                                const Eigen::VectorXd& g_ref,
                                const SmoothnessVector& smoothness) {
  if (bank.empty()) throw std::invalid_argument("build_problem: empty bank");
  if (g_ref.size() != bank.constraint_dim()) {
    throw std::invalid_argument("build_problem: g_ref dimension mismatch");
  }
  if (smoothness.values.size() != g_ref.size()) {
    throw std::invalid_argument("build_problem: smoothness dimension mismatch");
  }
  if (g_ref.maxCoeff() > kSafetyTolerance) {
    throw std::invalid_argument(
        "build_problem: reference point violates the safety constraint");
  }
  if (smoothness.values.minCoeff() < 0.0) {
    throw std::invalid_argument("build_problem: negative smoothness constant");
  }

  ProjectionProblem p;
  p.S = bank.gram();
  p.diag_s = p.S.diagonal();
  p.G = bank.g_matrix().unaryExpr([](double v) { return sanitize(v); });
  p.g_ref = g_ref.unaryExpr([](double v) { return sanitize(v); });
  p.L = smoothness.values;
  return p;
}

namespace {

// Barrier subproblem state for the lifted program in z = (c, a_I), where
// I = lifted indices (diagS_i > 0 and max L > 0). Constraints, in order:
// k smoothness constraints, then the pair a_i >= +/-c_i for each lifted i.
struct LiftedProgram {
  const ProjectionProblem* p;
  std::vector<int> lifted;   // indices of c with an |c| companion variable
  int m;
  int k;
  int n;                     // m + lifted.size()

  int num_constraints() const { return k + 2 * static_cast<int>(lifted.size()); }

  Eigen::VectorXd constraints(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd c = z.head(m);
    Eigen::VectorXd h(num_constraints());
    const double ones_c = c.sum();
    double lifted_mass = 0.0;  // |c|^T diagS with a standing in for |c|
    for (size_t t = 0; t < lifted.size(); ++t) {
      lifted_mass += p->diag_s[lifted[t]] * z[m + static_cast<int>(t)];
    }
    const double quad = c.dot(p->S * c) + lifted_mass;
    h.head(k) = (1.0 - ones_c) * p->g_ref + p->G * c + 0.5 * quad * p->L;
    for (size_t t = 0; t < lifted.size(); ++t) {
      const int i = lifted[t];
      const double a = z[m + static_cast<int>(t)];
      h[k + 2 * static_cast<int>(t)] = c[i] - a;
      h[k + 2 * static_cast<int>(t) + 1] = -c[i] - a;
    }
    return h;
  }

  // Gradient of constraint row j at z.
  Eigen::VectorXd constraint_grad(const Eigen::VectorXd& z, int j) const {
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
    if (j < k) {
      const Eigen::VectorXd c = z.head(m);
      grad.head(m) = Eigen::VectorXd::Constant(m, -p->g_ref[j]) +
                     p->G.row(j).transpose() + p->L[j] * (p->S * c);
      for (size_t t = 0; t < lifted.size(); ++t) {
        grad[m + static_cast<int>(t)] = 0.5 * p->L[j] * p->diag_s[lifted[t]];
      }
    } else {
      const int t = (j - k) / 2;
      const int i = lifted[static_cast<size_t>(t)];
      grad[i] = ((j - k) % 2 == 0) ? 1.0 : -1.0;
      grad[m + t] = -1.0;
    }
    return grad;
  }
};

struct BarrierEval {
  double value = 0.0;
  bool feasible = false;  // all constraints strictly negative
};

BarrierEval barrier_value(const LiftedProgram& lp, double t_barrier,
                          const Eigen::VectorXd& e_m, const Eigen::VectorXd& z) {
  BarrierEval out;
  const Eigen::VectorXd c = z.head(lp.m);
  const Eigen::VectorXd r = c - e_m;
  double val = t_barrier * r.dot(lp.p->S * r);
  const Eigen::VectorXd h = lp.constraints(z);
  for (int j = 0; j < h.size(); ++j) {
    if (!(h[j] < 0.0)) return out;  // outside the domain of the barrier
    val -= std::log(-h[j]);
  }
  out.value = val;
  out.feasible = true;
  return out;
}

}  // namespace

ProjectionResult solve_projection(const ProjectionProblem& problem) {
  const int m = problem.m();
  const int k = problem.k();
  const Eigen::VectorXd e_m = Eigen::VectorXd::Unit(m, m - 1);

  ProjectionResult result;
  result.c_star = Eigen::VectorXd::Zero(m);

  // Raw step first: at c = e_m the reference term vanishes and the
  // constraint collapses to G_{.,m} + diagS_m * L <= 0.
  {
    const Eigen::VectorXd h_raw = constraint_values(problem, e_m);
    if (h_raw.maxCoeff() <= 0.0) {
      result.c_star = e_m;
      result.objective = 0.0;
      result.status = ProjectionStatus::kRawStepFeasible;
      return result;
    }
  }

  // Work on a normalized copy: dividing S and diagS by s and multiplying L
  // by s leaves every constraint value identical while keeping the objective
  // Hessian O(1). The reported objective is recomputed against the original.
  ProjectionProblem np = problem;
  const double s_scale = problem.diag_s.size() > 0 ? problem.diag_s.maxCoeff() : 0.0;
  if (s_scale > 0.0) {
    np.S /= s_scale;
    np.diag_s /= s_scale;
    np.L *= s_scale;
  }
  // The solver's reference must be weakly safe; the trainer admits values up
  // to kSafetyTolerance, which we pull onto the boundary.
  np.g_ref = np.g_ref.cwiseMin(0.0);

  const double max_L = np.L.size() > 0 ? np.L.maxCoeff() : 0.0;
  LiftedProgram lp;
  lp.p = &np;
  lp.m = m;
  lp.k = k;
  for (int i = 0; i < m; ++i) {
    if (np.diag_s[i] > 0.0 && max_L > 0.0) lp.lifted.push_back(i);
  }
  lp.n = m + static_cast<int>(lp.lifted.size());

  // Strictly feasible start c = 0, a = eps. Every g_ref_j <= -worst after
  // clamping, and eps is sized so the lift mass eats at most a quarter of
  // that margin. worst == 0 means the interior is empty at c = 0.
  double lift_mass_coeff = 0.0;
  for (int i : lp.lifted) lift_mass_coeff += np.diag_s[i];
  const double worst = -np.g_ref.maxCoeff();
  double eps = 0.0;
  if (worst > 0.0) {
    eps = std::min(1e-2, 0.5 * worst / (2.0 + max_L * lift_mass_coeff));
  }
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    result.status = ProjectionStatus::kInfeasibleFallback;
    result.objective = projection_objective(problem, result.c_star);
    return result;
  }

  Eigen::VectorXd z = Eigen::VectorXd::Zero(lp.n);
  z.tail(lp.n - m).setConstant(eps);
  {
    const Eigen::VectorXd h0 = lp.constraints(z);
    if (!(h0.maxCoeff() < 0.0)) {
      result.status = ProjectionStatus::kInfeasibleFallback;
      result.objective = projection_objective(problem, result.c_star);
      return result;
    }
  }

  const int p_total = lp.num_constraints();
  double t_barrier = 1.0;
  int newton_used = 0;
  bool converged = false;
  bool budget_exhausted = false;

  while (true) {
    // Damped Newton on t*f + barrier at the current t.
    for (;;) {
      if (++newton_used > kMaxNewtonTotal) {
        budget_exhausted = true;
        break;
      }
      const Eigen::VectorXd h = lp.constraints(z);
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(lp.n);
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(lp.n, lp.n);
      const Eigen::VectorXd c = z.head(m);
      grad.head(m) = t_barrier * 2.0 * (np.S * (c - e_m));
      hess.topLeftCorner(m, m) = t_barrier * 2.0 * np.S;
      for (int j = 0; j < p_total; ++j) {
        const Eigen::VectorXd gj = lp.constraint_grad(z, j);
        const double inv = -1.0 / h[j];  // positive
        grad += inv * gj;
        hess += (inv * inv) * (gj * gj.transpose());
        if (j < k && np.L[j] > 0.0) {
          hess.topLeftCorner(m, m) += inv * np.L[j] * np.S;
        }
      }
      hess.diagonal().array() += kHessianReg;

      const Eigen::VectorXd step = hess.ldlt().solve(-grad);
      const double decrement = -grad.dot(step);
      // Newton decrement lambda^2; lambda <= 0.01 keeps the gap certificate
      // p/t essentially exact, and a scale-free threshold stays reachable
      // when t * objective dwarfs double precision.
      if (!(decrement > 1e-4)) break;

      const BarrierEval base = barrier_value(lp, t_barrier, e_m, z);
      double alpha = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Eigen::VectorXd cand = z + alpha * step;
        const BarrierEval ev = barrier_value(lp, t_barrier, e_m, cand);
        if (ev.feasible && ev.value <= base.value - 0.25 * alpha * decrement) {
          z = cand;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved) break;
    }

    if (budget_exhausted) break;
    if (static_cast<double>(p_total) / t_barrier <= kGapTarget) {
      converged = true;
      break;
    }
    t_barrier *= kBarrierMu;
  }

  if (!converged) {
    result.c_star = Eigen::VectorXd::Zero(m);
    result.status = ProjectionStatus::kZeroStep;
    result.objective = projection_objective(problem, result.c_star);
    return result;
  }

  result.c_star = z.head(m);
  result.status = ProjectionStatus::kProjected;
  result.objective = projection_objective(problem, result.c_star);
  return result;
}

SmoothnessVector estimate_initial_L(const UpdateBank& bank,
                                    const Eigen::VectorXd& g_ref) {
  if (bank.empty()) throw std::invalid_argument("estimate_initial_L: empty bank");
  const int kdim = bank.constraint_dim();
  SmoothnessVector out;
  out.values = Eigen::VectorXd::Zero(kdim);
  const Eigen::VectorXd ref = g_ref.unaryExpr([](double v) { return sanitize(v); });
  for (int i = 0; i < bank.size(); ++i) {
    const BankEntry& e = bank.entry(i);
    const double nn = e.delta.squaredNorm();
    if (nn == 0.0) continue;
    for (int j = 0; j < kdim; ++j) {
      const double gij = sanitize(e.g_value[j]);
      out.values[j] = std::max(out.values[j], 2.0 * std::abs(gij - ref[j]) / nn);
    }
  }
  return out;
}

AdaptiveProjection adaptive_project_and_verify(const UpdateBank& bank,
                                               const Eigen::VectorXd& g_ref,
                                               const SmoothnessVector& initial_L,
                                               const SafetyMetric& metric,
                                               const ParamVector& theta) {
  AdaptiveProjection out;
  out.smoothness = initial_L;

  for (int attempt = 0; attempt <= initial_L.max_doublings; ++attempt) {
    const ProjectionProblem problem = build_problem(bank, g_ref, out.smoothness);
    ProjectionResult res = solve_projection(problem);
    res.delta_star = bank.combine(res.c_star);

    if (res.status == ProjectionStatus::kZeroStep ||
        res.status == ProjectionStatus::kInfeasibleFallback ||
        res.delta_star.isZero(0.0)) {
      // Nothing moved; the reference value is already the verified g.
      out.result = std::move(res);
      out.verified_g = g_ref;
      out.doublings = attempt;
      return out;
    }

    const Eigen::VectorXd g_cand = metric.evaluate(theta + res.delta_star);
    if (g_cand.maxCoeff() <= kSafetyTolerance) {
      out.result = std::move(res);
      out.verified_g = g_cand;
      out.doublings = attempt;
      return out;
    }
    if (attempt == initial_L.max_doublings) break;
    out.smoothness.values *= out.smoothness.growth_factor;
  }

  // Exhausted the budget: take the zero step, which keeps theta and g_ref.
  const int m = bank.size();
  out.result.c_star = Eigen::VectorXd::Zero(m);
  out.result.delta_star = ParamVector::Zero(bank.param_dim());
  out.result.status = ProjectionStatus::kZeroStep;
  {
    const GramData gd = make_gram(bank);
    const Eigen::VectorXd r = -gd.e_m;
    out.result.objective = r.dot(gd.S * r);
  }
  out.verified_g = g_ref;
  out.doublings = initial_L.max_doublings;
  return out;
}

ArmijoResult armijo_search(const std::function<double(const ParamVector&)>& loss_eval,
                           const ParamVector& theta, const ParamVector& delta,
                           double sigma, double shrink, int max_backtracks) {
  if (delta.size() != theta.size()) {
    throw std::invalid_argument("armijo_search: dimension mismatch");
  }
  if (delta.isZero(0.0)) {
    throw std::invalid_argument("armijo_search: zero step direction");
  }
  if (!(sigma > 0.0 && sigma < 1.0) || !(shrink > 0.0 && shrink < 1.0)) {
    throw std::invalid_argument("armijo_search: sigma and shrink must lie in (0,1)");
  }

  ArmijoResult out;
  out.base_loss = loss_eval(theta);
  out.new_loss = out.base_loss;
  const double dn2 = delta.squaredNorm();
  double alpha = 1.0;
  for (int i = 0; i <= max_backtracks; ++i) {
    const double cand = loss_eval(theta + alpha * delta);
    if (cand <= out.base_loss - sigma * alpha * dn2) {
      out.alpha = alpha;
      out.new_loss = cand;
      out.backtracks = i;
      return out;
    }
    alpha *= shrink;
  }
  out.alpha = 0.0;
  out.backtracks = max_backtracks + 1;
  return out;
}

}  // namespace scpo
