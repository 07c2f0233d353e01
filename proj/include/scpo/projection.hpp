#pragma once

#include <deque>
#include <functional>

#include <Eigen/Core>

#include "scpo/policy_net.hpp"
#include "scpo/safety_metric.hpp"

namespace scpo {

/// Accepted iterates must satisfy max_j g_j <= this slack.
inline constexpr double kSafetyTolerance = 1e-9;
/// Feasibility / KKT tolerance for the projection QCQP.
inline constexpr double kConstraintTolerance = 1e-8;

struct BankEntry {
  ParamVector delta;       // candidate update relative to the current iterate
  Eigen::VectorXd g_value; // safety evaluation at theta_t + delta
};

/// Bounded FIFO of candidate updates D (columns) with their safety
/// evaluations G, plus the verified safety vector at the current reference
/// point. The trainer keeps the raw gradient step as the newest entry.
class UpdateBank {
 public:
  UpdateBank(int capacity, int param_dim, Eigen::VectorXd reference_g);

  void push(ParamVector delta, Eigen::VectorXd g_value);

  /// Shift every delta by -applied so entries are expressed relative to the
  /// new iterate theta_{t+1} = theta_t + applied. Stored g_values still
  /// describe the same absolute points, so they are kept as-is.
  void recenter(const ParamVector& applied, Eigen::VectorXd new_reference_g);

  int size() const { return static_cast<int>(entries_.size()); }
  int capacity() const { return capacity_; }
  int param_dim() const { return param_dim_; }
  int constraint_dim() const { return static_cast<int>(reference_g_.size()); }
  bool empty() const { return entries_.empty(); }

  const BankEntry& entry(int i) const { return entries_.at(static_cast<size_t>(i)); }
  const Eigen::VectorXd& reference_g() const { return reference_g_; }

  /// D c for a coefficient vector of length size().
  ParamVector combine(const Eigen::VectorXd& c) const;
  /// G as a k x m matrix (one column per entry, oldest first).
  Eigen::MatrixXd g_matrix() const;
  /// S = D^T D, exact by construction (S_ij = <delta_i, delta_j>).
  Eigen::MatrixXd gram() const;

 private:
  int capacity_;
  int param_dim_;
  Eigen::VectorXd reference_g_;
  std::deque<BankEntry> entries_;
};

struct GramData {
  Eigen::MatrixXd S;       // m x m, positive semidefinite
  Eigen::VectorXd diag_s;  // ||delta_i||^2, equals diagonal of S
  Eigen::VectorXd e_m;     // canonical last basis vector of R^m
};

GramData make_gram(const UpdateBank& bank);

/// Per-constraint local smoothness constants with the adaptation policy.
struct SmoothnessVector {
  Eigen::VectorXd values;      // L_j >= 0
  double growth_factor = 2.0;
  int max_doublings = 16;
};

enum class ProjectionStatus {
  kRawStepFeasible,    // c* = e_m, the raw step already satisfies Eq. constraints
  kProjected,          // interior-point solution, c* != e_m
  kZeroStep,           // fell back to c = 0 (non-convergence or failed verification)
  kInfeasibleFallback, // no strictly feasible interior start; returned c = 0
};

const char* to_string(ProjectionStatus status);

/// The sampled projection program in coefficient space:
///   min (c - e_m)^T S (c - e_m)
///   s.t. (1 - 1^T c) g_ref_j + [G c]_j + 0.5 (c^T S c + |c|^T diagS) L_j <= 0.
struct ProjectionProblem {
  Eigen::MatrixXd S;
  Eigen::VectorXd diag_s;
  Eigen::MatrixXd G;
  Eigen::VectorXd g_ref;
  Eigen::VectorXd L;

  int m() const { return static_cast<int>(S.rows()); }
  int k() const { return static_cast<int>(G.rows()); }
};

/// Left-hand side of every constraint at c (<= 0 means feasible).
Eigen::VectorXd constraint_values(const ProjectionProblem& problem,
                                  const Eigen::VectorXd& c);

/// Objective (c - e_m)^T S (c - e_m).
double projection_objective(const ProjectionProblem& problem,
                            const Eigen::VectorXd& c);

struct ProjectionResult {
  Eigen::VectorXd c_star;
  ParamVector delta_star;  // D c_star; empty until combined with a bank
  double objective = 0.0;
  ProjectionStatus status = ProjectionStatus::kZeroStep;
};

/// Assemble the program from the bank. Throws std::invalid_argument when the
/// reference is not safe (some g_ref_j > kSafetyTolerance) -- that would mean
/// the safety induction invariant is already broken. Non-finite entries of G
/// are clamped to +/-1e12 so unbounded safety sentinels stay representable.
ProjectionProblem build_problem(const UpdateBank& bank,
                                const Eigen::VectorXd& g_ref,
                                const SmoothnessVector& smoothness);

/// Solve the program: raw-step shortcut, then a log-barrier interior-point
/// method on the |c| <= a lift. Always returns a feasible point; on failure
/// to find a strict interior or to converge it returns c = 0 with the
/// corresponding fallback status. delta_star is left empty.
ProjectionResult solve_projection(const ProjectionProblem& problem);

/// L_j = max_i 2 |g_j(theta_t + delta_i) - g_ref_j| / ||delta_i||^2 over
/// nonzero-delta entries; all-zero banks give L = 0.
SmoothnessVector estimate_initial_L(const UpdateBank& bank,
                                    const Eigen::VectorXd& g_ref);

struct AdaptiveProjection {
  ProjectionResult result;      // delta_star filled in
  SmoothnessVector smoothness;  // L after any doublings
  Eigen::VectorXd verified_g;   // true metric value at theta_t + delta_star
  int doublings = 0;
};

/// Solve, then check the candidate against the true metric; on violation
/// multiply L by growth_factor and re-solve, up to max_doublings, after which
/// the zero step (always safe) is returned.
AdaptiveProjection adaptive_project_and_verify(const UpdateBank& bank,
                                               const Eigen::VectorXd& g_ref,
                                               const SmoothnessVector& initial_L,
                                               const SafetyMetric& metric,
                                               const ParamVector& theta);

struct ArmijoResult {
  double alpha = 0.0;
  double new_loss = 0.0;
  double base_loss = 0.0;
  int backtracks = 0;
};

/// Largest alpha in {1, shrink, shrink^2, ...} with
/// loss(theta + alpha*delta) <= loss(theta) - sigma*alpha*||delta||^2;
/// alpha = 0 when every candidate fails.
ArmijoResult armijo_search(const std::function<double(const ParamVector&)>& loss_eval,
                           const ParamVector& theta, const ParamVector& delta,
                           double sigma = 0.1, double shrink = 0.5,
                           int max_backtracks = 20);

}  // namespace scpo
