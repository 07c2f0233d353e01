#pragma once

#include <Eigen/Core>

#include "scpo/policy_net.hpp"

namespace scpo {

/// Pluggable map from parameters to a vector of k safety values. Safe means
/// every component <= 0. Implementations must be deterministic and expose
/// pointwise values only -- callers never ask for gradients.
class SafetyMetric {
 public:
  virtual ~SafetyMetric() = default;
  virtual int dimension() const = 0;
  virtual Eigen::VectorXd evaluate(const ParamVector& params) const = 0;
};

/// |policy(v_j)| - bound on a fixed input grid; one component per grid point.
class GridBoundMetric : public SafetyMetric {
 public:
  GridBoundMetric(NetSpec spec, int grid_size = 64, double lo = -3.0,
                  double hi = 3.0, double bound = 1.4);

  int dimension() const override { return static_cast<int>(grid_.size()); }
  Eigen::VectorXd evaluate(const ParamVector& params) const override;

  const Eigen::VectorXd& grid() const { return grid_; }
  double bound() const { return bound_; }
  const NetSpec& net_spec() const { return spec_; }

 private:
  NetSpec spec_;
  Eigen::VectorXd grid_;
  double bound_;
};

struct ViolationSummary {
  double raw_l1 = 0.0;       // ||g||_1 / k
  double positive_l1 = 0.0;  // ||max(g, 0)||_1 / k
};

ViolationSummary violation_summary(const Eigen::VectorXd& g);

}  // namespace scpo
