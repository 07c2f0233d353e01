#include "scpo/safety_metric.hpp"

#include <cmath>
#include <stdexcept>

namespace scpo {

GridBoundMetric::GridBoundMetric(NetSpec spec, int grid_size, double lo,
                                 double hi, double bound)
    : spec_(spec), bound_(bound) {
  spec_.validate();
  if (spec_.input_dim != 1 || spec_.output_dim != 1) {
    throw std::invalid_argument("GridBoundMetric requires a scalar network");
  }
  if (grid_size < 2) {
    throw std::invalid_argument("GridBoundMetric: grid_size must be >= 2");
  }
  grid_ = Eigen::VectorXd::LinSpaced(grid_size, lo, hi);
}

Eigen::VectorXd GridBoundMetric::evaluate(const ParamVector& params) const {
  Eigen::VectorXd g(grid_.size());
  Eigen::VectorXd x(1);
  for (Eigen::Index j = 0; j < grid_.size(); ++j) {
    x[0] = grid_[j];
    g[j] = std::abs(forward(spec_, params, x)[0]) - bound_;
  }
  return g;
}

ViolationSummary violation_summary(const Eigen::VectorXd& g) {
  ViolationSummary s;
  if (g.size() == 0) return s;
  s.raw_l1 = g.array().abs().sum() / static_cast<double>(g.size());
  s.positive_l1 = g.array().max(0.0).sum() / static_cast<double>(g.size());
  return s;
}

}  // namespace scpo
