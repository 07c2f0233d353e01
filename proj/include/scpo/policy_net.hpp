#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace scpo {

// Flat vector of every trainable parameter. All weight-space arithmetic
// (bank deltas, projections, gradient steps) happens on this representation.
using ParamVector = Eigen::VectorXd;

enum class Activation { kTanh, kRelu };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation act);

/// Shape of a residual network: `num_blocks` fully connected hidden layers of
/// uniform width followed by one affine output layer.
struct NetSpec {
  int input_dim = 1;
  int output_dim = 1;
  int hidden_width = 64;
  int num_blocks = 7;
  Activation activation = Activation::kTanh;
  std::uint64_t rng_seed = 0;

  int param_count() const;
  void validate() const;

  bool operator==(const NetSpec&) const = default;
};

// Layout of one affine layer inside the flat parameter vector. Weights are
// stored column-major (out x in), immediately followed by the bias.
struct LayerShape {
  int in = 0;
  int out = 0;
  int weight_offset = 0;
  int bias_offset = 0;
  bool hidden = true;
};

std::vector<LayerShape> layer_shapes(const NetSpec& spec);

/// Stateless forward pass; pure in (spec, params, x).
Eigen::VectorXd forward(const NetSpec& spec, const ParamVector& params,
                        const Eigen::VectorXd& x);

/// One forward pass with recorded activations, reusable for a single reverse
/// sweep. The referenced params must outlive the trace.
class ForwardTrace {
 public:
  ForwardTrace(const NetSpec& spec, const ParamVector& params,
               const Eigen::VectorXd& x);

  const Eigen::VectorXd& output() const { return output_; }

  // Accumulates d(output)^T * cotangent into grad (length param_count).
  void backward(const Eigen::VectorXd& out_cotangent, ParamVector& grad) const;

 private:
  const NetSpec& spec_;
  const ParamVector& params_;
  std::vector<Eigen::VectorXd> layer_inputs_;  // input fed to each affine layer
  std::vector<Eigen::VectorXd> pre_acts_;      // hidden pre-activations
  Eigen::VectorXd output_;
};

enum class LossKind { kMeanSquaredError };

// One sample per row.
struct Batch {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;

  int size() const { return static_cast<int>(inputs.rows()); }
};

double mse_loss(const NetSpec& spec, const ParamVector& params,
                const Batch& batch);

/// Mean batch loss and its exact analytic gradient.
std::pair<double, ParamVector> loss_and_grad(const NetSpec& spec,
                                             const ParamVector& params,
                                             const Batch& batch,
                                             LossKind kind);

/// Residual policy network. Hidden layers come from a seeded fan-in uniform
/// scheme; the output layer starts at exactly zero, so a freshly constructed
/// network maps every input to the zero vector.
class PolicyNet {
 public:
  static PolicyNet init_zero_residual(const NetSpec& spec);

  const NetSpec& spec() const { return spec_; }
  const ParamVector& params() const { return params_; }
  void set_params(const ParamVector& params);

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
    return scpo::forward(spec_, params_, x);
  }

  std::pair<double, ParamVector> loss_and_grad(const Batch& batch,
                                               LossKind kind) const {
    return scpo::loss_and_grad(spec_, params_, batch, kind);
  }

 private:
  PolicyNet(NetSpec spec, ParamVector params)
      : spec_(spec), params_(std::move(params)) {}

  NetSpec spec_;
  ParamVector params_;
};

// Checkpoint file: binary header (spec fields) followed by the raw parameter
// doubles. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const NetSpec& spec,
                     const ParamVector& params);
std::pair<NetSpec, ParamVector> load_checkpoint(const std::string& path);

}  // namespace scpo
