#include "scpo/policy_net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "scpo/rng.hpp"

namespace scpo {

namespace {

void apply_activation(Eigen::VectorXd& v, Activation act) {
  switch (act) {
    case Activation::kTanh:
      v = v.array().tanh();
      break;
    case Activation::kRelu:
      v = v.cwiseMax(0.0);
      break;
  }
}

Eigen::VectorXd activation_derivative(const Eigen::VectorXd& pre,
                                      Activation act) {
  switch (act) {
    case Activation::kTanh: {
      Eigen::VectorXd t = pre.array().tanh();
      return 1.0 - t.array().square();
    }
    case Activation::kRelu:
      return (pre.array() > 0.0).cast<double>();
  }
  return Eigen::VectorXd();
}

}  // namespace

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string to_string(Activation act) {
  return act == Activation::kTanh ? "tanh" : "relu";
}

void NetSpec::validate() const {
  if (input_dim <= 0 || output_dim <= 0 || hidden_width <= 0 ||
      num_blocks <= 0) {
    throw std::invalid_argument("NetSpec dimensions must be positive");
  }
}

std::vector<LayerShape> layer_shapes(const NetSpec& spec) {
  std::vector<LayerShape> shapes;
  shapes.reserve(spec.num_blocks + 1);
  int offset = 0;
  int in = spec.input_dim;
  for (int b = 0; b < spec.num_blocks; ++b) {
    LayerShape s{in, spec.hidden_width, offset, offset + spec.hidden_width * in,
                 true};
    offset = s.bias_offset + s.out;
    shapes.push_back(s);
    in = spec.hidden_width;
  }
  LayerShape out{in, spec.output_dim, offset, offset + spec.output_dim * in,
                 false};
  shapes.push_back(out);
  return shapes;
}

int NetSpec::param_count() const {
  validate();
  const auto shapes = layer_shapes(*this);
  const LayerShape& last = shapes.back();
  return last.bias_offset + last.out;
}

Eigen::VectorXd forward(const NetSpec& spec, const ParamVector& params,
                        const Eigen::VectorXd& x) {
  if (x.size() != spec.input_dim) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  if (params.size() != spec.param_count()) {
    throw std::invalid_argument("forward: parameter vector length mismatch");
  }
  const double* p = params.data();
  Eigen::VectorXd h = x;
  for (const LayerShape& s : layer_shapes(spec)) {
    Eigen::Map<const Eigen::MatrixXd> W(p + s.weight_offset, s.out, s.in);
    Eigen::Map<const Eigen::VectorXd> b(p + s.bias_offset, s.out);
    h = (W * h + b).eval();
    if (s.hidden) apply_activation(h, spec.activation);
  }
  return h;
}

ForwardTrace::ForwardTrace(const NetSpec& spec, const ParamVector& params,
                           const Eigen::VectorXd& x)
    : spec_(spec), params_(params) {
  if (x.size() != spec.input_dim) {
    throw std::invalid_argument("trace: input dimension mismatch");
  }
  if (params.size() != spec.param_count()) {
    throw std::invalid_argument("trace: parameter vector length mismatch");
  }
  const double* p = params.data();
  Eigen::VectorXd h = x;
  for (const LayerShape& s : layer_shapes(spec)) {
    Eigen::Map<const Eigen::MatrixXd> W(p + s.weight_offset, s.out, s.in);
    Eigen::Map<const Eigen::VectorXd> b(p + s.bias_offset, s.out);
    layer_inputs_.push_back(h);
    h = (W * h + b).eval();
    if (s.hidden) {
      pre_acts_.push_back(h);
      apply_activation(h, spec.activation);
    }
  }
  output_ = std::move(h);
}

void ForwardTrace::backward(const Eigen::VectorXd& out_cotangent,
                            ParamVector& grad) const {
  if (out_cotangent.size() != spec_.output_dim) {
    throw std::invalid_argument("backward: cotangent dimension mismatch");
  }
  if (grad.size() != params_.size()) {
    throw std::invalid_argument("backward: gradient accumulator mismatch");
  }
  const auto shapes = layer_shapes(spec_);
  const double* p = params_.data();
  double* g = grad.data();

  Eigen::VectorXd delta = out_cotangent;
  for (int l = static_cast<int>(shapes.size()) - 1; l >= 0; --l) {
    const LayerShape& s = shapes[l];
    if (s.hidden) {
      delta.array() *=
          activation_derivative(pre_acts_[l], spec_.activation).array();
    }
    Eigen::Map<Eigen::MatrixXd> gW(g + s.weight_offset, s.out, s.in);
    Eigen::Map<Eigen::VectorXd> gb(g + s.bias_offset, s.out);
    gW.noalias() += delta * layer_inputs_[l].transpose();
    gb += delta;
    if (l > 0) {
      Eigen::Map<const Eigen::MatrixXd> W(p + s.weight_offset, s.out, s.in);
      delta = (W.transpose() * delta).eval();
    }
  }
}

double mse_loss(const NetSpec& spec, const ParamVector& params,
                const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("empty batch");
  double loss = 0.0;
  for (int i = 0; i < batch.size(); ++i) {
    const Eigen::VectorXd y =
        forward(spec, params, batch.inputs.row(i).transpose());
    loss += (y - batch.targets.row(i).transpose()).squaredNorm();
  }
  return loss / batch.size();
}

std::pair<double, ParamVector> loss_and_grad(const NetSpec& spec,
                                             const ParamVector& params,
                                             const Batch& batch,
                                             LossKind kind) {
  if (kind != LossKind::kMeanSquaredError) {
    throw std::invalid_argument("unsupported loss kind");
  }
  const int n = batch.size();
  if (n == 0) throw std::invalid_argument("empty batch");
  double loss = 0.0;
  ParamVector grad = ParamVector::Zero(params.size());
  for (int i = 0; i < n; ++i) {
    ForwardTrace trace(spec, params, batch.inputs.row(i).transpose());
    const Eigen::VectorXd r =
        trace.output() - batch.targets.row(i).transpose();
    loss += r.squaredNorm();
    trace.backward((2.0 / n) * r, grad);
  }
  return {loss / n, grad};
}

PolicyNet PolicyNet::init_zero_residual(const NetSpec& spec) {
  spec.validate();
  ParamVector params = ParamVector::Zero(spec.param_count());
  std::mt19937_64 rng(spec.rng_seed);
  double* p = params.data();
  for (const LayerShape& s : layer_shapes(spec)) {
    if (!s.hidden) break;  // output layer stays zero
    const double scale = 1.0 / std::sqrt(static_cast<double>(s.in));
    for (int i = 0; i < s.out * s.in; ++i) {
      p[s.weight_offset + i] = scale * (2.0 * uniform01(rng) - 1.0);
    }
    // hidden biases stay zero
  }
  return PolicyNet(spec, std::move(params));
}

void PolicyNet::set_params(const ParamVector& params) {
  if (params.size() != spec_.param_count()) {
    throw std::invalid_argument("set_params: length mismatch");
  }
  params_ = params;
}

namespace {
constexpr char kCheckpointMagic[8] = {'S', 'C', 'P', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
}
}  // namespace

void save_checkpoint(const std::string& path, const NetSpec& spec,
                     const ParamVector& params) {
  if (params.size() != spec.param_count()) {
    throw std::invalid_argument("checkpoint: parameter length mismatch");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for write: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::int32_t>(spec.input_dim));
  write_pod(out, static_cast<std::int32_t>(spec.output_dim));
  write_pod(out, static_cast<std::int32_t>(spec.hidden_width));
  write_pod(out, static_cast<std::int32_t>(spec.num_blocks));
  write_pod(out, static_cast<std::uint32_t>(spec.activation));
  write_pod(out, spec.rng_seed);
  write_pod(out, static_cast<std::uint64_t>(params.size()));
  out.write(reinterpret_cast<const char*>(params.data()),
            static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

std::pair<NetSpec, ParamVector> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint32_t version = 0;
  read_pod(in, version);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version");
  }
  NetSpec spec;
  std::int32_t v = 0;
  read_pod(in, v); spec.input_dim = v;
  read_pod(in, v); spec.output_dim = v;
  read_pod(in, v); spec.hidden_width = v;
  read_pod(in, v); spec.num_blocks = v;
  std::uint32_t act = 0;
  read_pod(in, act);
  spec.activation = static_cast<Activation>(act);
  read_pod(in, spec.rng_seed);
  std::uint64_t d = 0;
  read_pod(in, d);
  spec.validate();
  if (d != static_cast<std::uint64_t>(spec.param_count())) {
    throw std::runtime_error("checkpoint parameter count mismatch");
  }
  ParamVector params(d);
  in.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(d * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  return {spec, std::move(params)};
}

}  // namespace scpo
