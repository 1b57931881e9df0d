#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ctorecon/disco.hpp"
#include "ctorecon/projector.hpp"
#include "ctorecon/spectral.hpp"
#include "ctorecon/tensor.hpp"

namespace ctorecon {

/// Named real vectors with a stable (lexicographic) ordering.
class ParamTree {
 public:
  void set(const std::string& name, std::vector<double> values) { leaves_[name] = std::move(values); }
  bool contains(const std::string& name) const { return leaves_.count(name) != 0; }
  std::vector<double>& at(const std::string& name);
  const std::vector<double>& at(const std::string& name) const;

  std::size_t leaf_count() const { return leaves_.size(); }
  std::size_t total_size() const;
  std::vector<std::string> names() const;

  std::vector<double> flatten() const;
  /// Overwrites the leaves (in name order) from `flat`; sizes must match.
  void unflatten(const std::vector<double>& flat);
  /// Same names and sizes, all zero.
  ParamTree zeros_like() const;

  auto begin() const { return leaves_.begin(); }
  auto end() const { return leaves_.end(); }
  auto begin() { return leaves_.begin(); }
  auto end() { return leaves_.end(); }

  bool operator==(const ParamTree& other) const { return leaves_ == other.leaves_; }

 private:
  std::map<std::string, std::vector<double>> leaves_;
};

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

enum class OpKind {
  Constant,
  Param,
  DiscoApply,
  ProjectorForward,
  ProjectorAdjoint,
  FftR,
  IfftR,
  RampFilter,
  Relu,
  ChannelMix,
  Downsample2,
  Upsample2,
  Add,
  Sub,
  Scale,
  ScaleBy,
  MseLoss,
  HalfSumSquares,
};

/// Reverse-mode tape. Every op records its inputs and whatever it needs for
/// the backward pass; nodes are stored in recording order, which is a
/// topological order.
class Tape {
 public:
  Var constant(Tensor value);
  /// Leaf bound to a parameter name; gradients are reported under that name.
  Var param(const std::string& name, Tensor value);

  /// DISCO layer with coefficients gain * coeffs, coeffs laid out [out][in][basis].
  Var disco_apply(Var x, Var coeffs, std::shared_ptr<const BasisOperator> table, std::size_t outChannels, double gain);
  /// x must be 1 x height x width; output 1 x views x detCount (and vice versa).
  Var projector_forward(Var x, std::shared_ptr<const ProjectorConfig> cfg);
  Var projector_adjoint(Var y, std::shared_ptr<const ProjectorConfig> cfg);
  /// Centred DFT along the column axis: 1 channel -> 2 (re, im) and back (real part).
  Var fft_r(Var x, std::shared_ptr<const spectral::CenteredDft> dft);
  Var ifft_r(Var z, std::shared_ptr<const spectral::CenteredDft> dft);
  Var ramp_filter(Var x, std::shared_ptr<const spectral::RampFilter> filter);
  Var relu(Var x);
  /// y[k] = sum_c w[k * C + c] x[c] + bias[k]; pass an invalid Var for no bias.
  Var channel_mix(Var x, Var weight, Var bias, std::size_t outChannels);
  /// 2x average pooling / nearest upsampling along the flagged axes.
  Var downsample2(Var x, bool axis0, bool axis1);
  Var upsample2(Var x, bool axis0, bool axis1);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var x, double s);
  /// Multiplies x by the scalar node s.
  Var scale_by(Var s, Var x);
  Var mse_loss(Var a, Var b);
  /// 0.5 * ||x||^2
  Var half_sum_squares(Var x);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of a scalar node with respect to every node.
  std::vector<Tensor> backward(Var loss) const;
  /// Gradients of a scalar node keyed by parameter name.
  ParamTree grad(Var loss) const;

  /// Test hook: forces a node's kind so the unsupported-op path can be exercised.
  void corrupt_for_testing(Var v, int rawKind) { nodes_.at(v.id).kind = static_cast<OpKind>(rawKind); }

 private:
  struct Node {
    OpKind kind = OpKind::Constant;
    Tensor value;
    std::vector<std::size_t> inputs;
    std::string name;
    double scalar = 0.0;
    std::size_t count = 0;
    bool flag0 = false;
    bool flag1 = false;
    std::vector<double> saved;
    std::shared_ptr<const BasisOperator> disco;
    std::shared_ptr<const ProjectorConfig> proj;
    std::shared_ptr<const spectral::CenteredDft> dft;
    std::shared_ptr<const spectral::RampFilter> ramp;
  };

  Var push(Node node);
  const Node& node(Var v) const { return nodes_.at(v.id); }

  std::vector<Node> nodes_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamTree m;
  ParamTree v;
  std::size_t step = 0;
};

/// Adam with bias correction. Leaves missing from `grads` are left untouched.
void adam_step(ParamTree& params, const ParamTree& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace ctorecon
