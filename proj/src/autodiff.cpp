#include "ctorecon/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "ctorecon/core.hpp"
#include "ctorecon/parallel.hpp"

namespace ctorecon {

// ---------------------------------------------------------------------------
// ParamTree

std::vector<double>& ParamTree::at(const std::string& name) {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) throw std::invalid_argument("ParamTree: no leaf named '" + name + "'");
  return it->second;
}

const std::vector<double>& ParamTree::at(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) throw std::invalid_argument("ParamTree: no leaf named '" + name + "'");
  return it->second;
}

std::size_t ParamTree::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, v] : leaves_) n += v.size();
  return n;
}

std::vector<std::string> ParamTree::names() const {
  std::vector<std::string> out;
  out.reserve(leaves_.size());
  for (const auto& [name, v] : leaves_) out.push_back(name);
  return out;
}

std::vector<double> ParamTree::flatten() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& [name, v] : leaves_) out.insert(out.end(), v.begin(), v.end());
  return out;
}

void ParamTree::unflatten(const std::vector<double>& flat) {
  if (flat.size() != total_size()) throw std::invalid_argument("ParamTree::unflatten: size mismatch");
  std::size_t pos = 0;
  for (auto& [name, v] : leaves_) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos), flat.begin() + static_cast<std::ptrdiff_t>(pos + v.size()),
              v.begin());
    pos += v.size();
  }
}

ParamTree ParamTree::zeros_like() const {
  ParamTree out;
  for (const auto& [name, v] : leaves_) out.set(name, std::vector<double>(v.size(), 0.0));
  return out;
}

// ---------------------------------------------------------------------------
// Tape: forward ops

namespace {

bool valid(Var v) { return v.id != static_cast<std::size_t>(-1); }

Tensor zeros_like(const Tensor& t) { return Tensor(t.channels, t.rows, t.cols); }

}  // namespace

Var Tape::push(Node node) {
  for (std::size_t in : node.inputs)
    if (in >= nodes_.size()) throw std::invalid_argument("Tape: input var does not belong to this tape");
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.kind = OpKind::Constant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::param(const std::string& name, Tensor value) {
  Node n;
  n.kind = OpKind::Param;
  n.name = name;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::disco_apply(Var x, Var coeffs, std::shared_ptr<const BasisOperator> table, std::size_t outChannels,
                      double gain) {
  const Tensor& xv = value(x);
  const Tensor& cv = value(coeffs);
  if (xv.plane() != table->in_size()) throw std::invalid_argument("disco_apply: input grid does not match table");
  const std::size_t C = xv.channels;
  const std::size_t L = table->basis_count();
  if (cv.size() != outChannels * C * L) throw std::invalid_argument("disco_apply: coefficient count mismatch");

  Node n;
  n.kind = OpKind::DiscoApply;
  n.inputs = {x.id, coeffs.id};
  n.scalar = gain;
  n.count = outChannels;
  n.disco = table;
  n.saved.assign(table->out_size() * C * L, 0.0);
  table->expand(xv.data, C, n.saved);
  std::vector<double> scaled(cv.data);
  for (double& c : scaled) c *= gain;
  n.value = Tensor(outChannels, table->out_rows(), table->out_cols());
  table->mix(scaled, outChannels, C, n.saved, n.value.data);
  return push(std::move(n));
}

Var Tape::projector_forward(Var x, std::shared_ptr<const ProjectorConfig> cfg) {
  const Tensor& xv = value(x);
  if (xv.channels != 1 || xv.rows != cfg->height || xv.cols != cfg->width)
    throw std::invalid_argument("projector_forward: image shape does not match config");
  Node n;
  n.kind = OpKind::ProjectorForward;
  n.inputs = {x.id};
  n.proj = cfg;
  n.value = Tensor(1, cfg->angles.size(), cfg->detCount);
  forward_values(*cfg, xv.data, n.value.data);
  return push(std::move(n));
}

Var Tape::projector_adjoint(Var y, std::shared_ptr<const ProjectorConfig> cfg) {
  const Tensor& yv = value(y);
  if (yv.channels != 1 || yv.rows != cfg->angles.size() || yv.cols != cfg->detCount)
    throw std::invalid_argument("projector_adjoint: sinogram shape does not match config");
  Node n;
  n.kind = OpKind::ProjectorAdjoint;
  n.inputs = {y.id};
  n.proj = cfg;
  n.value = Tensor(1, cfg->height, cfg->width);
  adjoint_values(*cfg, yv.data, n.value.data);
  return push(std::move(n));
}

Var Tape::fft_r(Var x, std::shared_ptr<const spectral::CenteredDft> dft) {
  const Tensor& xv = value(x);
  if (xv.channels != 1 || xv.cols != dft->size()) throw std::invalid_argument("fft_r: expects 1 channel of length n");
  Node n;
  n.kind = OpKind::FftR;
  n.inputs = {x.id};
  n.dft = dft;
  n.value = Tensor(2, xv.rows, xv.cols);
  dft->forward(xv.data, xv.rows, n.value.channel(0), n.value.channel(1));
  return push(std::move(n));
}

Var Tape::ifft_r(Var z, std::shared_ptr<const spectral::CenteredDft> dft) {
  const Tensor& zv = value(z);
  if (zv.channels != 2 || zv.cols != dft->size()) throw std::invalid_argument("ifft_r: expects 2 channels of length n");
  Node n;
  n.kind = OpKind::IfftR;
  n.inputs = {z.id};
  n.dft = dft;
  n.value = Tensor(1, zv.rows, zv.cols);
  dft->inverse_real(zv.channel(0), zv.channel(1), zv.rows, n.value.data);
  return push(std::move(n));
}

Var Tape::ramp_filter(Var x, std::shared_ptr<const spectral::RampFilter> filter) {
  const Tensor& xv = value(x);
  if (xv.channels != 1) throw std::invalid_argument("ramp_filter: expects 1 channel");
  Node n;
  n.kind = OpKind::RampFilter;
  n.inputs = {x.id};
  n.ramp = filter;
  n.value = zeros_like(xv);
  filter->apply(xv.data, xv.rows, n.value.data);
  return push(std::move(n));
}

Var Tape::relu(Var x) {
  Node n;
  n.kind = OpKind::Relu;
  n.inputs = {x.id};
  n.value = value(x);
  for (double& v : n.value.data) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

Var Tape::channel_mix(Var x, Var weight, Var bias, std::size_t outChannels) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(weight);
  const std::size_t C = xv.channels;
  if (wv.size() != outChannels * C) throw std::invalid_argument("channel_mix: weight count mismatch");
  const bool hasBias = valid(bias);
  if (hasBias && value(bias).size() != outChannels) throw std::invalid_argument("channel_mix: bias count mismatch");

  Node n;
  n.kind = OpKind::ChannelMix;
  n.inputs = {x.id, weight.id};
  if (hasBias) n.inputs.push_back(bias.id);
  n.count = outChannels;
  n.value = Tensor(outChannels, xv.rows, xv.cols);
  const std::size_t P = xv.plane();
  for (std::size_t k = 0; k < outChannels; ++k) {
    auto out = n.value.channel(k);
    const double b = hasBias ? value(bias).data[k] : 0.0;
    for (std::size_t p = 0; p < P; ++p) out[p] = b;
    for (std::size_t c = 0; c < C; ++c) {
      const double w = wv.data[k * C + c];
      const auto in = xv.channel(c);
      for (std::size_t p = 0; p < P; ++p) out[p] += w * in[p];
    }
  }
  return push(std::move(n));
}

Var Tape::downsample2(Var x, bool axis0, bool axis1) {
  const Tensor& xv = value(x);
  const std::size_t f0 = axis0 ? 2 : 1;
  const std::size_t f1 = axis1 ? 2 : 1;
  if (xv.rows % f0 != 0 || xv.cols % f1 != 0) throw std::invalid_argument("downsample2: dimension not divisible by 2");
  Node n;
  n.kind = OpKind::Downsample2;
  n.inputs = {x.id};
  n.flag0 = axis0;
  n.flag1 = axis1;
  n.value = Tensor(xv.channels, xv.rows / f0, xv.cols / f1);
  const double w = 1.0 / static_cast<double>(f0 * f1);
  for (std::size_t c = 0; c < xv.channels; ++c)
    for (std::size_t i = 0; i < xv.rows; ++i)
      for (std::size_t j = 0; j < xv.cols; ++j) n.value.at(c, i / f0, j / f1) += w * xv.at(c, i, j);
  return push(std::move(n));
}

Var Tape::upsample2(Var x, bool axis0, bool axis1) {
  const Tensor& xv = value(x);
  const std::size_t f0 = axis0 ? 2 : 1;
  const std::size_t f1 = axis1 ? 2 : 1;
  Node n;
  n.kind = OpKind::Upsample2;
  n.inputs = {x.id};
  n.flag0 = axis0;
  n.flag1 = axis1;
  n.value = Tensor(xv.channels, xv.rows * f0, xv.cols * f1);
  for (std::size_t c = 0; c < xv.channels; ++c)
    for (std::size_t i = 0; i < n.value.rows; ++i)
      for (std::size_t j = 0; j < n.value.cols; ++j) n.value.at(c, i, j) = xv.at(c, i / f0, j / f1);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  if (!value(a).same_shape(value(b))) throw std::invalid_argument("add: shape mismatch");
  Node n;
  n.kind = OpKind::Add;
  n.inputs = {a.id, b.id};
  n.value = value(a);
  const auto& bv = value(b).data;
  for (std::size_t i = 0; i < bv.size(); ++i) n.value.data[i] += bv[i];
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  if (!value(a).same_shape(value(b))) throw std::invalid_argument("sub: shape mismatch");
  Node n;
  n.kind = OpKind::Sub;
  n.inputs = {a.id, b.id};
  n.value = value(a);
  const auto& bv = value(b).data;
  for (std::size_t i = 0; i < bv.size(); ++i) n.value.data[i] -= bv[i];
  return push(std::move(n));
}

Var Tape::scale(Var x, double s) {
  Node n;
  n.kind = OpKind::Scale;
  n.inputs = {x.id};
  n.scalar = s;
  n.value = value(x);
  for (double& v : n.value.data) v *= s;
  return push(std::move(n));
}

Var Tape::scale_by(Var s, Var x) {
  if (value(s).size() != 1) throw std::invalid_argument("scale_by: s must be a scalar node");
  Node n;
  n.kind = OpKind::ScaleBy;
  n.inputs = {s.id, x.id};
  const double sv = value(s).data[0];
  n.value = value(x);
  for (double& v : n.value.data) v *= sv;
  return push(std::move(n));
}

Var Tape::mse_loss(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (!av.same_shape(bv)) throw std::invalid_argument("mse_loss: shape mismatch");
  if (av.size() == 0) throw std::invalid_argument("mse_loss: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av.data[i] - bv.data[i];
    s += d * d;
  }
  Node n;
  n.kind = OpKind::MseLoss;
  n.inputs = {a.id, b.id};
  n.value = Tensor::scalar(s / static_cast<double>(av.size()));
  return push(std::move(n));
}

Var Tape::half_sum_squares(Var x) {
  double s = 0.0;
  for (double v : value(x).data) s += v * v;
  Node n;
  n.kind = OpKind::HalfSumSquares;
  n.inputs = {x.id};
  n.value = Tensor::scalar(0.5 * s);
  return push(std::move(n));
}

// ---------------------------------------------------------------------------
// Tape: reverse pass

std::vector<Tensor> Tape::backward(Var loss) const {
  if (loss.id >= nodes_.size()) throw std::invalid_argument("grad: loss var does not belong to this tape");
  if (nodes_[loss.id].value.size() != 1) throw std::invalid_argument("grad: loss must be a scalar");

  std::vector<Tensor> g(nodes_.size());
  std::vector<bool> live(nodes_.size(), false);
  g[loss.id] = Tensor::scalar(1.0);
  live[loss.id] = true;

  auto acc = [&](std::size_t id) -> Tensor& {
    if (!live[id]) {
      g[id] = zeros_like(nodes_[id].value);
      live[id] = true;
    }
    return g[id];
  };

  for (std::size_t idx = loss.id + 1; idx-- > 0;) {
    if (!live[idx]) continue;
    const Node& n = nodes_[idx];
    const Tensor& go = g[idx];
    switch (n.kind) {
      case OpKind::Constant:
      case OpKind::Param:
        break;

      case OpKind::DiscoApply: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        const Tensor& cv = nodes_[n.inputs[1]].value;
        const BasisOperator& table = *n.disco;
        const std::size_t O = n.count;
        const std::size_t C = xv.channels;
        const std::size_t L = table.basis_count();
        const std::size_t P = table.out_size();
        std::vector<double> gc(cv.size());
        table.mix_grad_coeffs(go.data, O, C, n.saved, gc);
        Tensor& gca = acc(n.inputs[1]);
        for (std::size_t i = 0; i < gc.size(); ++i) gca.data[i] += n.scalar * gc[i];
        std::vector<double> scaled(cv.data);
        for (double& c : scaled) c *= n.scalar;
        std::vector<double> gz(P * C * L);
        table.mix_grad_z(scaled, O, C, go.data, gz);
        std::vector<double> gx(xv.size(), 0.0);
        table.expand_transpose(gz, C, gx);
        Tensor& gxa = acc(n.inputs[0]);
        for (std::size_t i = 0; i < gx.size(); ++i) gxa.data[i] += gx[i];
        break;
      }

      case OpKind::ProjectorForward: {
        std::vector<double> tmp(n.proj->image_size(), 0.0);
        adjoint_values(*n.proj, go.data, tmp);
        Tensor& gx = acc(n.inputs[0]);
        for (std::size_t i = 0; i < tmp.size(); ++i) gx.data[i] += tmp[i];
        break;
      }

      case OpKind::ProjectorAdjoint: {
        std::vector<double> tmp(n.proj->sinogram_size(), 0.0);
        forward_values(*n.proj, go.data, tmp);
        Tensor& gy = acc(n.inputs[0]);
        for (std::size_t i = 0; i < tmp.size(); ++i) gy.data[i] += tmp[i];
        break;
      }

      case OpKind::FftR: {
        std::vector<double> tmp(go.plane(), 0.0);
        n.dft->forward_transpose(go.channel(0), go.channel(1), go.rows, tmp);
        Tensor& gx = acc(n.inputs[0]);
        for (std::size_t i = 0; i < tmp.size(); ++i) gx.data[i] += tmp[i];
        break;
      }

      case OpKind::IfftR: {
        std::vector<double> re(go.size(), 0.0);
        std::vector<double> im(go.size(), 0.0);
        n.dft->inverse_real_transpose(go.data, go.rows, re, im);
        Tensor& gz = acc(n.inputs[0]);
        for (std::size_t i = 0; i < re.size(); ++i) {
          gz.data[i] += re[i];
          gz.data[re.size() + i] += im[i];
        }
        break;
      }

      case OpKind::RampFilter: {
        std::vector<double> tmp(go.size(), 0.0);
        n.ramp->apply(go.data, go.rows, tmp);
        Tensor& gx = acc(n.inputs[0]);
        for (std::size_t i = 0; i < tmp.size(); ++i) gx.data[i] += tmp[i];
        break;
      }

      case OpKind::Relu: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        Tensor& gx = acc(n.inputs[0]);
        for (std::size_t i = 0; i < xv.size(); ++i)
          if (xv.data[i] > 0.0) gx.data[i] += go.data[i];
        break;
      }

      case OpKind::ChannelMix: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        const Tensor& wv = nodes_[n.inputs[1]].value;
        const std::size_t C = xv.channels;
        const std::size_t P = xv.plane();
        Tensor& gx = acc(n.inputs[0]);
        Tensor& gw = acc(n.inputs[1]);
        for (std::size_t k = 0; k < n.count; ++k) {
          const auto gk = go.channel(k);
          for (std::size_t c = 0; c < C; ++c) {
            const double w = wv.data[k * C + c];
            const auto xc = xv.channel(c);
            auto gxc = gx.channel(c);
            double s = 0.0;
            for (std::size_t p = 0; p < P; ++p) {
              s += gk[p] * xc[p];
              gxc[p] += w * gk[p];
            }
            gw.data[k * C + c] += s;
          }
        }
        if (n.inputs.size() == 3) {
          Tensor& gb = acc(n.inputs[2]);
          for (std::size_t k = 0; k < n.count; ++k) {
            double s = 0.0;
            for (double v : go.channel(k)) s += v;
            gb.data[k] += s;
          }
        }
        break;
      }

      case OpKind::Downsample2: {
        const std::size_t f0 = n.flag0 ? 2 : 1;
        const std::size_t f1 = n.flag1 ? 2 : 1;
        const double w = 1.0 / static_cast<double>(f0 * f1);
        Tensor& gx = acc(n.inputs[0]);
        for (std::size_t c = 0; c < gx.channels; ++c)
          for (std::size_t i = 0; i < gx.rows; ++i)
            for (std::size_t j = 0; j < gx.cols; ++j) gx.at(c, i, j) += w * go.at(c, i / f0, j / f1);
        break;
      }

      case OpKind::Upsample2: {
        const std::size_t f0 = n.flag0 ? 2 : 1;
        const std::size_t f1 = n.flag1 ? 2 : 1;
        Tensor& gx = acc(n.inputs[0]);
        for (std::size_t c = 0; c < go.channels; ++c)
          for (std::size_t i = 0; i < go.rows; ++i)
            for (std::size_t j = 0; j < go.cols; ++j) gx.at(c, i / f0, j / f1) += go.at(c, i, j);
        break;
      }

      case OpKind::Add:
      case OpKind::Sub: {
        const double sign = n.kind == OpKind::Add ? 1.0 : -1.0;
        Tensor& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i];
        Tensor& gb = acc(n.inputs[1]);
        for (std::size_t i = 0; i < go.size(); ++i) gb.data[i] += sign * go.data[i];
        break;
      }

      case OpKind::Scale: {
        Tensor& gx = acc(n.inputs[0]);
        for (std::size_t i = 0; i < go.size(); ++i) gx.data[i] += n.scalar * go.data[i];
        break;
      }

      case OpKind::ScaleBy: {
        const Tensor& xv = nodes_[n.inputs[1]].value;
        const double sv = nodes_[n.inputs[0]].value.data[0];
        double s = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) s += go.data[i] * xv.data[i];
        acc(n.inputs[0]).data[0] += s;
        Tensor& gx = acc(n.inputs[1]);
        for (std::size_t i = 0; i < go.size(); ++i) gx.data[i] += sv * go.data[i];
        break;
      }

      case OpKind::MseLoss: {
        const Tensor& av = nodes_[n.inputs[0]].value;
        const Tensor& bv = nodes_[n.inputs[1]].value;
        const double f = 2.0 * go.data[0] / static_cast<double>(av.size());
        Tensor& ga = acc(n.inputs[0]);
        for (std::size_t i = 0; i < av.size(); ++i) ga.data[i] += f * (av.data[i] - bv.data[i]);
        Tensor& gb = acc(n.inputs[1]);
        for (std::size_t i = 0; i < av.size(); ++i) gb.data[i] -= f * (av.data[i] - bv.data[i]);
        break;
      }

      case OpKind::HalfSumSquares: {
        const Tensor& xv = nodes_[n.inputs[0]].value;
        Tensor& gx = acc(n.inputs[0]);
        for (std::size_t i = 0; i < xv.size(); ++i) gx.data[i] += go.data[0] * xv.data[i];
        break;
      }

      default:
        throw InternalError("autodiff: no backward rule for op kind " + std::to_string(static_cast<int>(n.kind)));
    }
  }

  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (!live[i]) g[i] = zeros_like(nodes_[i].value);
  return g;
}

ParamTree Tape::grad(Var loss) const {
  const std::vector<Tensor> g = backward(loss);
  ParamTree out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.kind != OpKind::Param) continue;
    if (!out.contains(n.name)) {
      out.set(n.name, g[i].data);
    } else {
      auto& dst = out.at(n.name);
      if (dst.size() != g[i].size()) throw std::invalid_argument("grad: parameter '" + n.name + "' bound with two sizes");
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += g[i].data[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

void adam_step(ParamTree& params, const ParamTree& grads, AdamState& state, const AdamConfig& cfg) {
  if (state.step == 0 && state.m.leaf_count() == 0) {
    state.m = params.zeros_like();
    state.v = params.zeros_like();
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    if (!grads.contains(name)) continue;
    const auto& g = grads.at(name);
    if (g.size() != p.size()) throw std::invalid_argument("adam_step: gradient size mismatch for '" + name + "'");
    auto& m = state.m.at(name);
    auto& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

}  // namespace ctorecon
