#pragma once

#include <map>
#include <string>

#include "edcflow/conv.hpp"
#include "edcflow/sample.hpp"

namespace edcflow::ad {

// Named learnable tensors in insertion order. Insertion order fixes the
// initialization stream, the checkpoint layout, and the optimizer state.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Shape shape) {
    check(index_.find(name) == index_.end(), ErrorKind::InvalidConfig, "duplicate parameter " + name);
    auto t = Tensor<T>::zeros(std::move(shape), true);
    index_[name] = entries_.size();
    entries_.push_back({name, t});
    return t;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    check(it != index_.end(), ErrorKind::InvalidConfig, "unknown parameter " + name);
    return entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor<T>>>& entries() { return entries_; }

  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.numel();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : entries_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
  std::map<std::string, size_t> index_;
};

// uniform in (-gain/sqrt(fan_in), gain/sqrt(fan_in))
template <typename T>
void init_uniform_fanin(Tensor<T>& w, int64_t fan_in, Rng& rng, double gain = 1.0) {
  const double a = gain / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-a, a));
}

template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;
  int64_t stride = 1, pad = 1;

  Tensor<T> operator()(Tape<T>* tape, const Tensor<T>& x) const {
    return conv2d(tape, x, w, b, stride, pad);
  }
};

template <typename T>
Conv2dLayer<T> make_conv2d(ParamStore<T>& ps, const std::string& name, int64_t oc, int64_t ic,
                           int64_t k, int64_t stride, int64_t pad, Rng& rng, double gain = 1.0) {
  Conv2dLayer<T> l;
  l.w = ps.add(name + ".w", {oc, ic, k, k});
  l.b = ps.add(name + ".b", {oc});
  init_uniform_fanin(l.w, ic * k * k, rng, gain);
  l.stride = stride;
  l.pad = pad;
  return l;
}

// Convolutional gated recurrent unit. Gates are 3x3 zero-padded convolutions
// over the channel concatenation of hidden state and input.
template <typename T>
struct GruParams {
  Tensor<T> wz, bz, wr, br, wh, bh;
};

template <typename T>
GruParams<T> make_gru(ParamStore<T>& ps, const std::string& name, int64_t hidden, int64_t input,
                      Rng& rng, double gain = 0.5) {
  GruParams<T> g;
  const int64_t in_ch = hidden + input;
  g.wz = ps.add(name + ".wz", {hidden, in_ch, 3, 3});
  g.bz = ps.add(name + ".bz", {hidden});
  g.wr = ps.add(name + ".wr", {hidden, in_ch, 3, 3});
  g.br = ps.add(name + ".br", {hidden});
  g.wh = ps.add(name + ".wh", {hidden, in_ch, 3, 3});
  g.bh = ps.add(name + ".bh", {hidden});
  init_uniform_fanin(g.wz, in_ch * 9, rng, gain);
  init_uniform_fanin(g.wr, in_ch * 9, rng, gain);
  init_uniform_fanin(g.wh, in_ch * 9, rng, gain);
  return g;
}

template <typename T>
Tensor<T> gru_cell(Tape<T>* tape, const Tensor<T>& h, const Tensor<T>& x, const GruParams<T>& p) {
  check(h.rank() == 4 && x.rank() == 4 && h.dim(0) == x.dim(0) && h.dim(2) == x.dim(2) &&
            h.dim(3) == x.dim(3),
        ErrorKind::ShapeError, "gru_cell: hidden and input must be spatially aligned NCHW");
  auto hx = concat(tape, {h, x}, 1);
  auto z = sigmoid(tape, conv2d(tape, hx, p.wz, p.bz, 1, 1));
  auto r = sigmoid(tape, conv2d(tape, hx, p.wr, p.br, 1, 1));
  auto rhx = concat(tape, {mul(tape, r, h), x}, 1);
  auto cand = tanh_op(tape, conv2d(tape, rhx, p.wh, p.bh, 1, 1));
  // h' = (1 - z) * h + z * cand
  return add(tape, mul(tape, affine(tape, z, T(-1), T(1)), h), mul(tape, z, cand));
}

// Squeeze-excite channel attention: pool -> FC(C -> C/r) -> ReLU ->
// FC(-> C) -> sigmoid -> per-channel rescale.
template <typename T>
struct SeParams {
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
SeParams<T> make_se(ParamStore<T>& ps, const std::string& name, int64_t channels, int64_t reduction,
                    Rng& rng) {
  check(reduction >= 1 && channels % reduction == 0, ErrorKind::InvalidConfig,
        "channel attention: channels must be divisible by reduction");
  SeParams<T> s;
  const int64_t mid = channels / reduction;
  s.w1 = ps.add(name + ".w1", {mid, channels});
  s.b1 = ps.add(name + ".b1", {mid});
  s.w2 = ps.add(name + ".w2", {channels, mid});
  s.b2 = ps.add(name + ".b2", {channels});
  init_uniform_fanin(s.w1, channels, rng);
  init_uniform_fanin(s.w2, mid, rng);
  return s;
}

template <typename T>
Tensor<T> channel_attention(Tape<T>* tape, const Tensor<T>& x, const SeParams<T>& p) {
  check(x.rank() == 4 && x.dim(1) == p.w1.dim(1), ErrorKind::ShapeError,
        "channel_attention: channel count does not match parameters");
  auto pooled = mean_hw(tape, x);
  auto hid = relu(tape, linear(tape, pooled, p.w1, p.b1));
  auto gate = sigmoid(tape, linear(tape, hid, p.w2, p.b2));
  return mul_channel_gate(tape, x, gate);
}

}  // namespace edcflow::ad
