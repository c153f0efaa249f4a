#pragma once

#include "edcflow/metrics.hpp"
#include "edcflow/tensor.hpp"
#include "edcflow/ops.hpp"

namespace edcflow {

// (1,2,H,W) tensor from a flow image; invalid (NaN) pixels become zero and
// must be excluded through the mask
template <typename T>
ad::Tensor<T> flow_to_tensor(const FlowImage& img) {
  auto t = ad::Tensor<T>::zeros({1, 2, img.height, img.width});
  auto d = t.data();
  const size_t np = img.pixels();
  for (size_t i = 0; i < np; ++i) {
    const float u = img.data[2 * i], v = img.data[2 * i + 1];
    d[i] = std::isfinite(u) ? static_cast<T>(u) : T(0);
    d[np + i] = std::isfinite(v) ? static_cast<T>(v) : T(0);
  }
  return t;
}

// (1,2,H,W) 0/1 tensor replicating the pixel mask over both flow channels
template <typename T>
ad::Tensor<T> mask_to_tensor(const std::vector<uint8_t>& mask, int64_t h, int64_t w) {
  check(static_cast<int64_t>(mask.size()) == h * w, ErrorKind::ShapeError, "mask size mismatch");
  auto t = ad::Tensor<T>::zeros({1, 2, h, w});
  auto d = t.data();
  for (size_t i = 0; i < mask.size(); ++i) {
    const T v = mask[i] ? T(1) : T(0);
    d[i] = v;
    d[mask.size() + i] = v;
  }
  return t;
}

template <typename T>
FlowImage tensor_to_flow(const ad::Tensor<T>& t) {
  check((t.rank() == 4 && t.dim(0) == 1 && t.dim(1) == 2) || (t.rank() == 3 && t.dim(0) == 2),
        ErrorKind::ShapeError, "tensor_to_flow: (1,2,H,W) or (2,H,W) tensor required");
  const int64_t h = t.dim(t.rank() - 2), w = t.dim(t.rank() - 1);
  FlowImage img = FlowImage::zeros(static_cast<uint32_t>(w), static_cast<uint32_t>(h));
  auto d = t.data();
  const size_t np = static_cast<size_t>(h * w);
  for (size_t i = 0; i < np; ++i) {
    img.data[2 * i] = static_cast<float>(d[i]);
    img.data[2 * i + 1] = static_cast<float>(d[np + i]);
  }
  return img;
}

// L = sum_k 0.8^(K-k) * mean_valid |gt - f_k|_1, the per-pixel L1 summed over
// both channels and averaged over valid pixels. Inputs gt and mask are
// constants shaped like the predictions.
template <typename T>
ad::Tensor<T> sequence_loss(ad::Tape<T>* tape, const std::vector<ad::Tensor<T>>& preds,
                            const ad::Tensor<T>& gt, const ad::Tensor<T>& mask) {
  check(!preds.empty(), ErrorKind::InvalidConfig, "sequence_loss: no predictions");
  check(gt.shape() == preds.front().shape() && mask.shape() == gt.shape(), ErrorKind::ShapeError,
        "sequence_loss: prediction/ground-truth shapes differ");
  const double valid = static_cast<double>(kern::sum(mask.data().data(), mask.data().size())) / 2.0;
  check(valid > 0, ErrorKind::EmptyGroundTruth, "sequence_loss: empty valid mask");
  const int K = static_cast<int>(preds.size());
  ad::Tensor<T> total;
  for (int k = 1; k <= K; ++k) {
    auto diff = ad::abs_op(tape, ad::sub(tape, gt, preds[static_cast<size_t>(k - 1)]));
    auto masked = ad::mul(tape, diff, mask);
    auto term = ad::affine(tape, ad::sum_all(tape, masked), static_cast<T>(1.0 / valid), T(0));
    const T wgt = static_cast<T>(std::pow(0.8, static_cast<double>(K - k)));
    auto weighted = ad::affine(tape, term, wgt, T(0));
    total = total.defined() ? ad::add(tape, total, weighted) : weighted;
  }
  return total;
}

}  // namespace edcflow
