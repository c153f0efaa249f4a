#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "edcflow/gradcheck.hpp"
#include "edcflow/metrics.hpp"
#include "edcflow/objective.hpp"

using namespace edcflow;
using ad::Tensor;

namespace {

FlowImage const_flow(uint32_t w, uint32_t h, float u, float v) {
  auto f = FlowImage::zeros(w, h);
  for (uint32_t y = 0; y < h; ++y)
    for (uint32_t x = 0; x < w; ++x) {
      f.u(x, y) = u;
      f.v(x, y) = v;
    }
  return f;
}

}  // namespace

TEST_CASE("epe of an exact prediction is zero, constant (3,4) error gives 5") {
  auto gt = const_flow(8, 6, 1.0f, -2.0f);
  std::vector<uint8_t> mask(8 * 6, 1);
  CHECK(epe(gt, gt, mask) == 0.0);
  auto pred = const_flow(8, 6, 4.0f, 2.0f);  // error (3, 4)
  CHECK(epe(pred, gt, mask) == doctest::Approx(5.0));
}

TEST_CASE("angular error: equal flows, orthogonal unit flows, zero flows") {
  auto gt = const_flow(4, 4, 0.7f, 0.3f);
  std::vector<uint8_t> mask(16, 1);
  CHECK(angular_error(gt, gt, mask) == doctest::Approx(0.0));

  auto a = const_flow(4, 4, 1.0f, 0.0f);
  auto b = const_flow(4, 4, 0.0f, 1.0f);
  // (1,0,1).(0,1,1) / 2 = 1/2 -> 60 degrees
  CHECK(angular_error(a, b, mask) == doctest::Approx(60.0).epsilon(1e-9));

  auto z = const_flow(4, 4, 0.0f, 0.0f);
  CHECK(angular_error(z, z, mask) == doctest::Approx(0.0));
}

TEST_CASE("npe thresholds and monotonicity") {
  auto gt = const_flow(5, 5, 0.0f, 0.0f);
  auto pred = const_flow(5, 5, 2.0f, 0.0f);
  std::vector<uint8_t> mask(25, 1);
  CHECK(npe(pred, gt, mask, 1.0) == doctest::Approx(100.0));
  CHECK(npe(pred, gt, mask, 3.0) == doctest::Approx(0.0));
  CHECK(npe(gt, gt, mask, 1.0) == doctest::Approx(0.0));

  Rng rng(1);
  auto p2 = FlowImage::zeros(8, 8);
  for (auto& v : p2.data) v = static_cast<float>(rng.uniform(-4.0, 4.0));
  auto g2 = FlowImage::zeros(8, 8);
  std::vector<uint8_t> m2(64, 1);
  double prev = 1e9;
  for (double n : {0.5, 1.0, 2.0, 3.0, 5.0}) {
    const double v = npe(p2, g2, m2, n);
    CHECK(v <= prev);
    prev = v;
  }
}

TEST_CASE("outlier percentage applies both conditions") {
  std::vector<uint8_t> mask(4, 1);
  auto gt = const_flow(2, 2, 10.0f, 0.0f);
  auto pred = const_flow(2, 2, 14.0f, 0.0f);  // error 4 > 3 and 4 > 0.5
  CHECK(outlier_pct(pred, gt, mask) == doctest::Approx(100.0));

  auto gt2 = const_flow(2, 2, 100.0f, 0.0f);
  auto pred2 = const_flow(2, 2, 104.0f, 0.0f);  // error 4 > 3 but 4 < 5
  CHECK(outlier_pct(pred2, gt2, mask) == doctest::Approx(0.0));

  CHECK(outlier_pct(gt, gt, mask) == doctest::Approx(0.0));
}

TEST_CASE("metrics reject an empty mask") {
  auto gt = const_flow(2, 2, 0.0f, 0.0f);
  std::vector<uint8_t> mask(4, 0);
  CHECK_THROWS_AS(epe(gt, gt, mask), Error);
  try {
    epe(gt, gt, mask);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptyGroundTruth);
  }
}

TEST_CASE("metrics are invariant to pixel permutation") {
  Rng rng(2);
  const uint32_t w = 6, h = 6;
  auto pred = FlowImage::zeros(w, h);
  auto gt = FlowImage::zeros(w, h);
  std::vector<uint8_t> mask(w * h);
  for (auto& v : pred.data) v = static_cast<float>(rng.uniform(-3.0, 3.0));
  for (auto& v : gt.data) v = static_cast<float>(rng.uniform(-3.0, 3.0));
  for (auto& m : mask) m = rng.uniform() < 0.8 ? 1 : 0;
  mask[0] = 1;
  auto r1 = evaluate_flow(pred, gt, mask);

  // apply one fixed permutation to all three
  std::vector<size_t> perm(w * h);
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(i)))]);
  auto pred2 = pred;
  auto gt2 = gt;
  auto mask2 = mask;
  for (size_t i = 0; i < perm.size(); ++i) {
    pred2.data[2 * i] = pred.data[2 * perm[i]];
    pred2.data[2 * i + 1] = pred.data[2 * perm[i] + 1];
    gt2.data[2 * i] = gt.data[2 * perm[i]];
    gt2.data[2 * i + 1] = gt.data[2 * perm[i] + 1];
    mask2[i] = mask[perm[i]];
  }
  auto r2 = evaluate_flow(pred2, gt2, mask2);
  CHECK(r1.epe == doctest::Approx(r2.epe).epsilon(1e-12));
  CHECK(r1.ae == doctest::Approx(r2.ae).epsilon(1e-12));
  CHECK(r1.outlier_pct == doctest::Approx(r2.outlier_pct));
  CHECK(r1.npe.at(2) == doctest::Approx(r2.npe.at(2)));
}

TEST_CASE("sequence loss: single iterate is the masked mean L1") {
  Rng rng(3);
  const int64_t h = 4, w = 4;
  auto gt = ad::random_tensor<double>({1, 2, h, w}, rng);
  auto pred = ad::random_tensor<double>({1, 2, h, w}, rng);
  std::vector<uint8_t> mask(h * w, 1);
  mask[3] = 0;
  auto mt = mask_to_tensor<double>(mask, h, w);
  auto loss = sequence_loss<double>(nullptr, {pred}, gt, mt);
  double expect = 0;
  int64_t valid = 0;
  for (int64_t i = 0; i < h * w; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    expect += std::abs(gt.data()[static_cast<size_t>(i)] - pred.data()[static_cast<size_t>(i)]) +
              std::abs(gt.data()[static_cast<size_t>(h * w + i)] -
                       pred.data()[static_cast<size_t>(h * w + i)]);
    ++valid;
  }
  expect /= static_cast<double>(valid);
  CHECK(loss.item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("sequence loss: K=2 weights are 0.8 and 1") {
  Rng rng(4);
  const int64_t h = 3, w = 3;
  auto gt = ad::random_tensor<double>({1, 2, h, w}, rng);
  auto p1 = ad::random_tensor<double>({1, 2, h, w}, rng);
  auto p2 = ad::random_tensor<double>({1, 2, h, w}, rng);
  auto mt = mask_to_tensor<double>(std::vector<uint8_t>(h * w, 1), h, w);
  const double a = sequence_loss<double>(nullptr, {p1}, gt, mt).item();
  const double b = sequence_loss<double>(nullptr, {p2}, gt, mt).item();
  const double both = sequence_loss<double>(nullptr, {p1, p2}, gt, mt).item();
  CHECK(std::abs(both - (0.8 * a + b)) <= 1e-15 * std::max(1.0, std::abs(both)));
}

TEST_CASE("sequence loss: perfect predictions give zero") {
  Rng rng(5);
  auto gt = ad::random_tensor<double>({1, 2, 4, 4}, rng);
  auto mt = mask_to_tensor<double>(std::vector<uint8_t>(16, 1), 4, 4);
  CHECK(sequence_loss<double>(nullptr, {gt, gt, gt}, gt, mt).item() == 0.0);
}

TEST_CASE("sequence loss: weight of iterate k is 0.8^(K-k)") {
  const int64_t h = 2, w = 2;
  auto gt = Tensor<double>::zeros({1, 2, h, w});
  auto mt = mask_to_tensor<double>(std::vector<uint8_t>(h * w, 1), h, w);
  const int K = 5;
  // prediction k has unit per-pixel L1 = 2 (one unit per channel)
  std::vector<Tensor<double>> preds;
  for (int k = 0; k < K; ++k) preds.push_back(Tensor<double>::full({1, 2, h, w}, 1.0));
  double expect = 0;
  for (int k = 1; k <= K; ++k) expect += std::pow(0.8, K - k) * 2.0;
  CHECK(sequence_loss<double>(nullptr, preds, gt, mt).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("sequence loss rejects an empty mask") {
  auto gt = Tensor<double>::zeros({1, 2, 2, 2});
  auto mt = mask_to_tensor<double>(std::vector<uint8_t>(4, 0), 2, 2);
  CHECK_THROWS_AS(sequence_loss<double>(nullptr, {gt}, gt, mt), Error);
}

TEST_CASE("sequence loss is differentiable through the predictions") {
  Rng rng(6);
  auto gt = ad::random_tensor<double>({1, 2, 3, 3}, rng);
  auto mt = mask_to_tensor<double>(std::vector<uint8_t>(9, 1), 3, 3);
  auto f = [&](ad::Tape<double>* t, std::vector<Tensor<double>>& in) {
    return sequence_loss(t, {in[0], in[1]}, gt, mt);
  };
  auto rep = ad::finite_diff_check<double>(
      f, {ad::random_tensor<double>({1, 2, 3, 3}, rng), ad::random_tensor<double>({1, 2, 3, 3}, rng)},
      {0, 1}, 1e-5, rng);
  CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("flow tensor round trip drops NaNs into the mask") {
  auto img = FlowImage::zeros(3, 2);
  img.u(1, 0) = std::numeric_limits<float>::quiet_NaN();
  img.v(1, 0) = std::numeric_limits<float>::quiet_NaN();
  img.u(2, 1) = 4.5f;
  auto mask = finite_mask(img);
  CHECK(mask[1] == 0);
  CHECK(mask[0] == 1);
  auto t = flow_to_tensor<double>(img);
  CHECK(t.data()[1] == 0.0);  // NaN scrubbed
  auto back = tensor_to_flow(t);
  CHECK(back.u(2, 1) == 4.5f);
}
