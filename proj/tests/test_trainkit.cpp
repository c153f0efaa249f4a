#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "edcflow/checkpoint.hpp"
#include "edcflow/trainkit.hpp"

using namespace edcflow;
using ad::Tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.g = 3;
  c.bins = 2;
  c.d = 12;
  c.dbar = 16;
  c.stem_ch = 8;
  c.hidden = 12;
  c.ctx = 12;
  c.corr_levels = 2;
  c.corr_radius = 3;
  c.corr_mid = 16;
  c.corr_dim = 12;
  c.scales = {1, 3};
  c.iters = 2;
  c.se_reduction = 4;
  c.mask_mid = 8;
  return c;
}

std::vector<synth::Sample> tiny_dataset(int count, uint64_t seed, int size = 24) {
  synth::DatasetConfig cfg;
  cfg.count = count;
  cfg.width = cfg.height = size;
  cfg.max_disp = 3.0;
  cfg.seed = seed;
  return synth::make_dataset(cfg);
}

}  // namespace

TEST_CASE("adamw: zero gradient and zero decay leave parameters unchanged") {
  ad::ParamStore<double> ps;
  auto p = ps.add("w", {4});
  for (size_t i = 0; i < 4; ++i) p.data()[i] = 1.0 + static_cast<double>(i);
  p.grad();  // zeros
  AdamW<double> opt(ps);
  opt.step(ps, 1e-3, 0.0);
  for (size_t i = 0; i < 4; ++i) CHECK(p.data()[i] == 1.0 + static_cast<double>(i));
}

TEST_CASE("adamw: decoupled decay shrinks weights by (1 - lr*wd) under zero gradient") {
  ad::ParamStore<double> ps;
  auto p = ps.add("w", {3});
  p.data()[0] = 2.0;
  p.data()[1] = -3.0;
  p.data()[2] = 0.5;
  p.grad();
  AdamW<double> opt(ps);
  const double lr = 0.01, wd = 0.1;
  opt.step(ps, lr, wd);
  CHECK(p.data()[0] == doctest::Approx(2.0 * (1 - lr * wd)).epsilon(1e-12));
  CHECK(p.data()[1] == doctest::Approx(-3.0 * (1 - lr * wd)).epsilon(1e-12));
}

TEST_CASE("adamw: constant gradient converges to a sign-like unit step") {
  ad::ParamStore<double> ps;
  auto p = ps.add("w", {2});
  AdamW<double> opt(ps);
  const double lr = 0.1;
  double prev0 = p.data()[0];
  double step0 = 0;
  for (int t = 0; t < 500; ++t) {
    p.zero_grad();
    p.grad()[0] += 0.037;  // constant positive gradient
    p.grad()[1] += -4.2;   // constant negative gradient
    opt.step(ps, lr, 0.0);
    step0 = p.data()[0] - prev0;
    prev0 = p.data()[0];
  }
  CHECK(step0 == doctest::Approx(-lr).epsilon(1e-3));
  CHECK(p.data()[1] > 0);  // moved opposite to the negative gradient
}

TEST_CASE("adamw aborts on non-finite gradients") {
  ad::ParamStore<double> ps;
  auto p = ps.add("w", {2});
  p.grad()[0] = std::numeric_limits<double>::quiet_NaN();
  AdamW<double> opt(ps);
  CHECK_THROWS_AS(opt.step(ps, 1e-3, 0.0), Error);
  CHECK(p.data()[0] == 0.0);
}

TEST_CASE("one-cycle schedule endpoints and peak") {
  const double max_lr = 2e-4;
  const int64_t total = 1000;
  const double pct = 0.05;
  CHECK(one_cycle_lr(0, total, max_lr, pct) == doctest::Approx(max_lr / 25.0));
  CHECK(one_cycle_lr(50, total, max_lr, pct) == doctest::Approx(max_lr));
  CHECK(one_cycle_lr(total, total, max_lr, pct) == doctest::Approx(max_lr / 1e4).epsilon(1e-9));
}

TEST_CASE("one-cycle schedule is continuous") {
  const double max_lr = 3e-4;
  const int64_t total = 400;
  const double pct = 0.05;
  // the warmup slope bounds the per-step change over the whole schedule
  const double bound = 1.01 * max_lr / (pct * static_cast<double>(total));
  double prev = one_cycle_lr(0, total, max_lr, pct);
  for (int64_t s = 1; s <= total; ++s) {
    const double lr = one_cycle_lr(s, total, max_lr, pct);
    CHECK(std::abs(lr - prev) <= bound);
    prev = lr;
  }
}

TEST_CASE("gradient clipping caps the global norm") {
  ad::ParamStore<double> ps;
  auto a = ps.add("a", {3});
  auto b = ps.add("b", {2});
  a.grad()[0] = 3.0;
  a.grad()[1] = 4.0;
  b.grad()[0] = 12.0;
  const double pre = clip_grad_norm(ps, 1.0);
  CHECK(pre == doctest::Approx(13.0));
  double post2 = 0;
  for (auto& [n, p] : ps.entries())
    post2 += static_cast<double>(kern::sumsq(p.grad().data(), p.grad().size()));
  CHECK(std::sqrt(post2) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("one optimizer step on one sample reduces its loss") {
  auto cfg = tiny_config();
  Model<double> model(cfg, 21);
  auto data = tiny_dataset(1, 31);
  auto w = synth::to_windows(data[0], cfg.g, cfg.bins);
  auto wt = windows_to_tensor<double>(w);
  auto gt = flow_to_tensor<double>(data[0].gt);
  auto mask = mask_to_tensor<double>(data[0].valid, data[0].gt.height, data[0].gt.width);

  auto eval_loss = [&](bool train) {
    model.params().zero_grads();
    ad::Tape<double> tape;
    auto trace = model.run_iterations(&tape, wt);
    auto loss = sequence_loss(&tape, trace.full_flows, gt, mask);
    const double v = loss.item();
    if (train) tape.backward(loss);
    return v;
  };
  AdamW<double> opt(model.params());
  const double before = eval_loss(true);
  clip_grad_norm(model.params(), 1.0);
  opt.step(model.params(), 1e-4, 0.0);
  const double after = eval_loss(false);
  CHECK(after < before);
}

TEST_CASE("horizontal flip of events and ground truth preserves metrics") {
  auto data = tiny_dataset(1, 41);
  const auto& s = data[0];
  // a fabricated prediction and its flipped counterpart
  Rng rng(1);
  FlowImage pred = FlowImage::zeros(s.gt.width, s.gt.height);
  for (auto& v : pred.data) v = static_cast<float>(rng.uniform(-2.0, 2.0));

  FlowImage pred_f = pred, gt_f = s.gt;
  std::vector<uint8_t> mask_f = s.valid;
  const uint32_t W = s.gt.width, H = s.gt.height;
  for (uint32_t y = 0; y < H; ++y)
    for (uint32_t x = 0; x < W; ++x) {
      pred_f.u(x, y) = -pred.u(W - 1 - x, y);
      pred_f.v(x, y) = pred.v(W - 1 - x, y);
      gt_f.u(x, y) = -s.gt.u(W - 1 - x, y);
      gt_f.v(x, y) = s.gt.v(W - 1 - x, y);
      mask_f[y * W + x] = s.valid[y * W + (W - 1 - x)];
    }
  auto r1 = evaluate_flow(pred, s.gt, s.valid);
  auto r2 = evaluate_flow(pred_f, gt_f, mask_f);
  CHECK(r1.epe == doctest::Approx(r2.epe).epsilon(1e-9));
  CHECK(r1.ae == doctest::Approx(r2.ae).epsilon(1e-9));
  CHECK(r1.outlier_pct == doctest::Approx(r2.outlier_pct));
}

TEST_CASE("identical seeds give identical training logs") {
  auto run = [](uint64_t seed) {
    auto cfg = tiny_config();
    Model<double> model(cfg, seed);
    auto train = tiny_dataset(4, 51);
    auto val = tiny_dataset(2, 52);
    TrainConfig tc;
    tc.total_steps = 6;
    tc.batch = 2;
    tc.seed = seed;
    tc.log_interval = 1;
    tc.val_interval = 3;
    auto r = fit(model, train, val, tc, nullptr);
    return r.log_lines;
  };
  auto a = run(7), b = run(7);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("training reduces the loss on a small run") {
  auto cfg = tiny_config();
  Model<double> model(cfg, 61);
  auto train = tiny_dataset(6, 71);
  TrainConfig tc;
  tc.total_steps = 30;
  tc.batch = 2;
  tc.max_lr = 3e-4;
  tc.seed = 3;
  tc.log_interval = 1;
  tc.val_interval = 1000000;
  auto r = fit(model, train, {}, tc, nullptr);
  REQUIRE(r.log_lines.size() >= 10);
  auto loss_of = [](const std::string& line) {
    auto j = nlohmann::json::parse(line);
    return j.at("loss").get<double>();
  };
  double first3 = 0, last3 = 0;
  for (int i = 0; i < 3; ++i) first3 += loss_of(r.log_lines[static_cast<size_t>(i)]);
  for (size_t i = r.log_lines.size() - 3; i < r.log_lines.size(); ++i) last3 += loss_of(r.log_lines[i]);
  CHECK(last3 < first3);
}

TEST_CASE("checkpoint round trip restores parameters bitwise") {
  auto cfg = tiny_config();
  Model<float> model(cfg, 81);
  nlohmann::json meta;
  meta["model"] = cfg;
  const std::string path = "test_trainkit_ckpt.bin";
  save_checkpoint(path, model.params(), meta);

  Model<float> other(cfg, 82);  // different init
  load_checkpoint(path, other.params());
  for (size_t i = 0; i < model.params().entries().size(); ++i) {
    auto a = model.params().entries()[i].second.data();
    auto b = other.params().entries()[i].second.data();
    for (size_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
  }

  // saved bytes are reproducible after a load/save cycle
  const std::string path2 = "test_trainkit_ckpt2.bin";
  save_checkpoint(path2, other.params(), meta);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("checkpoint shape mismatch is rejected") {
  auto cfg = tiny_config();
  Model<float> model(cfg, 91);
  const std::string path = "test_trainkit_ckpt3.bin";
  save_checkpoint(path, model.params());
  auto cfg2 = cfg;
  cfg2.hidden = 16;
  Model<float> other(cfg2, 92);
  CHECK_THROWS_AS(load_checkpoint(path, other.params()), Error);
  std::remove(path.c_str());
}
