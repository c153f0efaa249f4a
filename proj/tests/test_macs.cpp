#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "edcflow/checkpoint.hpp"
#include "edcflow/macs.hpp"

using namespace edcflow;

namespace {

ModelConfig reduced_config() {
  ModelConfig c;
  c.d = 32;
  c.dbar = 48;
  c.hidden = 64;
  c.ctx = 64;
  c.iters = 4;
  return c;
}

void check_params_match(const ModelConfig& cfg) {
  Model<float> model(cfg, 1);
  auto b = macs::count_model(cfg, 64, 64);
  CHECK(b.total_params == model.params().total_params());
}

}  // namespace

TEST_CASE("cost volume construction count is exactly N8^2 * dbar") {
  ModelConfig c;
  auto b = macs::count_model(c, 64, 64);
  const int64_t n8 = 8 * 8;
  CHECK(b.cost_volume_macs == n8 * n8 * c.dbar);
  auto b2 = macs::count_model(c, 128, 256);
  const int64_t n8b = 16 * 32;
  CHECK(b2.cost_volume_macs == n8b * n8b * c.dbar);
}

TEST_CASE("totals equal the sum of the entries") {
  ModelConfig c;
  auto b = macs::count_model(c, 128, 128);
  int64_t macs = 0, params = 0;
  for (const auto& e : b.entries) {
    macs += e.macs;
    params += e.params;
  }
  CHECK(b.total_macs == macs);
  CHECK(b.total_params == params);
}

TEST_CASE("accountant parameter total matches the model parameter tally") {
  for (auto style : {diff::AggStyle::dwconv3d, diff::AggStyle::add, diff::AggStyle::concat,
                     diff::AggStyle::gru}) {
    auto cfg = reduced_config();
    cfg.agg = style;
    check_params_match(cfg);
  }
  // branch ablations and the eighth-resolution variant
  {
    auto cfg = reduced_config();
    cfg.use_diff = false;
    check_params_match(cfg);
  }
  {
    auto cfg = reduced_config();
    cfg.use_corr = false;
    check_params_match(cfg);
  }
  {
    auto cfg = reduced_config();
    cfg.res = UpdateRes::eighth;
    check_params_match(cfg);
  }
}

TEST_CASE("parameter total matches the checkpoint payload size") {
  auto cfg = reduced_config();
  Model<float> model(cfg, 3);
  const std::string path = "test_macs_ckpt.bin";
  save_checkpoint(path, model.params());
  auto manifest = read_checkpoint_manifest(path);
  const int64_t payload = manifest.at("payload_bytes").get<int64_t>();
  auto b = macs::count_model(cfg, 64, 64);
  CHECK(payload == b.total_params * static_cast<int64_t>(sizeof(float)));
  std::remove(path.c_str());
}

TEST_CASE("difference-layer count is linear in the window count") {
  ModelConfig c5;
  c5.g = 5;
  ModelConfig c10 = c5;
  c10.g = 10;
  auto b5 = macs::count_model(c5, 128, 128);
  auto b10 = macs::count_model(c10, 128, 128);
  const double ratio =
      static_cast<double>(b10.diff_layer_macs) / static_cast<double>(b5.diff_layer_macs);
  CHECK(ratio >= 1.8);
  CHECK(ratio <= 2.2);
}

TEST_CASE("scaling report: quadratic cost volume, linear difference layer") {
  ModelConfig c;
  auto rep = macs::verify_scaling(c, {{128, 128}, {256, 256}, {512, 512}},
                                  {{256, 256}, {288, 384}, {480, 640}, {512, 512}});
  CHECK(rep.cost_slope_n == doctest::Approx(2.0).epsilon(0.001));
  CHECK(std::abs(rep.diff_slope_n - 1.0) <= 0.1);
  CHECK(rep.slopes_ok);
  CHECK(rep.t_linear_ok);
  CHECK(rep.min_dense_over_core >= 50.0);
}

TEST_CASE("dense-volume hypothesis scales with g while the volume itself does not") {
  ModelConfig a;
  a.g = 3;
  a.scales = {1, 3};
  ModelConfig b;
  b.g = 10;
  b.scales = {1, 3};
  auto ba = macs::count_model(a, 128, 128);
  auto bb = macs::count_model(b, 128, 128);
  CHECK(ba.cost_volume_macs == bb.cost_volume_macs);
  CHECK(bb.dense_volume_macs * 3 == ba.dense_volume_macs * 10);
}

TEST_CASE("doubling the pixel count doubles the difference-layer count") {
  ModelConfig c;
  auto b1 = macs::count_model(c, 128, 128);
  auto b2 = macs::count_model(c, 128, 256);
  const double ratio =
      static_cast<double>(b2.diff_layer_macs) / static_cast<double>(b1.diff_layer_macs);
  CHECK(ratio == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("paper-shaped configuration lands in the expected total range") {
  ModelConfig c;  // defaults mirror the full-scale configuration
  auto b = macs::count_model(c, 480, 640);
  // order-of-magnitude sanity only: a couple hundred G MACs end to end
  CHECK(b.total_macs > 5e10);
  CHECK(b.total_macs < 1e12);
  CHECK(b.total_params > 1e6);
  CHECK(b.total_params < 2e7);
}

TEST_CASE("macs are deterministic in the configuration") {
  ModelConfig c;
  auto a = macs::count_model(c, 256, 256);
  auto b = macs::count_model(c, 256, 256);
  CHECK(a.total_macs == b.total_macs);
  CHECK(a.total_params == b.total_params);
}
