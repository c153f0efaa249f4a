#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "edcflow/checkpoint.hpp"
#include "edcflow/macs.hpp"
#include "edcflow/metrics.hpp"
#include "edcflow/trainkit.hpp"
#include "edcflow/viz.hpp"

namespace fs = std::filesystem;
using namespace edcflow;

namespace {

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::ParseError:
    case ErrorKind::EmptyWindow:
    case ErrorKind::OutOfBounds:
    case ErrorKind::EmptyGroundTruth:
    case ErrorKind::DegenerateScene:
      return 2;
    case ErrorKind::InvalidConfig:
    case ErrorKind::ShapeError:
      return 3;
    case ErrorKind::GradError:
    case ErrorKind::Divergence:
      return 4;
  }
  return 1;
}

struct ModelFlags {
  ModelConfig cfg;
  std::string agg = "dwconv3d";
  int res = 4;
  bool no_diff = false, no_corr = false;

  void attach(CLI::App* app) {
    app->add_option("--g", cfg.g, "current-stream window count");
    app->add_option("--bins", cfg.bins, "temporal bins per voxel grid");
    app->add_option("--d", cfg.d, "quarter-level feature channels");
    app->add_option("--dbar", cfg.dbar, "eighth-level feature channels");
    app->add_option("--stem-ch", cfg.stem_ch, "half-resolution trunk width (0 = d/2)");
    app->add_option("--hidden", cfg.hidden, "GRU hidden channels");
    app->add_option("--ctx", cfg.ctx, "context channels");
    app->add_option("--corr-levels", cfg.corr_levels, "correlation pyramid levels");
    app->add_option("--corr-radius", cfg.corr_radius, "correlation lookup radius");
    app->add_option("--corr-dim", cfg.corr_dim, "correlation feature channels");
    app->add_option("--scales", cfg.scales, "difference sampling strides")->delimiter(',');
    app->add_option("--reduction", cfg.reduction, "difference channel reduction ratio");
    app->add_option("--iters", cfg.iters, "refinement iterations");
    app->add_option("--agg", agg, "difference aggregation: dwconv3d|add|concat|gru");
    app->add_option("--resolution", res, "update resolution denominator: 4 or 8")
        ->check(CLI::IsMember({4, 8}));
    app->add_option("--se-reduction", cfg.se_reduction, "fusion attention reduction");
    app->add_flag("--no-diff", no_diff, "disable the difference branch");
    app->add_flag("--no-corr", no_corr, "disable the correlation branch");
  }

  ModelConfig resolve() {
    cfg.agg = diff::agg_style_from(agg);
    cfg.res = res == 8 ? UpdateRes::eighth : UpdateRes::quarter;
    cfg.use_diff = !no_diff;
    cfg.use_corr = !no_corr;
    cfg.validate();
    return cfg;
  }
};

// current window defaults to the trailing g/(g+1) span of the file; the
// leading slice acts as the reference window
void default_bounds(const EventStream& s, int g, int64_t& t_start, int64_t& t_end) {
  check(!s.events.empty(), ErrorKind::EmptyWindow, "event file holds no events");
  const int64_t t0 = s.events.front().t, t1 = s.events.back().t;
  check(t1 > t0, ErrorKind::EmptyWindow, "events span zero duration");
  t_start = t0 + (t1 - t0) / (g + 1);
  t_end = t1;
}

template <typename T>
int run_infer(const std::string& events_path, const std::string& ckpt_path, const std::string& out_path,
              const std::string& png_path, int iters, int64_t t_start, int64_t t_end,
              const std::string& init_flow_path) {
  auto manifest = read_checkpoint_manifest(ckpt_path);
  check(manifest.contains("meta") && manifest["meta"].contains("model"), ErrorKind::ParseError,
        "checkpoint carries no model description");
  ModelConfig cfg = manifest["meta"]["model"].get<ModelConfig>();
  Model<T> model(cfg, 0);
  load_checkpoint(ckpt_path, model.params());

  auto stream = read_evt(events_path);
  if (t_start < 0 || t_end < 0) default_bounds(stream, cfg.g, t_start, t_end);
  check(t_end > t_start, ErrorKind::InvalidConfig, "window end must follow window start");
  const int64_t dt = (t_end - t_start) / cfg.g;
  auto reference = slice_stream(stream, t_start - dt, t_start, false);
  auto current = slice_stream(stream, t_start, t_end, true);
  auto windows = split_windows(reference, current, cfg.g, cfg.bins);

  ad::Tensor<T> init;
  const ad::Tensor<T>* init_ptr = nullptr;
  if (!init_flow_path.empty()) {
    auto img = read_flo(init_flow_path);
    auto full = flow_to_tensor<T>(img);
    // cascade hook: a full-resolution prior is pooled down to the update grid
    auto cur = full;
    int denom = cfg.res == UpdateRes::quarter ? 4 : 8;
    for (int s = 1; s < denom; s *= 2) cur = ad::affine<T>(nullptr, ad::avg_pool2d<T>(nullptr, cur), T(0.5), T(0));
    init = cur;
    init_ptr = &init;
  }

  auto trace = model.run_iterations(nullptr, windows, iters, init_ptr);
  auto flow = tensor_to_flow(trace.final_flow());
  write_flo(out_path, flow);
  if (!png_path.empty()) write_flow_png(png_path, flow);
  std::cout << "wrote " << out_path << " (" << flow.width << "x" << flow.height << ")\n";
  return 0;
}

template <typename T>
int run_train(ModelConfig cfg, const TrainConfig& tc, const synth::DatasetConfig& dc, int val_count,
              const std::string& out_ckpt, const std::string& log_path) {
  synth::DatasetConfig all = dc;
  all.count = dc.count + val_count;
  auto samples = synth::make_dataset(all);
  std::vector<synth::Sample> train(samples.begin(), samples.begin() + dc.count);
  std::vector<synth::Sample> val(samples.begin() + dc.count, samples.end());

  Model<T> model(cfg, tc.seed);
  std::ofstream log;
  std::ostream* log_stream = nullptr;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::trunc);
    check(log.good(), ErrorKind::ParseError, "cannot open log file " + log_path);
    log_stream = &log;
  }
  auto result = fit(model, train, val, tc, log_stream);
  if (!out_ckpt.empty()) {
    nlohmann::json meta;
    meta["model"] = cfg;
    save_checkpoint(out_ckpt, model.params(), meta);
  }
  if (result.final_val_epe >= 0)
    std::cout << "final validation EPE: " << result.final_val_epe << "\n";
  return 0;
}

int run_synth(const synth::DatasetConfig& dc, const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto samples = synth::make_dataset(dc);
  for (size_t i = 0; i < samples.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "sample_%04zu", i);
    const auto& s = samples[i];
    EventStream merged = s.reference;
    merged.events.insert(merged.events.end(), s.current.events.begin(), s.current.events.end());
    merged.t_end = s.current.t_end;
    write_evt((fs::path(out_dir) / (std::string(name) + ".evt")).string(), merged);
    write_flo((fs::path(out_dir) / (std::string(name) + ".flo")).string(), s.gt);
  }
  std::cout << "wrote " << samples.size() << " samples to " << out_dir << "\n";
  return 0;
}

int run_eval(const std::string& pred_path, const std::string& gt_path, bool ignore_mask) {
  auto pred = read_flo(pred_path);
  auto gt = read_flo(gt_path);
  check(pred.width == gt.width && pred.height == gt.height, ErrorKind::ShapeError,
        "prediction and ground-truth sizes differ");
  std::vector<uint8_t> mask =
      ignore_mask ? std::vector<uint8_t>(gt.pixels(), 1) : finite_mask(gt);
  auto rep = evaluate_flow(pred, gt, mask);
  nlohmann::json j{{"epe", rep.epe},
                   {"ae", rep.ae},
                   {"1pe", rep.npe.at(1)},
                   {"2pe", rep.npe.at(2)},
                   {"3pe", rep.npe.at(3)},
                   {"outlier_pct", rep.outlier_pct},
                   {"valid_count", rep.valid_count}};
  std::cout << j.dump() << "\n";
  return 0;
}

int run_bench(ModelConfig cfg, int height, int width, const std::string& json_path, bool sweep) {
  auto b = macs::count_model(cfg, height, width);
  std::cout << "input " << width << "x" << height << ", " << b.iters << " iterations\n";
  std::cout << macs::format_table(b);
  std::cout << "  cost volume (one pass):        " << b.cost_volume_macs << " MACs\n";
  if (cfg.use_diff) {
    std::cout << "  difference layer (one pass):   " << b.diff_layer_macs << " MACs\n";
    std::cout << "  difference core (one pass):    " << b.diff_core_macs << " MACs\n";
  }
  std::cout << "  dense temporal volumes (hypo): " << b.dense_volume_macs << " MACs\n";

  nlohmann::json j;
  j["height"] = height;
  j["width"] = width;
  j["iters"] = b.iters;
  j["total_macs"] = b.total_macs;
  j["total_params"] = b.total_params;
  j["cost_volume_macs"] = b.cost_volume_macs;
  j["diff_layer_macs"] = b.diff_layer_macs;
  j["diff_core_macs"] = b.diff_core_macs;
  j["dense_volume_macs"] = b.dense_volume_macs;
  auto& entries = j["entries"] = nlohmann::json::array();
  for (const auto& e : b.entries)
    entries.push_back({{"name", e.name}, {"macs", e.macs}, {"params", e.params}});

  int rc = 0;
  if (sweep) {
    auto rep = macs::verify_scaling(cfg, {{128, 128}, {256, 256}, {512, 512}},
                                    {{256, 256}, {288, 384}, {480, 640}, {512, 512}});
    std::cout << rep.text;
    j["scaling"] = {{"cost_slope_n", rep.cost_slope_n},
                    {"diff_slope_n", rep.diff_slope_n},
                    {"diff_t_ratio", rep.diff_t_ratio},
                    {"dense_t_ratio", rep.dense_t_ratio},
                    {"min_dense_over_core", rep.min_dense_over_core}};
    if (!rep.slopes_ok || !rep.t_linear_ok || rep.min_dense_over_core < 50.0) {
      std::cout << "scaling checks FAILED\n";
      rc = 1;
    } else {
      std::cout << "scaling checks passed\n";
    }
  }
  if (!json_path.empty()) {
    std::ofstream out(json_path, std::ios::trunc);
    check(out.good(), ErrorKind::ParseError, "cannot open " + json_path);
    out << j.dump(2) << "\n";
  }
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"event-based optical flow with difference and correlation motion features"};
  app.require_subcommand(1);

  // infer
  auto* infer = app.add_subcommand("infer", "estimate flow for one event file");
  std::string ev_path, ckpt_path, out_path = "flow.flo", png_path, init_flow_path;
  int infer_iters = 0;
  int64_t t_start = -1, t_end = -1;
  bool f64 = false;
  infer->add_option("--events", ev_path, "EVT1 event file")->required();
  infer->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  infer->add_option("--out", out_path, "output flow file");
  infer->add_option("--png", png_path, "optional color-wheel rendering");
  infer->add_option("--iters", infer_iters, "refinement iterations (0 = checkpoint default)");
  infer->add_option("--t-start", t_start, "current-window start, microseconds");
  infer->add_option("--t-end", t_end, "current-window end, microseconds");
  infer->add_option("--init-flow", init_flow_path, "initial full-resolution flow (cascade hook)");
  infer->add_flag("--f64", f64, "run in double precision");

  // train
  auto* train = app.add_subcommand("train", "train on synthetic scenes");
  ModelFlags train_model;
  train_model.attach(train);
  TrainConfig tc;
  synth::DatasetConfig dc;
  int val_count = 32;
  std::string train_ckpt = "model.ckpt", train_log;
  train->add_option("--steps", tc.total_steps, "optimizer steps");
  train->add_option("--batch", tc.batch, "batch size");
  train->add_option("--lr", tc.max_lr, "one-cycle maximum learning rate");
  train->add_option("--weight-decay", tc.weight_decay, "decoupled weight decay");
  train->add_option("--clip", tc.grad_clip, "global gradient-norm clip");
  train->add_option("--pct-start", tc.pct_start, "one-cycle warmup fraction");
  train->add_option("--seed", tc.seed, "seed for init, sampling, augmentation");
  train->add_option("--crop", tc.crop, "square training crop (0 = off)");
  train->add_option("--hflip-p", tc.hflip_p, "horizontal flip probability");
  train->add_option("--vflip-p", tc.vflip_p, "vertical flip probability");
  train->add_option("--samples", dc.count, "training sample count");
  train->add_option("--val-samples", val_count, "held-out sample count");
  train->add_option("--size", dc.width, "square scene size")->check(CLI::PositiveNumber);
  train->add_option("--max-disp", dc.max_disp, "velocity disc radius, pixels per window");
  train->add_option("--duration-us", dc.duration_us, "current-window duration");
  train->add_option("--contrast", dc.contrast, "contrast threshold");
  train->add_option("--noise", dc.noise_rate, "background events per pixel per window");
  train->add_option("--out", train_ckpt, "output checkpoint");
  train->add_option("--log", train_log, "training log (JSON lines)");
  train->add_flag("--f64", f64, "train in double precision");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "write synthetic event/flow samples");
  synth::DatasetConfig sdc;
  std::string synth_dir = "synth_out";
  synth_cmd->add_option("--out", synth_dir, "output directory");
  synth_cmd->add_option("--count", sdc.count, "sample count");
  synth_cmd->add_option("--seed", sdc.seed, "dataset seed");
  synth_cmd->add_option("--size", sdc.width, "square scene size")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--max-disp", sdc.max_disp, "velocity disc radius");
  synth_cmd->add_option("--duration-us", sdc.duration_us, "current-window duration");
  synth_cmd->add_option("--contrast", sdc.contrast, "contrast threshold");
  synth_cmd->add_option("--noise", sdc.noise_rate, "background events per pixel per window");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "compare a flow file against ground truth");
  std::string pred_path, gt_path;
  bool ignore_mask = false;
  eval_cmd->add_option("--pred", pred_path, "predicted flow")->required();
  eval_cmd->add_option("--gt", gt_path, "ground-truth flow")->required();
  eval_cmd->add_flag("--no-mask", ignore_mask, "treat every pixel as valid");

  // viz
  auto* viz_cmd = app.add_subcommand("viz", "render a flow file as a PNG");
  std::string viz_flow, viz_out = "flow.png";
  viz_cmd->add_option("--flow", viz_flow, "flow file")->required();
  viz_cmd->add_option("--out", viz_out, "output PNG");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "analytic MAC and parameter accounting");
  ModelFlags bench_model;
  bench_model.attach(bench_cmd);
  int bench_h = 480, bench_w = 640;
  std::string bench_json;
  bool bench_sweep = false;
  bench_cmd->add_option("--height", bench_h, "input height");
  bench_cmd->add_option("--width", bench_w, "input width");
  bench_cmd->add_option("--json", bench_json, "write the breakdown as JSON");
  bench_cmd->add_flag("--sweep", bench_sweep, "run the scaling verification");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(infer))
      return f64 ? run_infer<double>(ev_path, ckpt_path, out_path, png_path, infer_iters, t_start,
                                     t_end, init_flow_path)
                 : run_infer<float>(ev_path, ckpt_path, out_path, png_path, infer_iters, t_start,
                                    t_end, init_flow_path);
    if (app.got_subcommand(train)) {
      auto cfg = train_model.resolve();
      dc.height = dc.width;
      return f64 ? run_train<double>(cfg, tc, dc, val_count, train_ckpt, train_log)
                 : run_train<float>(cfg, tc, dc, val_count, train_ckpt, train_log);
    }
    if (app.got_subcommand(synth_cmd)) {
      sdc.height = sdc.width;
      return run_synth(sdc, synth_dir);
    }
    if (app.got_subcommand(eval_cmd)) return run_eval(pred_path, gt_path, ignore_mask);
    if (app.got_subcommand(viz_cmd)) {
      write_flow_png(viz_out, read_flo(viz_flow));
      std::cout << "wrote " << viz_out << "\n";
      return 0;
    }
    if (app.got_subcommand(bench_cmd))
      return run_bench(bench_model.resolve(), bench_h, bench_w, bench_json, bench_sweep);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
