#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "edcflow/flowio.hpp"

namespace fs = std::filesystem;
using namespace edcflow;

namespace {

struct CmdResult {
  int code = -1;
  std::string out;
};

CmdResult run(const std::string& args) {
  const std::string cmd = std::string(EDCFLOW_BIN) + " " + args + " 2>&1";
  std::FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult r;
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), pipe)) r.out += buf;
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("edcflow_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("cli pipeline: synth, train, infer, eval, viz") {
  TempDir dir;
  auto synth = run("synth --out " + dir.file("data") + " --count 2 --seed 3 --size 32 --max-disp 3");
  CHECK(synth.code == 0);
  CHECK(fs::exists(dir.file("data") + "/sample_0000.evt"));
  CHECK(fs::exists(dir.file("data") + "/sample_0000.flo"));

  // a very short training run just to produce a loadable checkpoint
  auto train = run(
      "train --steps 3 --batch 1 --samples 2 --val-samples 1 --size 32 --max-disp 3 --seed 5"
      " --g 3 --bins 2 --d 12 --dbar 16 --stem-ch 8 --hidden 12 --ctx 12 --corr-levels 2"
      " --corr-radius 3 --corr-dim 12 --scales 1,3 --iters 2 --se-reduction 4"
      " --out " + dir.file("model.ckpt") + " --log " + dir.file("train.jsonl"));
  CHECK(train.code == 0);
  CHECK(fs::exists(dir.file("model.ckpt")));
  CHECK(fs::exists(dir.file("train.jsonl")));
  {
    std::ifstream log(dir.file("train.jsonl"));
    std::string line;
    int lines = 0;
    while (std::getline(log, line)) {
      auto j = nlohmann::json::parse(line);
      CHECK(j.contains("step"));
      CHECK(j.contains("lr"));
      CHECK(j.contains("loss"));
      ++lines;
    }
    CHECK(lines >= 1);
  }

  auto infer = run("infer --events " + dir.file("data") + "/sample_0000.evt --ckpt " +
                   dir.file("model.ckpt") + " --out " + dir.file("pred.flo") + " --png " +
                   dir.file("pred.png") + " --iters 2");
  CHECK(infer.code == 0);
  CHECK(fs::exists(dir.file("pred.flo")));
  CHECK(fs::exists(dir.file("pred.png")));

  auto eval = run("eval --pred " + dir.file("pred.flo") + " --gt " + dir.file("data") +
                  "/sample_0000.flo");
  CHECK(eval.code == 0);
  auto j = nlohmann::json::parse(eval.out);
  CHECK(j.contains("epe"));
  CHECK(j.contains("ae"));
  CHECK(j.contains("1pe"));
  CHECK(j.contains("2pe"));
  CHECK(j.contains("3pe"));
  CHECK(j.contains("outlier_pct"));

  // self-evaluation yields all-zero error metrics
  auto self_eval = run("eval --pred " + dir.file("data") + "/sample_0000.flo --gt " +
                       dir.file("data") + "/sample_0000.flo");
  CHECK(self_eval.code == 0);
  auto js = nlohmann::json::parse(self_eval.out);
  CHECK(js.at("epe").get<double>() == 0.0);
  CHECK(js.at("1pe").get<double>() == 0.0);

  auto viz = run("viz --flow " + dir.file("pred.flo") + " --out " + dir.file("again.png"));
  CHECK(viz.code == 0);
  auto viz2 = run("viz --flow " + dir.file("pred.flo") + " --out " + dir.file("again2.png"));
  CHECK(viz2.code == 0);
  CHECK(read_bytes(dir.file("again.png")) == read_bytes(dir.file("again2.png")));
}

TEST_CASE("missing input file exits with code 2") {
  TempDir dir;
  auto r = run("viz --flow " + dir.file("nope.flo") + " --out " + dir.file("x.png"));
  CHECK(r.code == 2);
}

TEST_CASE("flow file round trip is bitwise exact") {
  TempDir dir;
  FlowImage img = FlowImage::zeros(7, 5);
  Rng rng(9);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform(-8.0, 8.0));
  img.data[4] = std::numeric_limits<float>::quiet_NaN();
  const std::string path = dir.file("rt.flo");
  write_flo(path, img);
  auto r = read_flo(path);
  CHECK(r.width == img.width);
  CHECK(r.height == img.height);
  const std::string b1 = read_bytes(path);
  write_flo(dir.file("rt2.flo"), r);
  CHECK(read_bytes(dir.file("rt2.flo")) == b1);
}

TEST_CASE("eval rejects mismatched shapes with exit code 3") {
  TempDir dir;
  write_flo(dir.file("a.flo"), FlowImage::zeros(4, 4));
  write_flo(dir.file("b.flo"), FlowImage::zeros(5, 4));
  auto r = run("eval --pred " + dir.file("a.flo") + " --gt " + dir.file("b.flo"));
  CHECK(r.code == 3);
}

TEST_CASE("zero flow renders as a white image") {
  TempDir dir;
  write_flo(dir.file("z.flo"), FlowImage::zeros(6, 6));
  auto r = run("viz --flow " + dir.file("z.flo") + " --out " + dir.file("z.png"));
  CHECK(r.code == 0);
  CHECK(fs::exists(dir.file("z.png")));
}

TEST_CASE("bench emits a table, JSON, and passing scaling checks") {
  TempDir dir;
  auto r = run("bench --height 128 --width 128 --json " + dir.file("bench.json") + " --sweep");
  CHECK(r.code == 0);
  CHECK(r.out.find("scaling checks passed") != std::string::npos);
  auto j = nlohmann::json::parse(read_bytes(dir.file("bench.json")));
  CHECK(j.at("total_macs").get<int64_t>() > 0);
  CHECK(j.at("total_params").get<int64_t>() > 0);
  CHECK(j.at("scaling").at("min_dense_over_core").get<double>() >= 50.0);
}

TEST_CASE("infer honors explicit window bounds and --iters 1") {
  TempDir dir;
  REQUIRE(run("synth --out " + dir.file("d") + " --count 1 --seed 11 --size 32 --max-disp 2").code == 0);
  REQUIRE(run("train --steps 1 --batch 1 --samples 1 --val-samples 0 --size 32 --max-disp 2 --seed 2"
              " --g 3 --bins 2 --d 12 --dbar 16 --stem-ch 8 --hidden 12 --ctx 12 --corr-levels 2"
              " --corr-radius 3 --corr-dim 12 --scales 1,3 --iters 2 --se-reduction 4 --out " +
              dir.file("m.ckpt")).code == 0);
  // the synthetic timeline puts the reference window in the first quarter
  auto r = run("infer --events " + dir.file("d") + "/sample_0000.evt --ckpt " + dir.file("m.ckpt") +
               " --iters 1 --t-start 33333 --t-end 133333 --out " + dir.file("p.flo"));
  CHECK(r.code == 0);
  auto img = read_flo(dir.file("p.flo"));
  CHECK(img.width == 32);
  CHECK(img.height == 32);
}
