#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sprint/arrayio.hpp"
#include "sprint/pipeline.hpp"

using namespace sprint;

namespace {

namespace fs = std::filesystem;

std::string pipe_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p.string();
}

std::string smoke_config(const std::string& out) {
  return "seed = 123\n"
         "io.out = " +
         out +
         "\n"
         "image.size = 8\n"
         "model.patch = 2\n"
         "model.hidden = 32\n"
         "model.heads = 2\n"
         "model.enc_depth = 1\n"
         "model.mid_depth = 2\n"
         "model.dec_depth = 1\n"
         "data.size = 256\n"
         "pretrain.iters = 30\n"
         "finetune.iters = 10\n"
         "finetune.warmup = 5\n"
         "train.batch = 8\n"
         "sample.steps = 4\n"
         "sample.count = 12\n"
         "ckpt.every = 20\n";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int64_t count_lines(const std::string& text) {
  int64_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

// compared as a bool so a failure does not dump whole binary files
bool files_equal(const std::string& a, const std::string& b) { return slurp(a) == slurp(b); }

}  // namespace

TEST_CASE("pipeline smoke run produces every artifact") {
  std::string out = pipe_dir("sprint_pipe_a");
  RunConfig cfg = parse_config_text(smoke_config(out));
  PipelineResult res = run_pipeline(cfg);

  REQUIRE(res.out_dir == out);
  REQUIRE(res.accuracy.count("none") == 1);
  REQUIRE(res.accuracy.count("cfg") == 1);
  REQUIRE(res.accuracy.count("pdg") == 1);
  for (auto& [mode, acc] : res.accuracy) {
    REQUIRE(acc >= 0.0);
    REQUIRE(acc <= 1.0);
  }
  REQUIRE(res.loss_first50_avg > 0.0);
  REQUIRE(std::isfinite(res.loss_final));

  std::string metrics = slurp(out + "/metrics.ndjson");
  REQUIRE(count_lines(metrics) == 40);
  REQUIRE(metrics.find("\"phase\":\"pretrain\"") != std::string::npos);
  REQUIRE(metrics.find("\"phase\":\"finetune\"") != std::string::npos);
  REQUIRE(count_lines(slurp(out + "/timings.ndjson")) == 40);
  REQUIRE(fs::exists(out + "/config.txt"));
  REQUIRE(fs::exists(out + "/summary.json"));
  REQUIRE(fs::exists(out + "/ckpt_000020.sprint"));
  REQUIRE(fs::exists(out + "/ckpt_000040.sprint"));
  REQUIRE(res.final_checkpoint == out + "/ckpt_final.sprint");
  REQUIRE(fs::exists(res.final_checkpoint));

  for (const char* mode : {"none", "cfg", "pdg"}) {
    fs::path dir = fs::path(out) / (std::string("samples_") + mode);
    Tensor<float> img = read_array((dir / "sample_0_0.arr").string());
    REQUIRE(img.shape == std::vector<int64_t>{8, 8, 1});
    REQUIRE(fs::exists(dir / "sample_0_0.pgm"));
  }
}

TEST_CASE("identical configs replay to byte-identical metrics and weights") {
  std::string out_a = pipe_dir("sprint_pipe_b1");
  std::string out_b = pipe_dir("sprint_pipe_b2");
  run_pipeline(parse_config_text(smoke_config(out_a)));
  run_pipeline(parse_config_text(smoke_config(out_b)));
  REQUIRE(files_equal(out_a + "/metrics.ndjson", out_b + "/metrics.ndjson"));
  REQUIRE(files_equal(out_a + "/ckpt_final.sprint", out_b + "/ckpt_final.sprint"));
}

TEST_CASE("resuming a mid-run checkpoint reproduces the original endpoint") {
  std::string out_a = pipe_dir("sprint_pipe_c1");
  std::string out_b = pipe_dir("sprint_pipe_c2");
  run_pipeline(parse_config_text(smoke_config(out_a)));

  RunConfig cfg = parse_config_text(smoke_config(out_b));
  fs::create_directories(out_b);
  PipelineResult res = run_pipeline(cfg, out_a + "/ckpt_000020.sprint");
  REQUIRE(files_equal(res.final_checkpoint, out_a + "/ckpt_final.sprint"));
  REQUIRE(count_lines(slurp(out_b + "/metrics.ndjson")) == 20);
}

TEST_CASE("zero finetune iterations skips the phase") {
  std::string out = pipe_dir("sprint_pipe_d");
  RunConfig cfg = parse_config_text(smoke_config(out));
  cfg.train.finetune_iters = 0;
  cfg.train.pretrain_iters = 8;
  PipelineResult res = run_pipeline(cfg);

  std::string metrics = slurp(out + "/metrics.ndjson");
  REQUIRE(count_lines(metrics) == 8);
  REQUIRE(metrics.find("\"phase\":\"finetune\"") == std::string::npos);
  REQUIRE(fs::exists(res.final_checkpoint));
}

TEST_CASE("finetune-only phase runs from a checkpoint") {
  std::string out_a = pipe_dir("sprint_pipe_e1");
  RunConfig pre = parse_config_text(smoke_config(out_a));
  pre.train.pretrain_iters = 8;
  pre.train.finetune_iters = 0;
  PipelineResult first = run_pipeline(pre);

  std::string out_b = pipe_dir("sprint_pipe_e2");
  RunConfig fin = parse_config_text(smoke_config(out_b));
  fin.train.pretrain_iters = 8;
  fin.train.finetune_iters = 6;
  PipelineResult res = run_finetune_phase(fin, first.final_checkpoint);

  REQUIRE(std::isfinite(res.loss_final));
  REQUIRE(fs::exists(res.final_checkpoint));
  std::string metrics = slurp(out_b + "/metrics.ndjson");
  REQUIRE(count_lines(metrics) == 6);
  REQUIRE(metrics.find("\"phase\":\"pretrain\"") == std::string::npos);
}
