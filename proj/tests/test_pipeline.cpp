#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "doctest.h"
#include "oracles.hpp"
#include "vads/checkpoint.hpp"
#include "vads/data.hpp"
#include "vads/error.hpp"
#include "vads/pipeline.hpp"

using namespace vads;

namespace {

std::vector<VideoRecord> tiny_dataset(std::uint64_t seed) {
  SyntheticConfig cfg;
  cfg.n_videos = 4;
  cfg.t_min = 24;
  cfg.t_max = 32;
  cfg.feature_dim = 8;
  cfg.n_classes = 4;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

SegmenterModel tiny_segmenter(std::uint64_t seed) {
  SegmenterConfig c;
  c.input_dim = 8;
  c.hidden = 8;
  return SegmenterModel::create(c, seed);
}

TaggerModel tiny_tagger(std::uint64_t seed) {
  TaggerConfig c;
  c.n_classes = 4;
  c.pooling.input_dim = 8;
  c.pooling.expansion = 1;
  c.pooling.groups = 2;
  c.pooling.clusters = 4;
  c.text.vocab.size = 128;
  c.text.embed_dim = 8;
  c.text.output_dim = 8;
  return TaggerModel::create(c, seed);
}

}  // namespace

TEST_CASE("prediction output tiles every video and is canonically ordered") {
  const auto records = tiny_dataset(1);
  const SegmenterModel seg = tiny_segmenter(2);
  const TaggerModel tag = tiny_tagger(3);
  PredictConfig cfg;
  cfg.boundary_threshold = 0.4;
  const auto preds = predict_dataset(records, {&seg}, {&tag}, cfg);
  REQUIRE(preds.size() == records.size());
  for (std::size_t i = 1; i < preds.size(); ++i) CHECK(preds[i - 1].id < preds[i].id);
  for (const VideoPrediction& p : preds) {
    REQUIRE(!p.scenes.empty());
    CHECK(p.scenes.front().start == 0.0);
    for (std::size_t s = 0; s < p.scenes.size(); ++s) {
      CHECK(p.scenes[s].start < p.scenes[s].end);
      if (s > 0) CHECK(p.scenes[s].start == p.scenes[s - 1].end);
      CHECK(p.scenes[s].scores.size() == 4);
      CHECK(!p.scenes[s].labels.empty());
    }
  }
}

TEST_CASE("a duplicated checkpoint changes nothing and workers do not matter") {
  const auto records = tiny_dataset(4);
  const SegmenterModel seg = tiny_segmenter(5);
  const TaggerModel tag = tiny_tagger(6);
  PredictConfig cfg;
  const auto single = predict_dataset(records, {&seg}, {&tag}, cfg);
  const auto doubled = predict_dataset(records, {&seg, &seg}, {&tag, &tag, &tag}, cfg);
  PredictConfig serial = cfg;
  serial.workers = 1;
  const auto sequential = predict_dataset(records, {&seg}, {&tag}, serial);

  REQUIRE(single.size() == doubled.size());
  for (std::size_t i = 0; i < single.size(); ++i) {
    REQUIRE(single[i].scenes.size() == doubled[i].scenes.size());
    REQUIRE(single[i].scenes.size() == sequential[i].scenes.size());
    for (std::size_t s = 0; s < single[i].scenes.size(); ++s) {
      CHECK(single[i].scenes[s].scores == doubled[i].scenes[s].scores);
      CHECK(single[i].scenes[s].scores == sequential[i].scenes[s].scores);
      CHECK(single[i].scenes[s].labels == doubled[i].scenes[s].labels);
    }
  }
}

TEST_CASE("model/data dimension mismatches raise configuration errors") {
  const auto records = tiny_dataset(7);
  const SegmenterModel seg = tiny_segmenter(8);
  const TaggerModel tag = tiny_tagger(9);

  SegmenterConfig wrong;
  wrong.input_dim = 16;
  const SegmenterModel bad_seg = SegmenterModel::create(wrong, 10);
  CHECK_THROWS_AS(predict_dataset(records, {&bad_seg}, {&tag}, {}), ConfigError);
  CHECK_THROWS_AS(predict_dataset(records, {&seg, &bad_seg}, {&tag}, {}), ConfigError);
  CHECK_THROWS_AS(predict_dataset(records, {}, {&tag}, {}), ConfigError);
  CHECK_THROWS_AS(predict_dataset(records, {&seg}, {}, {}), ConfigError);

  TaggerModel other_vocab = tiny_tagger(11);
  other_vocab.config.text.vocab.hash_seed ^= 1;
  CHECK_THROWS_AS(predict_dataset(records, {&seg}, {&tag, &other_vocab}, {}), ConfigError);
}

TEST_CASE("prediction files round-trip") {
  const auto records = tiny_dataset(12);
  const SegmenterModel seg = tiny_segmenter(13);
  const TaggerModel tag = tiny_tagger(14);
  const auto preds = predict_dataset(records, {&seg}, {&tag}, {});
  const std::string path = "/tmp/vads_preds.jsonl";
  write_predictions(preds, path);
  const auto loaded = load_predictions(path);
  REQUIRE(loaded.size() == preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    CHECK(loaded[i].id == preds[i].id);
    REQUIRE(loaded[i].scenes.size() == preds[i].scenes.size());
    for (std::size_t s = 0; s < preds[i].scenes.size(); ++s) {
      CHECK(loaded[i].scenes[s].start == preds[i].scenes[s].start);
      CHECK(loaded[i].scenes[s].end == preds[i].scenes[s].end);
      CHECK(loaded[i].scenes[s].scores == preds[i].scenes[s].scores);
      CHECK(loaded[i].scenes[s].labels == preds[i].scenes[s].labels);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("score sweep holds F1 and mAP fixed while label sets grow") {
  const auto records = tiny_dataset(15);
  const SegmenterModel seg = tiny_segmenter(16);
  const TaggerModel tag = tiny_tagger(17);
  const auto rows = sweep_thresholds(records, {&seg}, {&tag}, {}, {0.5, 0.45, 0.4, 0.35},
                                     SweepTarget::Score);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].f1 == rows[0].f1);
    CHECK(rows[i].avg_map == rows[0].avg_map);
    CHECK(rows[i].final == rows[0].final);
    if (i > 0) CHECK(rows[i].threshold < rows[i - 1].threshold);
  }
  CHECK_THROWS_AS(
      sweep_thresholds(records, {&seg}, {&tag}, {}, {}, SweepTarget::Score), ConfigError);
  CHECK_THROWS_AS(
      sweep_thresholds(records, {&seg}, {&tag}, {}, {1.2}, SweepTarget::Score), ConfigError);
}

TEST_CASE("boundary sweep rows stay consistent with single evaluations") {
  const auto records = tiny_dataset(18);
  const SegmenterModel seg = tiny_segmenter(19);
  const TaggerModel tag = tiny_tagger(20);
  PredictConfig base;
  const auto rows =
      sweep_thresholds(records, {&seg}, {&tag}, base, {0.55, 0.45}, SweepTarget::Boundary);
  REQUIRE(rows.size() == 2);
  for (const SweepRow& row : rows) {
    PredictConfig cfg = base;
    cfg.boundary_threshold = row.threshold;
    const auto preds = predict_dataset(records, {&seg}, {&tag}, cfg);
    const MetricReport report = evaluate_predictions(preds, records);
    CHECK(report.boundary.f1 == doctest::Approx(row.f1));
    CHECK(report.avg_map == doctest::Approx(row.avg_map));
    CHECK(report.final == doctest::Approx(row.final));
  }
}

#ifdef VADS_CLI_PATH

namespace {

void run_shell(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  (void)rc;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VADS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("cli end-to-end: generate, train both stages, predict, evaluate, sweep") {
  const std::string dir = "/tmp/vads_cli";
  run_shell(("rm -rf " + dir + " && mkdir -p " + dir).c_str());
  const std::string data = dir + "/data.jsonl";

  CHECK(run_cli("gen-synthetic --out " + data +
                " --n-videos 4 --t-min 24 --t-max 32 --feature-dim 8 --classes 4 --seed 7") == 0);

  CHECK(run_cli("train-seg --data " + data + " --out " + dir +
                "/seg.bin --epochs 1 --batch 2 --hidden 8 --history " + dir +
                "/seg_hist.jsonl --seed 7") == 0);
  CHECK(run_cli("train-tag --data " + data + " --out " + dir +
                "/tag.bin --epochs 1 --batch 8 --classes 4 --groups 2 --clusters 4 "
                "--expansion 1 --embed-dim 8 --text-dim 8 --vocab 128 --seed 7") == 0);

  CHECK(run_cli("predict --data " + data + " --seg " + dir + "/seg.bin --tag " + dir +
                "/tag.bin --out " + dir + "/preds.jsonl --boundary-threshold 0.4") == 0);
  CHECK(run_cli("evaluate --pred " + dir + "/preds.jsonl --data " + data + " --out " + dir +
                "/report.json") == 0);
  CHECK(run_cli("sweep --data " + data + " --seg " + dir + "/seg.bin --tag " + dir +
                "/tag.bin --which score --thresholds 0.5 0.45 0.4 0.35") == 0);

  std::ifstream report(dir + "/report.json");
  REQUIRE(report.good());
  const std::string text((std::istreambuf_iterator<char>(report)),
                         std::istreambuf_iterator<char>());
  CHECK(text.find("final") != std::string::npos);
  run_shell(("rm -rf " + dir).c_str());
}

TEST_CASE("cli: epochs 0 writes the untouched initialisation and resume continues Adam") {
  const std::string dir = "/tmp/vads_cli2";
  run_shell(("rm -rf " + dir + " && mkdir -p " + dir).c_str());
  const std::string data = dir + "/data.jsonl";
  CHECK(run_cli("gen-synthetic --out " + data +
                " --n-videos 3 --t-min 24 --t-max 28 --feature-dim 8 --classes 3 --seed 3") == 0);

  CHECK(run_cli("train-seg --data " + data + " --out " + dir +
                "/seg0.bin --epochs 0 --hidden 8 --seed 3") == 0);
  const Checkpoint init = read_checkpoint(dir + "/seg0.bin");
  CHECK(init.store.adam_step_count() == 0);

  CHECK(run_cli("train-seg --data " + data + " --out " + dir +
                "/seg1.bin --epochs 1 --batch 64 --hidden 8 --seed 3") == 0);
  const Checkpoint one = read_checkpoint(dir + "/seg1.bin");
  CHECK(one.store.adam_step_count() == 1);

  CHECK(run_cli("train-seg --data " + data + " --init " + dir + "/seg1.bin --out " + dir +
                "/seg2.bin --epochs 1 --batch 64 --seed 3") == 0);
  const Checkpoint two = read_checkpoint(dir + "/seg2.bin");
  CHECK(two.store.adam_step_count() == 2);
  run_shell(("rm -rf " + dir).c_str());
}

TEST_CASE("cli exit codes distinguish parse, validation and configuration errors") {
  const std::string dir = "/tmp/vads_cli3";
  run_shell(("rm -rf " + dir + " && mkdir -p " + dir).c_str());

  // Unknown flag: parse error.
  CHECK(run_cli("gen-synthetic --does-not-exist 1") == 2);

  // Malformed dataset line: parse error.
  {
    std::ofstream os(dir + "/bad.jsonl");
    os << "this is not json\n";
  }
  CHECK(run_cli("train-seg --data " + dir + "/bad.jsonl --out " + dir + "/x.bin --epochs 1") ==
        2);

  // Degenerate generator config: configuration error.
  CHECK(run_cli("gen-synthetic --out " + dir + "/d.jsonl --feature-dim 2") == 4);

  // Overlapping scenes: validation error.
  {
    std::ofstream os(dir + "/overlap.jsonl");
    os << R"({"id":"v","snippet_rate":1.0,"features":[[0,0],[0,0],[0,0],[0,0]],)"
       << R"("ocr":[[],[],[],[]],"asr":[],)"
       << R"("scenes":[{"start":0.0,"end":3.0,"labels":[0]},{"start":2.0,"end":4.0,"labels":[1]}]})"
       << "\n";
  }
  CHECK(run_cli("train-seg --data " + dir + "/overlap.jsonl --out " + dir +
                "/x.bin --epochs 1") == 3);
  run_shell(("rm -rf " + dir).c_str());
}

#endif  // VADS_CLI_PATH
