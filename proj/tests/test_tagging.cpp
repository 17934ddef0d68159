#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "oracles.hpp"
#include "vads/data.hpp"
#include "vads/error.hpp"
#include "vads/tagging.hpp"

using namespace vads;

namespace {

TaggerConfig tiny_config(std::size_t n_classes = 3) {
  TaggerConfig c;
  c.n_classes = n_classes;
  c.pooling.input_dim = 4;
  c.pooling.expansion = 2;
  c.pooling.groups = 2;
  c.pooling.clusters = 4;
  c.text.vocab.size = 64;
  c.text.embed_dim = 8;
  c.text.output_dim = 6;
  c.text.max_len = 32;
  return c;
}

const std::vector<std::vector<std::string>> kOcr{{"promo"}, {"deal"}};
const std::vector<std::string> kAsr{"buy", "now"};

}  // namespace

TEST_CASE("zero fusion head scores 0.5 everywhere") {
  TaggerModel model = TaggerModel::create(tiny_config(), 1);
  for (double& v : model.store.value("head_f/w").values) v = 0.0;
  for (double& v : model.store.value("head_f/b").values) v = 0.0;
  const Tensor scores = tag_scene(model, oracles::random_tensor({5, 4}, 2), kOcr, kAsr,
                                  WeightSource::Raw);
  REQUIRE(scores.numel() == 3);
  for (double s : scores.values) CHECK(s == doctest::Approx(0.5));
}

TEST_CASE("score vector length equals the configured class count") {
  TaggerModel model = TaggerModel::create(tiny_config(82), 3);
  const Tensor scores = tag_scene(model, oracles::random_tensor({4, 4}, 4), kOcr, kAsr,
                                  WeightSource::Raw);
  CHECK(scores.numel() == 82);
  for (double s : scores.values) {
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("scores are invariant to permuting scene snippets") {
  TaggerModel model = TaggerModel::create(tiny_config(), 5);
  const Tensor x = oracles::random_tensor({6, 4}, 6);
  Tensor permuted = Tensor::zeros({6, 4});
  const std::size_t perm[6] = {3, 0, 5, 1, 4, 2};
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t d = 0; d < 4; ++d) permuted.at2(i, d) = x.at2(perm[i], d);
  }
  const Tensor a = tag_scene(model, x, kOcr, kAsr, WeightSource::Raw);
  const Tensor b = tag_scene(model, permuted, kOcr, kAsr, WeightSource::Raw);
  CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("empty scenes are rejected unless the fallback variant is used") {
  TaggerModel model = TaggerModel::create(tiny_config(), 7);
  CHECK_THROWS_AS(tag_scene(model, Tensor::zeros({0, 4}), kOcr, kAsr, WeightSource::Raw),
                  ValidationError);
  const Tensor scores =
      tag_scene_or_default(model, Tensor::zeros({0, 4}), kOcr, kAsr, WeightSource::Raw);
  CHECK(scores.numel() == 3);
}

TEST_CASE("late-average fusion averages the modality logits") {
  TaggerConfig cfg = tiny_config();
  cfg.late_average = true;
  TaggerModel model = TaggerModel::create(cfg, 8);
  const Tensor scores = tag_scene(model, oracles::random_tensor({4, 4}, 9), kOcr, kAsr,
                                  WeightSource::Raw);
  CHECK(scores.numel() == 3);

  // With the text head zeroed, late-average scores are sigmoid(v/2).
  for (double& v : model.store.value("head_t/w").values) v = 0.0;
  for (double& v : model.store.value("head_t/b").values) v = 0.0;
  Graph g;
  TaggerParamIds ids = use_tagger_params(g, model, WeightSource::Raw);
  const Tensor x = oracles::random_tensor({4, 4}, 9);
  ValueId v_desc = aggregate(g, g.input(x), ids.streams[0], model.config.pooling);
  ValueId v_logits = g.dense(v_desc, ids.head_v_w, ids.head_v_b);
  const Tensor expect = g.value(g.sigmoid(g.scale(v_logits, 0.5)));
  const Tensor got = tag_scene(model, x, kOcr, kAsr, WeightSource::Raw);
  CHECK(max_abs_diff(expect, got) < 1e-12);
}

TEST_CASE("multi-stream descriptors feed one visual head") {
  TaggerConfig cfg = tiny_config();
  cfg.n_streams = 3;
  TaggerModel model = TaggerModel::create(cfg, 10);
  CHECK(model.store.value("head_v/w").dim(0) == 3 * cfg.pooling.clusters);
  const Tensor scores = tag_scene(model, oracles::random_tensor({4, 4}, 11), kOcr, kAsr,
                                  WeightSource::Raw);
  CHECK(scores.numel() == 3);
}

TEST_CASE("tagging loss closed forms") {
  CHECK(tagging_loss(Tensor::vec({1.0, 0.0}), {0}) == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(tagging_loss(Tensor::vec({0.5, 0.5}), {0}) == doctest::Approx(2.0 * std::log(2.0)));
  CHECK_THROWS_AS(tagging_loss(Tensor::vec({0.5, 0.5}), {2}), ValidationError);
  CHECK_THROWS_AS(tagging_loss(Tensor::vec({0.5}), {-1}), ValidationError);

  // The loss is a sum: uninformative scores scale linearly with C.
  const double l4 = tagging_loss(Tensor::full({4}, 0.5), {0});
  const double l8 = tagging_loss(Tensor::full({8}, 0.5), {0});
  CHECK(l8 == doctest::Approx(2.0 * l4 + 0.0).epsilon(1e-9));
  CHECK(tagging_loss(Tensor::vec({0.9, 0.1}), {0}) >= 0.0);
}

TEST_CASE("score ensembling averages and rejects misuse") {
  const Tensor a = Tensor::vec({0.2, 0.8});
  const Tensor b = Tensor::vec({0.6, 0.4});
  CHECK(ensemble_scene_scores({a}).values == a.values);
  const Tensor mean = ensemble_scene_scores({a, b});
  CHECK(mean.at(0) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(mean.at(1) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK_THROWS_AS(ensemble_scene_scores({}), ValidationError);
  CHECK_THROWS_AS(ensemble_scene_scores({a, Tensor::vec({0.1})}), DimensionError);

  // Identical models ensemble to the member exactly.
  CHECK(ensemble_scene_scores({a, a, a}).values == a.values);
}

TEST_CASE("score thresholding with argmax fallback") {
  const Tensor scores = Tensor::vec({0.6, 0.4, 0.5});
  CHECK(apply_score_threshold(scores, 0.5) == std::vector<int>{0, 2});
  CHECK(apply_score_threshold(Tensor::vec({0.2, 0.3, 0.1}), 0.5) == std::vector<int>{1});
  CHECK_THROWS_AS(apply_score_threshold(scores, 0.0), ConfigError);
  CHECK_THROWS_AS(apply_score_threshold(scores, 1.0), ConfigError);

  // Lower thresholds never shrink the label set.
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor s = Tensor::zeros({6});
    for (double& v : s.values) v = rng.uniform(0.0, 1.0);
    std::vector<int> prev;
    for (double theta : {0.5, 0.45, 0.4, 0.35}) {
      const auto labels = apply_score_threshold(s, theta);
      CHECK(std::includes(labels.begin(), labels.end(), prev.begin(), prev.end()));
      prev = labels;
    }
  }
}

TEST_CASE("full pipeline gradients match finite differences at tiny dims") {
  // T_s = 3, D = 4, K = 4, G = 2, C = 3.
  TaggerConfig cfg = tiny_config();
  TaggerModel model = TaggerModel::create(cfg, 12);
  const Tensor x = oracles::random_tensor({3, 4}, 13);
  const TokenSequence seq = build_scene_sequence(cfg, kOcr, kAsr);
  const Tensor target({3}, {1.0, 0.0, 1.0});

  auto run = [&](std::map<std::string, Tensor>* grads_out) {
    Graph g;
    TaggerParamIds ids = use_tagger_params(g, model, WeightSource::Raw);
    ValueId scores = tagger_scores_graph(g, model.config, ids, g.input(x), seq);
    ValueId loss = g.bce_loss(scores, g.input(target), Reduction::Sum);
    if (grads_out) *grads_out = g.backward(loss);
    return g.value(loss).at(0);
  };
  std::map<std::string, Tensor> grads;
  run(&grads);
  const double err =
      oracles::gradient_check(model.store, grads, [&] { return run(nullptr); }, 50, 14);
  CHECK(err < 1e-5);
}

TEST_CASE("lr = 0 training leaves the tagger unchanged") {
  SyntheticConfig data_cfg;
  data_cfg.n_videos = 3;
  data_cfg.t_min = 16;
  data_cfg.t_max = 20;
  data_cfg.feature_dim = 4;
  data_cfg.n_classes = 3;
  data_cfg.seed = 15;
  const auto records = generate_synthetic(data_cfg);

  TaggerConfig cfg = tiny_config();
  TaggerModel init = TaggerModel::create(cfg, 16);
  TrainTagConfig train;
  train.epochs = 1;
  train.lr_head = 0.0;
  train.lr_rest = 0.0;
  const auto result = train_tagger(records, cfg, train, &init);
  for (const std::string& name : init.store.names()) {
    CHECK(max_abs_diff(result.model.store.value(name), init.store.value(name)) == 0.0);
  }
}

TEST_CASE("head parameters move under lr_head while the rest are frozen") {
  SyntheticConfig data_cfg;
  data_cfg.n_videos = 2;
  data_cfg.t_min = 16;
  data_cfg.t_max = 18;
  data_cfg.feature_dim = 4;
  data_cfg.n_classes = 3;
  data_cfg.seed = 17;
  const auto records = generate_synthetic(data_cfg);

  TaggerConfig cfg = tiny_config();
  TaggerModel init = TaggerModel::create(cfg, 18);
  TrainTagConfig train;
  train.epochs = 1;
  train.lr_head = 1e-3;
  train.lr_rest = 0.0;
  const auto result = train_tagger(records, cfg, train, &init);
  double head_delta = 0.0, rest_delta = 0.0;
  for (const std::string& name : init.store.names()) {
    const double d = max_abs_diff(result.model.store.value(name), init.store.value(name));
    if (name.rfind("head_", 0) == 0) {
      head_delta = std::max(head_delta, d);
    } else {
      rest_delta = std::max(rest_delta, d);
    }
  }
  CHECK(head_delta > 0.0);
  CHECK(rest_delta == 0.0);
}

TEST_CASE("snippet ranges slice half-open intervals") {
  CHECK(snippet_range(0.0, 2.0, 4.0, 40) == std::pair<std::size_t, std::size_t>{0, 8});
  CHECK(snippet_range(2.0, 3.0, 4.0, 40) == std::pair<std::size_t, std::size_t>{8, 12});
  CHECK(snippet_range(9.9, 10.0, 4.0, 40) == std::pair<std::size_t, std::size_t>{40, 40});
  // A sliver between snippet centres covers nothing.
  const auto empty = snippet_range(0.26, 0.49, 4.0, 40);
  CHECK(empty.first == empty.second);
}

TEST_CASE("tagger checkpoints round-trip including the vocabulary config") {
  TaggerConfig cfg = tiny_config();
  cfg.text.vocab.hash_seed = 987654321;
  TaggerModel model = TaggerModel::create(cfg, 19);
  const std::string path = "/tmp/vads_tag_ckpt.bin";
  model.save(path);
  const TaggerModel loaded = TaggerModel::load(path);
  CHECK(loaded.config.text.vocab.hash_seed == 987654321);
  CHECK(loaded.config.n_classes == cfg.n_classes);
  const Tensor x = oracles::random_tensor({4, 4}, 20);
  CHECK(max_abs_diff(tag_scene(model, x, kOcr, kAsr, WeightSource::Raw),
                     tag_scene(loaded, x, kOcr, kAsr, WeightSource::Raw)) == 0.0);
  std::remove(path.c_str());
}
