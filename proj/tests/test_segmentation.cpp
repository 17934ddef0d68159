#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "vads/data.hpp"
#include "vads/error.hpp"
#include "vads/segmentation.hpp"

using namespace vads;

namespace {

std::set<std::size_t> positives(const Tensor& labels) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < labels.numel(); ++i) {
    if (labels.at(i) > 0.5) out.insert(i);
  }
  return out;
}

SegmenterConfig tiny_config() {
  SegmenterConfig c;
  c.input_dim = 6;
  c.hidden = 8;
  return c;
}

/// Random tiling of [0, t/rate) with snippet-aligned cuts.
std::vector<SceneAnnotation> random_tiling(Rng& rng, std::size_t t, double rate) {
  const std::size_t max_scenes = std::min<std::size_t>(5, t - 2);
  const std::size_t n_scenes =
      static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_scenes)));
  std::set<std::size_t> cuts;
  while (cuts.size() + 1 < n_scenes) {
    cuts.insert(static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(t) - 2)));
  }
  std::vector<SceneAnnotation> scenes;
  double prev = 0.0;
  for (std::size_t c : cuts) {
    scenes.push_back({prev, static_cast<double>(c) / rate, {0}});
    prev = static_cast<double>(c) / rate;
  }
  scenes.push_back({prev, static_cast<double>(t) / rate, {0}});
  return scenes;
}

}  // namespace

TEST_CASE("ground-truth transform marks beginnings and ends") {
  const std::vector<SceneAnnotation> scenes{{0.0, 3.0, {0}}, {3.0, 7.0, {0}}, {7.0, 10.0, {0}}};
  const Tensor labels = transform_ground_truth(scenes, 10, 1.0, true);
  CHECK(positives(labels) == std::set<std::size_t>{0, 3, 7, 9});  // 10 s clips to index 9

  const Tensor original = transform_ground_truth(scenes, 10, 1.0, false);
  CHECK(positives(original) == std::set<std::size_t>{3, 7, 9});
}

TEST_CASE("single whole-video scene marks first and last snippet") {
  const Tensor labels = transform_ground_truth({{0.0, 5.0, {0}}}, 20, 4.0, true);
  CHECK(positives(labels) == std::set<std::size_t>{0, 19});
}

TEST_CASE("empty scene list gives all-zero labels") {
  const Tensor labels = transform_ground_truth({}, 8, 1.0, true);
  CHECK(positives(labels).empty());
}

TEST_CASE("label band widens positives") {
  const Tensor labels = transform_ground_truth({{0.0, 4.0, {0}}, {4.0, 8.0, {0}}}, 8, 1.0, true, 1);
  CHECK(positives(labels) == std::set<std::size_t>{0, 1, 3, 4, 5, 6, 7});
}

TEST_CASE("modified positives strictly contain the original positives on random tilings") {
  Rng rng(99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t t = static_cast<std::size_t>(rng.uniform_int(6, 80));
    const double rate = rng.bernoulli(0.5) ? 1.0 : 4.0;
    const auto scenes = random_tiling(rng, t, rate);
    const auto modified = positives(transform_ground_truth(scenes, t, rate, true));
    const auto original = positives(transform_ground_truth(scenes, t, rate, false));
    REQUIRE(std::includes(modified.begin(), modified.end(), original.begin(), original.end()));
    REQUIRE(modified.size() > original.size());
  }
}

TEST_CASE("zero-initialised classifier outputs 0.5 everywhere") {
  SegmenterModel model = SegmenterModel::create(tiny_config(), 1);
  // Classifier weights start near zero only in expectation; force exact zero.
  for (double& v : model.store.value("classifier/w").values) v = 0.0;
  const Tensor probs =
      segmenter_forward(model, oracles::random_tensor({12, 6}, 5), false, 0, WeightSource::Raw);
  for (double p : probs.values) CHECK(p == doctest::Approx(0.5));
}

TEST_CASE("output length equals input length") {
  SegmenterModel model = SegmenterModel::create(tiny_config(), 2);
  for (std::size_t t : {1u, 7u, 31u, 100u}) {
    const Tensor probs = segmenter_forward(model, oracles::random_tensor({t, 6}, t), false, 0,
                                           WeightSource::Raw);
    CHECK(probs.shape == Shape{t});
    for (double p : probs.values) {
      CHECK(p > 0.0);
      CHECK(p < 1.0);
    }
  }
}

TEST_CASE("width mismatch raises a dimension error") {
  SegmenterModel model = SegmenterModel::create(tiny_config(), 3);
  CHECK_THROWS_AS(
      segmenter_forward(model, Tensor::zeros({10, 5}), false, 0, WeightSource::Raw),
      DimensionError);
}

TEST_CASE("perturbations stay inside the receptive field") {
  SegmenterModel model = SegmenterModel::create(tiny_config(), 4);
  const std::size_t radius = model.receptive_radius();
  CHECK(radius == 31);  // two blocks of (1+2+4+8) plus the final convolution

  const std::size_t t = 100, hit = 50;
  const Tensor base = oracles::random_tensor({t, 6}, 7);
  Tensor poked = base;
  for (std::size_t d = 0; d < 6; ++d) poked.at2(hit, d) += 3.0;

  const Tensor a = segmenter_forward(model, base, false, 0, WeightSource::Raw);
  const Tensor b = segmenter_forward(model, poked, false, 0, WeightSource::Raw);
  for (std::size_t i = 0; i < t; ++i) {
    const bool inside = i + radius >= hit && i <= hit + radius;
    if (!inside) {
      CHECK(a.at(i) == b.at(i));
    }
  }
  CHECK(a.at(hit) != b.at(hit));
}

TEST_CASE("forward is translation consistent away from the edges") {
  SegmenterModel model = SegmenterModel::create(tiny_config(), 8);
  const std::size_t t = 120, shift = 5;
  const std::size_t radius = model.receptive_radius();
  const Tensor base = oracles::random_tensor({t, 6}, 9);
  Tensor shifted = Tensor::zeros({t, 6});
  for (std::size_t i = 0; i + shift < t; ++i) {
    for (std::size_t d = 0; d < 6; ++d) shifted.at2(i + shift, d) = base.at2(i, d);
  }
  const Tensor a = segmenter_forward(model, base, false, 0, WeightSource::Raw);
  const Tensor b = segmenter_forward(model, shifted, false, 0, WeightSource::Raw);
  for (std::size_t i = radius; i + radius + shift < t; ++i) {
    CHECK(a.at(i) == doctest::Approx(b.at(i + shift)).epsilon(1e-12));
  }
}

TEST_CASE("training requires annotations and matching dims") {
  SyntheticConfig cfg;
  cfg.n_videos = 3;
  cfg.t_min = 16;
  cfg.t_max = 20;
  cfg.feature_dim = 6;
  cfg.n_classes = 3;
  cfg.seed = 5;
  auto records = generate_synthetic(cfg);
  records[1].scenes.clear();
  TrainSegConfig train;
  train.epochs = 1;
  CHECK_THROWS_AS(train_segmenter(records, train), ValidationError);
}

TEST_CASE("lr = 0 leaves parameters unchanged after an epoch") {
  SyntheticConfig cfg;
  cfg.n_videos = 3;
  cfg.t_min = 16;
  cfg.t_max = 20;
  cfg.feature_dim = 6;
  cfg.n_classes = 3;
  cfg.seed = 6;
  const auto records = generate_synthetic(cfg);

  SegmenterConfig mc = tiny_config();
  SegmenterModel init = SegmenterModel::create(mc, 77);
  TrainSegConfig train;
  train.epochs = 1;
  train.lr = 0.0;
  train.seed = 3;
  const auto result = train_segmenter(records, train, &init);
  for (const std::string& name : init.store.names()) {
    CHECK(max_abs_diff(result.model.store.value(name), init.store.value(name)) == 0.0);
  }
  CHECK(result.history.size() == 1);
}

TEST_CASE("fixed seed reproduces the loss curve bit for bit") {
  SyntheticConfig cfg;
  cfg.n_videos = 4;
  cfg.t_min = 16;
  cfg.t_max = 24;
  cfg.feature_dim = 6;
  cfg.n_classes = 3;
  cfg.seed = 8;
  const auto records = generate_synthetic(cfg);
  TrainSegConfig train;
  train.epochs = 3;
  train.batch = 2;
  train.seed = 123;
  const auto a = train_segmenter(records, train);
  const auto b = train_segmenter(records, train);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(a.history[e].loss == b.history[e].loss);
  }
  for (const std::string& name : a.model.store.names()) {
    CHECK(max_abs_diff(a.model.store.value(name), b.model.store.value(name)) == 0.0);
  }
}

TEST_CASE("focal gamma=0 alpha=0.5 matches half-scaled bce gradients") {
  // The elementwise identity focal(0, 0.5) = bce/2 must carry over to the
  // whole training gradient; Adam is invariant to loss scaling up to eps, so
  // one step from identical inits stays within a tight tolerance at equal lr.
  SyntheticConfig cfg;
  cfg.n_videos = 2;
  cfg.t_min = 16;
  cfg.t_max = 18;
  cfg.feature_dim = 6;
  cfg.n_classes = 3;
  cfg.seed = 9;
  const auto records = generate_synthetic(cfg);

  TrainSegConfig bce;
  bce.epochs = 2;
  bce.seed = 11;
  bce.pos_weight = 1.0;
  TrainSegConfig focal = bce;
  focal.loss = SegLossKind::Focal;
  focal.focal_gamma = 0.0;
  focal.focal_alpha = 0.5;

  SegmenterConfig mc = tiny_config();
  SegmenterModel init = SegmenterModel::create(mc, 31);
  const auto a = train_segmenter(records, bce, &init);
  const auto b = train_segmenter(records, focal, &init);
  for (const std::string& name : init.store.names()) {
    CHECK(max_abs_diff(a.model.store.value(name), b.model.store.value(name)) < 1e-4);
  }
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    CHECK(b.history[e].loss == doctest::Approx(0.5 * a.history[e].loss).epsilon(1e-9));
  }
}

TEST_CASE("decode: threshold, strict local maxima and merging") {
  const Tensor probs = Tensor::vec({0.1, 0.9, 0.1, 0.1, 0.8, 0.1});
  const BoundarySet bounds = decode_boundaries(probs, 1.0, 0.5, 0.0);
  REQUIRE(bounds.size() == 2);
  CHECK(bounds[0].time == doctest::Approx(1.0));
  CHECK(bounds[0].confidence == doctest::Approx(0.9));
  CHECK(bounds[1].time == doctest::Approx(4.0));

  CHECK(decode_boundaries(Tensor::vec({0.2, 0.3, 0.2}), 1.0, 0.5, 0.0).empty());

  // Plateaus are not strict maxima.
  CHECK(decode_boundaries(Tensor::vec({0.1, 0.9, 0.9, 0.1}), 1.0, 0.5, 0.0).empty());

  // Merging keeps the higher confidence.
  const BoundarySet merged = decode_boundaries(probs, 1.0, 0.5, 5.0);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0].confidence == doctest::Approx(0.9));

  CHECK_THROWS_AS(decode_boundaries(probs, 1.0, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(decode_boundaries(probs, 1.0, 0.5, -1.0), ConfigError);
}

TEST_CASE("lowering the threshold never removes a candidate boundary") {
  Rng rng(14);
  Tensor probs = Tensor::zeros({60});
  for (double& v : probs.values) v = rng.uniform(0.0, 1.0);
  std::set<double> prev;
  for (double theta : {0.9, 0.7, 0.5, 0.3, 0.1}) {
    const BoundarySet bounds = decode_boundaries(probs, 4.0, theta, 0.0);
    std::set<double> times;
    for (const Boundary& b : bounds) times.insert(b.time);
    CHECK(std::includes(times.begin(), times.end(), prev.begin(), prev.end()));
    prev = times;
  }
}

TEST_CASE("boundaries_to_segments tiles the duration") {
  const BoundarySet bounds{{3.0, 0.9}, {7.0, 0.8}};
  const auto segments = boundaries_to_segments(bounds, 10.0);
  REQUIRE(segments.size() == 3);
  CHECK(segments[0] == std::pair<double, double>{0.0, 3.0});
  CHECK(segments[1] == std::pair<double, double>{3.0, 7.0});
  CHECK(segments[2] == std::pair<double, double>{7.0, 10.0});

  CHECK(boundaries_to_segments({}, 10.0).size() == 1);
  CHECK(boundaries_to_segments({}, 10.0)[0] == std::pair<double, double>{0.0, 10.0});

  // Endpoints deduplicate.
  const auto dedup = boundaries_to_segments({{0.0, 0.5}, {10.0, 0.5}}, 10.0);
  REQUIRE(dedup.size() == 1);

  CHECK_THROWS_AS(boundaries_to_segments({{11.0, 0.5}}, 10.0), ValidationError);
}

TEST_CASE("decode then segments always tile, property style") {
  Rng rng(15);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = static_cast<std::size_t>(rng.uniform_int(1, 120));
    Tensor probs = Tensor::zeros({t});
    for (double& v : probs.values) v = rng.uniform(0.0, 1.0);
    const double rate = rng.bernoulli(0.5) ? 1.0 : 4.0;
    const BoundarySet bounds = decode_boundaries(probs, rate, 0.5, rng.uniform(0.0, 2.0));
    const double duration = static_cast<double>(t) / rate;
    const auto segments = boundaries_to_segments(bounds, duration);
    REQUIRE(!segments.empty());
    CHECK(segments.front().first == 0.0);
    CHECK(segments.back().second == duration);
    for (std::size_t i = 0; i < segments.size(); ++i) {
      CHECK(segments[i].first < segments[i].second);
      if (i > 0) CHECK(segments[i].first == segments[i - 1].second);
    }
  }
}

TEST_CASE("probability ensembling is the elementwise mean") {
  const Tensor a = Tensor::vec({0.2, 0.6});
  const Tensor b = Tensor::vec({0.8, 0.2});
  CHECK(ensemble_boundary_probs({a}).values == a.values);
  const Tensor mean = ensemble_boundary_probs({a, b});
  CHECK(mean.values == std::vector<double>{0.5, 0.4});
  CHECK(ensemble_boundary_probs({b, a}).values == mean.values);  // permutation invariant
  CHECK_THROWS_AS(ensemble_boundary_probs({a, Tensor::vec({0.1})}), DimensionError);
  CHECK_THROWS_AS(ensemble_boundary_probs({}), ValidationError);
}

TEST_CASE("segmenter checkpoints round-trip through save/load") {
  SegmenterModel model = SegmenterModel::create(tiny_config(), 21);
  const std::string path = "/tmp/vads_seg_ckpt.bin";
  model.save(path);
  const SegmenterModel loaded = SegmenterModel::load(path);
  CHECK(loaded.config.input_dim == model.config.input_dim);
  CHECK(loaded.config.hidden == model.config.hidden);
  const Tensor x = oracles::random_tensor({15, 6}, 22);
  const Tensor a = segmenter_forward(model, x, false, 0, WeightSource::Raw);
  const Tensor b = segmenter_forward(loaded, x, false, 0, WeightSource::Raw);
  CHECK(max_abs_diff(a, b) == 0.0);
  std::remove(path.c_str());
}
