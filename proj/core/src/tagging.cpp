#include "vads/tagging.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "vads/checkpoint.hpp"
#include "vads/error.hpp"
#include "vads/init.hpp"
#include "vads/rng.hpp"

namespace vads {

namespace {

std::string stream_prefix(std::size_t s) { return "stream" + std::to_string(s); }

nlohmann::json config_to_json(const TaggerConfig& c) {
  return {{"n_classes", c.n_classes},
          {"n_streams", c.n_streams},
          {"pooling",
           {{"input_dim", c.pooling.input_dim},
            {"expansion", c.pooling.expansion},
            {"groups", c.pooling.groups},
            {"clusters", c.pooling.clusters},
            {"normalize_by_time", c.pooling.normalize_by_time}}},
          {"text",
           {{"vocab_size", c.text.vocab.size},
            {"hash_seed", c.text.vocab.hash_seed},
            {"embed_dim", c.text.embed_dim},
            {"output_dim", c.text.output_dim},
            {"max_len", c.text.max_len}}},
          {"late_average", c.late_average},
          {"score_threshold", c.score_threshold}};
}

TaggerConfig config_from_json(const nlohmann::json& j) {
  TaggerConfig c;
  c.n_classes = j.at("n_classes").get<std::size_t>();
  c.n_streams = j.at("n_streams").get<std::size_t>();
  const auto& p = j.at("pooling");
  c.pooling.input_dim = p.at("input_dim").get<std::size_t>();
  c.pooling.expansion = p.at("expansion").get<std::size_t>();
  c.pooling.groups = p.at("groups").get<std::size_t>();
  c.pooling.clusters = p.at("clusters").get<std::size_t>();
  c.pooling.normalize_by_time = p.at("normalize_by_time").get<bool>();
  const auto& t = j.at("text");
  c.text.vocab.size = t.at("vocab_size").get<std::uint32_t>();
  c.text.vocab.hash_seed = t.at("hash_seed").get<std::uint64_t>();
  c.text.embed_dim = t.at("embed_dim").get<std::size_t>();
  c.text.output_dim = t.at("output_dim").get<std::size_t>();
  c.text.max_len = t.at("max_len").get<std::size_t>();
  c.late_average = j.at("late_average").get<bool>();
  c.score_threshold = j.at("score_threshold").get<double>();
  return c;
}

}  // namespace

TaggerModel TaggerModel::create(const TaggerConfig& config, std::uint64_t seed) {
  if (config.n_classes < 1) throw ConfigError("tagger: n_classes must be >= 1");
  if (config.n_streams < 1) throw ConfigError("tagger: n_streams must be >= 1");
  TaggerModel model;
  model.config = config;
  for (std::size_t s = 0; s < config.n_streams; ++s) {
    init_softdbof_params(model.store, stream_prefix(s), config.pooling,
                         derive_seed(seed, stream_prefix(s)));
  }
  init_text_encoder_params(model.store, "text", config.text, derive_seed(seed, "text"));
  const std::size_t c = config.n_classes;
  const std::size_t desc = config.n_streams * config.pooling.clusters;
  // Modality heads start at zero so the few training steps the low learning
  // rates afford accumulate pure signal; the fusion head stays random to
  // carry their gradients from step one.
  model.store.add("head_v/w", Tensor::zeros({desc, c}));
  model.store.add("head_v/b", Tensor::zeros({c}));
  model.store.add("head_t/w", Tensor::zeros({config.text.output_dim, c}));
  model.store.add("head_t/b", Tensor::zeros({c}));
  model.store.add("head_f/w", xavier_init({2 * c, c}, 2 * c, derive_seed(seed, "head_f/w")));
  model.store.add("head_f/b", Tensor::zeros({c}));
  return model;
}

void TaggerModel::save(const std::string& path) const {
  write_checkpoint(path, "tagger", config_to_json(config).dump(), store);
}

TaggerModel TaggerModel::load(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  if (ckpt.kind != "tagger") {
    throw ConfigError("checkpoint '" + path + "' holds a '" + ckpt.kind +
                      "' model, expected 'tagger'");
  }
  TaggerModel model;
  model.config = config_from_json(nlohmann::json::parse(ckpt.hyperparameters_json));
  model.store = std::move(ckpt.store);
  return model;
}

TaggerParamIds use_tagger_params(Graph& g, const TaggerModel& model, WeightSource src) {
  TaggerParamIds ids;
  for (std::size_t s = 0; s < model.config.n_streams; ++s) {
    ids.streams.push_back(use_softdbof_params(g, model.store, stream_prefix(s), src));
  }
  ids.text = use_text_encoder_params(g, model.store, "text", src);
  ids.head_v_w = g.parameter("head_v/w", model.store.weights("head_v/w", src));
  ids.head_v_b = g.parameter("head_v/b", model.store.weights("head_v/b", src));
  ids.head_t_w = g.parameter("head_t/w", model.store.weights("head_t/w", src));
  ids.head_t_b = g.parameter("head_t/b", model.store.weights("head_t/b", src));
  ids.head_f_w = g.parameter("head_f/w", model.store.weights("head_f/w", src));
  ids.head_f_b = g.parameter("head_f/b", model.store.weights("head_f/b", src));
  return ids;
}

ValueId tagger_scores_graph(Graph& g, const TaggerConfig& config, const TaggerParamIds& ids,
                            std::optional<ValueId> scene_features, const TokenSequence& seq) {
  ValueId descriptor;
  if (scene_features) {
    std::vector<ValueId> parts;
    parts.reserve(config.n_streams);
    for (std::size_t s = 0; s < config.n_streams; ++s) {
      parts.push_back(aggregate(g, *scene_features, ids.streams[s], config.pooling));
    }
    descriptor = parts.size() == 1 ? parts[0] : g.concat(parts);
  } else {
    descriptor = g.input(Tensor::zeros({config.n_streams * config.pooling.clusters}));
  }
  ValueId v_logits = g.dense(descriptor, ids.head_v_w, ids.head_v_b);  // [C]

  ValueId text_feat = encode_text(g, seq, ids.text, config.text);
  ValueId t_logits = g.dense(text_feat, ids.head_t_w, ids.head_t_b);  // [C]

  ValueId fused;
  if (config.late_average) {
    fused = g.scale(g.add(v_logits, t_logits), 0.5);
  } else {
    fused = g.dense(g.concat({v_logits, t_logits}), ids.head_f_w, ids.head_f_b);
  }
  return g.sigmoid(fused);
}

TokenSequence build_scene_sequence(const TaggerConfig& config,
                                   const std::vector<std::vector<std::string>>& scene_ocr,
                                   const std::vector<std::string>& video_asr) {
  std::vector<std::string> ocr_flat;
  for (const auto& frame : scene_ocr) {
    ocr_flat.insert(ocr_flat.end(), frame.begin(), frame.end());
  }
  const std::vector<std::uint32_t> ocr_ids = tokenize(ocr_flat, config.text.vocab);
  const std::vector<std::uint32_t> asr_ids = tokenize(video_asr, config.text.vocab);
  return build_input(ocr_ids, asr_ids, config.text.max_len);
}

namespace {

Tensor tag_scene_impl(const TaggerModel& model, const Tensor& scene_features,
                      const std::vector<std::vector<std::string>>& scene_ocr,
                      const std::vector<std::string>& video_asr, WeightSource src,
                      bool allow_empty) {
  const bool empty = scene_features.numel() == 0 ||
                     (scene_features.rank() == 2 && scene_features.dim(0) == 0);
  if (empty && !allow_empty) {
    throw ValidationError("tag_scene: empty scene features");
  }
  Graph g;
  TaggerParamIds ids = use_tagger_params(g, model, src);
  std::optional<ValueId> features;
  if (!empty) features = g.input(scene_features);
  const TokenSequence seq = build_scene_sequence(model.config, scene_ocr, video_asr);
  return g.value(tagger_scores_graph(g, model.config, ids, features, seq));
}

}  // namespace

Tensor tag_scene(const TaggerModel& model, const Tensor& scene_features,
                 const std::vector<std::vector<std::string>>& scene_ocr,
                 const std::vector<std::string>& video_asr, WeightSource src) {
  return tag_scene_impl(model, scene_features, scene_ocr, video_asr, src, false);
}

Tensor tag_scene_or_default(const TaggerModel& model, const Tensor& scene_features,
                            const std::vector<std::vector<std::string>>& scene_ocr,
                            const std::vector<std::string>& video_asr, WeightSource src) {
  return tag_scene_impl(model, scene_features, scene_ocr, video_asr, src, true);
}

double tagging_loss(const Tensor& scores, const std::vector<int>& labels) {
  const std::size_t c = scores.numel();
  Tensor target = Tensor::zeros(scores.shape);
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw ValidationError("tagging_loss: class id " + std::to_string(label) +
                            " out of range for C = " + std::to_string(c));
    }
    target.at(static_cast<std::size_t>(label)) = 1.0;
  }
  Graph g;
  ValueId loss = g.bce_loss(g.input(scores), g.input(std::move(target)), Reduction::Sum);
  return g.value(loss).at(0);
}

Tensor ensemble_scene_scores(const std::vector<Tensor>& score_list) {
  if (score_list.empty()) throw ValidationError("ensemble_scene_scores: empty list");
  const Tensor& first = score_list.front();
  bool all_equal = true;
  for (const Tensor& t : score_list) {
    if (!t.same_shape(first)) {
      throw DimensionError("ensemble_scene_scores: shape mismatch " + shape_str(t.shape) +
                           " vs " + shape_str(first.shape));
    }
    all_equal = all_equal && t.values == first.values;
  }
  // The mean of identical members is the member, bit for bit.
  if (all_equal) return first;
  Tensor out = Tensor::zeros(first.shape);
  for (const Tensor& t : score_list) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] += t.values[i];
  }
  const double inv = 1.0 / static_cast<double>(score_list.size());
  for (double& v : out.values) v *= inv;
  return out;
}

std::vector<int> apply_score_threshold(const Tensor& scores, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw ConfigError("apply_score_threshold: threshold must be in (0, 1)");
  }
  if (scores.numel() == 0) throw ValidationError("apply_score_threshold: empty scores");
  std::vector<int> labels;
  for (std::size_t c = 0; c < scores.numel(); ++c) {
    if (scores.at(c) >= threshold) labels.push_back(static_cast<int>(c));
  }
  if (labels.empty()) {
    const std::size_t best =
        std::max_element(scores.values.begin(), scores.values.end()) - scores.values.begin();
    labels.push_back(static_cast<int>(best));
  }
  return labels;
}

std::pair<std::size_t, std::size_t> snippet_range(double start, double end, double snippet_rate,
                                                  std::size_t t) {
  const auto to_index = [&](double seconds) {
    const double x = seconds * snippet_rate;
    return static_cast<std::size_t>(
        std::clamp<double>(std::ceil(x - 1e-9), 0.0, static_cast<double>(t)));
  };
  std::size_t lo = to_index(start);
  std::size_t hi = to_index(end);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

namespace {

struct SceneSample {
  const VideoRecord* video = nullptr;
  Tensor features;  // [T_s, D]
  TokenSequence sequence;
  Tensor target;  // [C] of {0, 1}
};

}  // namespace

TrainTagResult train_tagger(const std::vector<VideoRecord>& records, const TaggerConfig& config,
                            const TrainTagConfig& train, const TaggerModel* init) {
  TrainTagResult result;
  if (init) {
    result.model = *init;
  } else {
    result.model = TaggerModel::create(config, derive_seed(train.seed, "tagger-init"));
  }
  TaggerModel& model = result.model;

  std::vector<SceneSample> samples;
  for (const VideoRecord& r : records) {
    if (!r.annotated()) continue;
    if (r.feature_dim() != model.config.pooling.input_dim) {
      throw DimensionError("train_tagger: video '" + r.id + "' feature dim " +
                           std::to_string(r.feature_dim()) + " does not match pooling input dim " +
                           std::to_string(model.config.pooling.input_dim));
    }
    const auto deduped = dedup_ocr(r.ocr_tokens);
    for (const SceneAnnotation& scene : r.scenes) {
      const auto [lo, hi] = snippet_range(scene.start, scene.end, r.snippet_rate,
                                          r.snippet_count());
      if (hi <= lo) {
        throw ValidationError("train_tagger: scene [" + std::to_string(scene.start) + ", " +
                              std::to_string(scene.end) + ") of video '" + r.id +
                              "' covers no snippet");
      }
      SceneSample sample;
      sample.video = &r;
      const std::size_t d = r.feature_dim();
      sample.features = Tensor::zeros({hi - lo, d});
      std::copy(r.features.values.begin() + static_cast<std::ptrdiff_t>(lo * d),
                r.features.values.begin() + static_cast<std::ptrdiff_t>(hi * d),
                sample.features.values.begin());
      const std::vector<std::vector<std::string>> scene_ocr(deduped.begin() + static_cast<std::ptrdiff_t>(lo),
                                                            deduped.begin() + static_cast<std::ptrdiff_t>(hi));
      sample.sequence = build_scene_sequence(model.config, scene_ocr, r.asr_tokens);
      sample.target = Tensor::zeros({model.config.n_classes});
      for (int label : scene.labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= model.config.n_classes) {
          throw ValidationError("train_tagger: video '" + r.id + "' label " +
                                std::to_string(label) + " out of range for C = " +
                                std::to_string(model.config.n_classes));
        }
        sample.target.at(static_cast<std::size_t>(label)) = 1.0;
      }
      samples.push_back(std::move(sample));
    }
  }
  if (samples.empty()) {
    throw ValidationError("train_tagger: dataset has no annotated scenes");
  }

  AdamConfig adam;
  auto lr_for = [&](const std::string& name) {
    return name.rfind("head_", 0) == 0 ? train.lr_head : train.lr_rest;
  };

  Rng order_rng(derive_seed(train.seed, "tag-batch-order"));
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < train.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch) {
      const std::size_t stop = std::min(order.size(), start + train.batch);
      Graph g;
      TaggerParamIds ids = use_tagger_params(g, model, WeightSource::Raw);
      std::vector<ValueId> losses;
      for (std::size_t i = start; i < stop; ++i) {
        const SceneSample& sample = samples[order[i]];
        ValueId scores = tagger_scores_graph(g, model.config, ids, g.input(sample.features),
                                             sample.sequence);
        losses.push_back(g.bce_loss(scores, g.input(sample.target), Reduction::Sum));
      }
      ValueId batch_loss = g.mean_of(losses);
      const double loss_value = g.value(batch_loss).at(0);
      auto grads = g.backward(batch_loss);
      adam_step(model.store, grads, adam, lr_for);
      ema_update(model.store, train.ema_decay);
      epoch_loss += loss_value * static_cast<double>(stop - start);
      seen += stop - start;
    }
    result.epoch_loss.push_back(seen ? epoch_loss / static_cast<double>(seen) : 0.0);
  }
  return result;
}

}  // namespace vads
