#include "vads/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "vads/checkpoint.hpp"
#include "vads/error.hpp"
#include "vads/evaluation.hpp"
#include "vads/init.hpp"

namespace vads {

namespace {

std::string conv_w(std::size_t block, std::size_t layer) {
  return "block" + std::to_string(block) + "/conv" + std::to_string(layer) + "/w";
}
std::string conv_b(std::size_t block, std::size_t layer) {
  return "block" + std::to_string(block) + "/conv" + std::to_string(layer) + "/b";
}

nlohmann::json config_to_json(const SegmenterConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden},     {"kernel", c.kernel},
          {"dilations", c.dilations}, {"blocks", c.blocks},     {"dropout", c.dropout},
          {"residual", c.residual}};
}

SegmenterConfig config_from_json(const nlohmann::json& j) {
  SegmenterConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.dilations = j.at("dilations").get<std::vector<std::size_t>>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.residual = j.at("residual").get<bool>();
  return c;
}

void check_config(const SegmenterConfig& c) {
  if (c.kernel % 2 == 0) throw ConfigError("segmenter: kernel size must be odd");
  if (c.blocks < 1 || c.dilations.empty()) {
    throw ConfigError("segmenter: needs at least one block and one dilation");
  }
  if (c.dropout < 0.0 || c.dropout >= 1.0) {
    throw ConfigError("segmenter: dropout must be in [0, 1)");
  }
}

}  // namespace

SegmenterModel SegmenterModel::create(const SegmenterConfig& config, std::uint64_t seed) {
  check_config(config);
  SegmenterModel model;
  model.config = config;
  const std::size_t k = config.kernel, h = config.hidden;
  // With per-layer skips the residual-branch variance accumulates, so scale
  // each conv's init by 1/sqrt(2 * n_residual_layers) to keep activations
  // (and the sigmoid head) out of saturation at depth.
  const std::size_t n_res = config.blocks * config.dilations.size();
  const double res_scale = config.residual ? 1.0 / std::sqrt(2.0 * static_cast<double>(n_res)) : 1.0;
  for (std::size_t b = 0; b < config.blocks; ++b) {
    for (std::size_t l = 0; l < config.dilations.size(); ++l) {
      const std::size_t cin = (b == 0 && l == 0) ? config.input_dim : h;
      Tensor w = he_init({k, cin, h}, k * cin, derive_seed(seed, conv_w(b, l)));
      if (!(b == 0 && l == 0 && cin != h)) {
        for (double& v : w.values) v *= res_scale;
      }
      model.store.add(conv_w(b, l), std::move(w));
      model.store.add(conv_b(b, l), Tensor::zeros({h}));
    }
  }
  model.store.add("final/w", he_init({k, h, h}, k * h, derive_seed(seed, "final/w")));
  model.store.add("final/b", Tensor::zeros({h}));
  // Zero head: every timestep starts at probability 0.5.
  model.store.add("classifier/w", Tensor::zeros({h, 1}));
  model.store.add("classifier/b", Tensor::zeros({1}));
  return model;
}

std::size_t SegmenterModel::receptive_radius() const {
  const std::size_t half = (config.kernel - 1) / 2;
  std::size_t per_block = 0;
  for (std::size_t d : config.dilations) per_block += d * half;
  return config.blocks * per_block + half;  // final plain convolution adds one half-kernel
}

void SegmenterModel::save(const std::string& path) const {
  write_checkpoint(path, "segmenter", config_to_json(config).dump(), store);
}

SegmenterModel SegmenterModel::load(const std::string& path) {
  Checkpoint ckpt = read_checkpoint(path);
  if (ckpt.kind != "segmenter") {
    throw ConfigError("checkpoint '" + path + "' holds a '" + ckpt.kind +
                      "' model, expected 'segmenter'");
  }
  SegmenterModel model;
  model.config = config_from_json(nlohmann::json::parse(ckpt.hyperparameters_json));
  model.store = std::move(ckpt.store);
  return model;
}

Tensor transform_ground_truth(const std::vector<SceneAnnotation>& scenes, std::size_t t,
                              double snippet_rate, bool modified, std::size_t band) {
  Tensor labels = Tensor::zeros({t});
  if (t == 0) return labels;
  std::set<std::size_t> positives;
  auto mark = [&](double seconds) {
    const long idx = std::lround(seconds * snippet_rate);
    const std::size_t clipped =
        static_cast<std::size_t>(std::clamp<long>(idx, 0, static_cast<long>(t) - 1));
    positives.insert(clipped);
  };
  for (const SceneAnnotation& s : scenes) {
    if (modified) mark(s.start);
    mark(s.end);
  }
  for (std::size_t idx : positives) {
    const std::size_t lo = idx >= band ? idx - band : 0;
    const std::size_t hi = std::min(t - 1, idx + band);
    for (std::size_t i = lo; i <= hi; ++i) labels.at(i) = 1.0;
  }
  return labels;
}

SegmenterParamIds use_segmenter_params(Graph& g, const SegmenterModel& model, WeightSource src) {
  SegmenterParamIds ids;
  const SegmenterConfig& c = model.config;
  ids.block_convs.resize(c.blocks);
  for (std::size_t b = 0; b < c.blocks; ++b) {
    for (std::size_t l = 0; l < c.dilations.size(); ++l) {
      ValueId w = g.parameter(conv_w(b, l), model.store.weights(conv_w(b, l), src));
      ValueId bias = g.parameter(conv_b(b, l), model.store.weights(conv_b(b, l), src));
      ids.block_convs[b].emplace_back(w, bias);
    }
  }
  ids.final_w = g.parameter("final/w", model.store.weights("final/w", src));
  ids.final_b = g.parameter("final/b", model.store.weights("final/b", src));
  ids.cls_w = g.parameter("classifier/w", model.store.weights("classifier/w", src));
  ids.cls_b = g.parameter("classifier/b", model.store.weights("classifier/b", src));
  return ids;
}

ValueId segmenter_forward_graph(Graph& g, const SegmenterConfig& config,
                                const SegmenterParamIds& ids, ValueId features, bool training,
                                std::uint64_t dropout_seed) {
  const Tensor& x = g.value(features);
  if (x.rank() != 2 || x.dim(1) != config.input_dim) {
    throw DimensionError("segmenter: features " + shape_str(x.shape) +
                         " do not match input dim " + std::to_string(config.input_dim));
  }
  const std::size_t t = x.dim(0);
  ValueId cur = features;
  std::size_t cur_width = config.input_dim;
  for (std::size_t b = 0; b < config.blocks; ++b) {
    for (std::size_t l = 0; l < config.dilations.size(); ++l) {
      const auto [w, bias] = ids.block_convs[b][l];
      ValueId y = g.relu(g.add_bias(g.conv1d(cur, w, static_cast<int>(config.dilations[l])), bias));
      if (config.residual && cur_width == config.hidden) y = g.add(y, cur);
      cur = y;
      cur_width = config.hidden;
    }
    cur = g.dropout(cur, config.dropout, derive_seed(dropout_seed, "block-dropout", b), training);
  }
  cur = g.relu(g.add_bias(g.conv1d(cur, ids.final_w, 1), ids.final_b));
  ValueId logits = g.dense(cur, ids.cls_w, ids.cls_b);  // [T, 1]
  return g.sigmoid(g.reshape(logits, {t}));
}

Tensor segmenter_forward(const SegmenterModel& model, const Tensor& features, bool training,
                         std::uint64_t dropout_seed, WeightSource src) {
  Graph g;
  SegmenterParamIds ids = use_segmenter_params(g, model, src);
  ValueId probs =
      segmenter_forward_graph(g, model.config, ids, g.input(features), training, dropout_seed);
  return g.value(probs);
}

TrainSegResult train_segmenter(const std::vector<VideoRecord>& records,
                               const TrainSegConfig& config, const SegmenterModel* init) {
  if (records.empty()) throw ValidationError("train_segmenter: empty dataset");
  if (config.batch < 1) throw ConfigError("train_segmenter: batch must be >= 1");
  for (const VideoRecord& r : records) {
    if (!r.annotated()) {
      throw ValidationError("train_segmenter: video '" + r.id + "' has no scene annotations");
    }
  }

  TrainSegResult result;
  if (init) {
    result.model = *init;
  } else {
    SegmenterConfig mc;
    mc.input_dim = records.front().feature_dim();
    result.model = SegmenterModel::create(mc, derive_seed(config.seed, "segmenter-init"));
  }
  SegmenterModel& model = result.model;
  for (const VideoRecord& r : records) {
    if (r.feature_dim() != model.config.input_dim) {
      throw DimensionError("train_segmenter: video '" + r.id + "' feature dim " +
                           std::to_string(r.feature_dim()) + " does not match model input dim " +
                           std::to_string(model.config.input_dim));
    }
  }

  // Optional held-out split for the history's validation F1.
  std::vector<const VideoRecord*> train_set, val_set;
  if (config.val_fraction > 0.0 && records.size() >= 2) {
    DatasetSplit split = split_dataset(records, config.val_fraction, config.seed);
    std::set<std::string> val_ids(split.val.begin(), split.val.end());
    for (const VideoRecord& r : records) {
      (val_ids.count(r.id) ? val_set : train_set).push_back(&r);
    }
  } else {
    for (const VideoRecord& r : records) train_set.push_back(&r);
  }

  std::vector<Tensor> labels;
  labels.reserve(train_set.size());
  for (const VideoRecord* r : train_set) {
    labels.push_back(transform_ground_truth(r->scenes, r->snippet_count(), r->snippet_rate,
                                            config.modified_gt, config.label_band));
  }

  // Training samples: fixed-length crops covering each timeline.
  struct Window {
    std::size_t video, start, len;
  };
  std::vector<Window> windows;
  const std::size_t wlen = std::max<std::size_t>(1, config.window_snippets);
  const std::size_t stride = std::max<std::size_t>(1, config.window_stride);
  for (std::size_t v = 0; v < train_set.size(); ++v) {
    const std::size_t t = train_set[v]->snippet_count();
    if (t <= wlen) {
      windows.push_back({v, 0, t});
      continue;
    }
    std::size_t start = 0;
    for (; start + wlen <= t; start += stride) windows.push_back({v, start, wlen});
    if (windows.back().start + wlen < t) windows.push_back({v, t - wlen, wlen});
  }

  auto slice_features = [&](const Window& w) {
    const VideoRecord* r = train_set[w.video];
    const std::size_t d = r->feature_dim();
    Tensor out = Tensor::zeros({w.len, d});
    std::copy(r->features.values.begin() + static_cast<std::ptrdiff_t>(w.start * d),
              r->features.values.begin() + static_cast<std::ptrdiff_t>((w.start + w.len) * d),
              out.values.begin());
    return out;
  };
  auto slice_labels = [&](const Window& w) {
    const Tensor& full = labels[w.video];
    Tensor out = Tensor::zeros({w.len});
    std::copy(full.values.begin() + static_cast<std::ptrdiff_t>(w.start),
              full.values.begin() + static_cast<std::ptrdiff_t>(w.start + w.len),
              out.values.begin());
    return out;
  };

  AdamConfig adam;
  adam.lr = config.lr;
  Rng order_rng(derive_seed(config.seed, "batch-order"));
  std::vector<std::size_t> order(windows.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t stop = std::min(order.size(), start + config.batch);

      std::vector<Tensor> batch_labels;
      batch_labels.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        batch_labels.push_back(slice_labels(windows[order[i]]));
      }

      double pw = config.pos_weight;
      if (pw <= 0.0) {
        double pos = 0.0, neg = 0.0;
        for (const Tensor& t : batch_labels) {
          for (double v : t.values) (v > 0.5 ? pos : neg) += 1.0;
        }
        pw = pos > 0.0 ? std::max(1.0, neg / pos) : 1.0;
      }

      Graph g;
      SegmenterParamIds ids = use_segmenter_params(g, model, WeightSource::Raw);
      std::vector<ValueId> losses;
      for (std::size_t i = start; i < stop; ++i) {
        const Window& w = windows[order[i]];
        const std::uint64_t drop_seed =
            derive_seed(config.seed, "dropout", (epoch * order.size() + i) * 1315423911ull +
                                                    order[i]);
        ValueId probs = segmenter_forward_graph(g, model.config, ids,
                                                g.input(slice_features(w)), true, drop_seed);
        ValueId target = g.input(batch_labels[i - start]);
        ValueId loss = config.loss == SegLossKind::Bce
                           ? g.bce_loss(probs, target, Reduction::Mean, pw)
                           : g.focal_loss(probs, target, config.focal_gamma, config.focal_alpha,
                                          Reduction::Mean);
        losses.push_back(loss);
      }
      ValueId batch_loss = g.mean_of(losses);
      const double loss_value = g.value(batch_loss).at(0);
      auto grads = g.backward(batch_loss);
      adam_step(model.store, grads, adam);
      ema_update(model.store, config.ema_decay);

      epoch_loss += loss_value * static_cast<double>(stop - start);
      seen += stop - start;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = seen ? epoch_loss / static_cast<double>(seen) : 0.0;
    if (!val_set.empty()) {
      const SegmenterModel* mp = &model;
      stats.val_f1 = segmentation_f1({mp}, val_set, config.val_threshold, config.val_min_gap,
                                     config.eval_source);
    }
    result.history.push_back(stats);
  }
  return result;
}

BoundarySet decode_boundaries(const Tensor& probs, double snippet_rate, double threshold,
                              double min_gap_seconds) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw ConfigError("decode: threshold must be in (0, 1)");
  }
  if (min_gap_seconds < 0.0) throw ConfigError("decode: min_gap must be >= 0");
  if (probs.rank() != 1) {
    throw DimensionError("decode: probabilities must be rank-1, got " + shape_str(probs.shape));
  }
  const std::size_t t_count = probs.numel();
  const std::size_t window =
      static_cast<std::size_t>(std::ceil(0.5 * snippet_rate));

  BoundarySet candidates;
  for (std::size_t t = 0; t < t_count; ++t) {
    const double p = probs.at(t);
    if (p < threshold) continue;
    const std::size_t lo = t >= window ? t - window : 0;
    const std::size_t hi = std::min(t_count - 1, t + window);
    bool strict_max = true;
    for (std::size_t u = lo; u <= hi && strict_max; ++u) {
      if (u != t && probs.at(u) >= p) strict_max = false;
    }
    if (strict_max) {
      candidates.push_back({static_cast<double>(t) / snippet_rate, p});
    }
  }

  BoundarySet merged;
  for (const Boundary& b : candidates) {
    if (!merged.empty() && b.time - merged.back().time < min_gap_seconds) {
      if (b.confidence > merged.back().confidence) merged.back() = b;
    } else {
      merged.push_back(b);
    }
  }
  return merged;
}

std::vector<std::pair<double, double>> boundaries_to_segments(const BoundarySet& boundaries,
                                                              double duration) {
  if (duration <= 0.0) throw ValidationError("boundaries_to_segments: duration must be positive");
  std::vector<double> times{0.0};
  for (const Boundary& b : boundaries) {
    if (b.time > duration) {
      throw ValidationError("boundaries_to_segments: boundary at " + std::to_string(b.time) +
                            "s beyond duration " + std::to_string(duration) + "s");
    }
    if (b.time > 0.0 && b.time < duration) times.push_back(b.time);
  }
  times.push_back(duration);
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::vector<std::pair<double, double>> segments;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    segments.emplace_back(times[i], times[i + 1]);
  }
  return segments;
}

std::vector<std::pair<double, double>> probs_to_segments(const Tensor& probs,
                                                         double snippet_rate, double threshold,
                                                         double min_gap_seconds) {
  const std::size_t t_count = probs.numel();
  const double duration = static_cast<double>(t_count) / snippet_rate;
  BoundarySet kept;
  for (const Boundary& b : decode_boundaries(probs, snippet_rate, threshold, min_gap_seconds)) {
    const long idx = std::lround(b.time * snippet_rate);
    if (idx <= 0 || idx >= static_cast<long>(t_count) - 1) continue;
    kept.push_back(b);
  }
  return boundaries_to_segments(kept, duration);
}

Tensor ensemble_boundary_probs(const std::vector<Tensor>& prob_sequences) {
  if (prob_sequences.empty()) throw ValidationError("ensemble: empty probability list");
  const Tensor& first = prob_sequences.front();
  bool all_equal = true;
  for (const Tensor& t : prob_sequences) {
    if (!t.same_shape(first)) {
      throw DimensionError("ensemble: length mismatch " + shape_str(t.shape) + " vs " +
                           shape_str(first.shape));
    }
    all_equal = all_equal && t.values == first.values;
  }
  // The mean of identical members is the member, bit for bit.
  if (all_equal) return first;
  Tensor out = Tensor::zeros(first.shape);
  for (const Tensor& t : prob_sequences) {
    for (std::size_t i = 0; i < out.numel(); ++i) out.values[i] += t.values[i];
  }
  const double inv = 1.0 / static_cast<double>(prob_sequences.size());
  for (double& v : out.values) v *= inv;
  return out;
}

double segmentation_f1(const std::vector<const SegmenterModel*>& models,
                       const std::vector<const VideoRecord*>& records, double threshold,
                       double min_gap_seconds, WeightSource src, double tolerance) {
  if (models.empty()) throw ValidationError("segmentation_f1: no models");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const VideoRecord* r : records) {
    std::vector<Tensor> probs;
    probs.reserve(models.size());
    for (const SegmenterModel* m : models) {
      probs.push_back(segmenter_forward(*m, r->features, false, 0, src));
    }
    const Tensor fused = ensemble_boundary_probs(probs);
    const auto segments = probs_to_segments(fused, r->snippet_rate, threshold, min_gap_seconds);
    std::vector<double> pred_times;
    for (std::size_t i = 1; i < segments.size(); ++i) pred_times.push_back(segments[i].first);
    const MatchResult m = match_boundaries(pred_times, interior_gt_boundaries(*r), tolerance);
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
  }
  return f1_from_counts(tp, fp, fn).f1;
}

}  // namespace vads
