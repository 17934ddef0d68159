#include "vads/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "vads/error.hpp"

namespace vads {

namespace {

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

void check_model_compatibility(const std::vector<VideoRecord>& records,
                               const std::vector<const SegmenterModel*>& seg_models,
                               const std::vector<const TaggerModel*>& tag_models) {
  if (seg_models.empty()) throw ConfigError("predict: need at least one segmentation checkpoint");
  if (tag_models.empty()) throw ConfigError("predict: need at least one tagging checkpoint");

  const std::size_t seg_d = seg_models.front()->config.input_dim;
  for (const SegmenterModel* m : seg_models) {
    if (m->config.input_dim != seg_d) {
      throw ConfigError("predict: segmentation checkpoints disagree on feature dim (" +
                        std::to_string(m->config.input_dim) + " vs " + std::to_string(seg_d) + ")");
    }
  }
  const TaggerConfig& tc = tag_models.front()->config;
  for (const TaggerModel* m : tag_models) {
    if (m->config.n_classes != tc.n_classes) {
      throw ConfigError("predict: tagging checkpoints disagree on class count (" +
                        std::to_string(m->config.n_classes) + " vs " +
                        std::to_string(tc.n_classes) + ")");
    }
    if (m->config.pooling.input_dim != tc.pooling.input_dim) {
      throw ConfigError("predict: tagging checkpoints disagree on feature dim");
    }
    if (m->config.text.vocab.size != tc.text.vocab.size ||
        m->config.text.vocab.hash_seed != tc.text.vocab.hash_seed) {
      throw ConfigError("predict: tagging checkpoints disagree on vocabulary config");
    }
  }
  for (const VideoRecord& r : records) {
    if (r.feature_dim() != seg_d) {
      throw ConfigError("predict: video '" + r.id + "' feature dim " +
                        std::to_string(r.feature_dim()) +
                        " does not match segmentation checkpoint dim " + std::to_string(seg_d));
    }
    if (r.feature_dim() != tc.pooling.input_dim) {
      throw ConfigError("predict: video '" + r.id + "' feature dim " +
                        std::to_string(r.feature_dim()) +
                        " does not match tagging checkpoint dim " +
                        std::to_string(tc.pooling.input_dim));
    }
  }
}

std::vector<const VideoRecord*> sorted_by_id(const std::vector<VideoRecord>& records) {
  std::vector<const VideoRecord*> out;
  out.reserve(records.size());
  for (const VideoRecord& r : records) out.push_back(&r);
  std::sort(out.begin(), out.end(),
            [](const VideoRecord* a, const VideoRecord* b) { return a->id < b->id; });
  return out;
}

VideoPrediction predict_video(const VideoRecord& record, const Tensor& boundary_probs,
                              const std::vector<const TaggerModel*>& tag_models,
                              const PredictConfig& cfg) {
  VideoPrediction pred;
  pred.id = record.id;
  const auto segments = probs_to_segments(boundary_probs, record.snippet_rate,
                                          cfg.boundary_threshold, cfg.min_gap_seconds);
  const auto deduped = dedup_ocr(record.ocr_tokens);
  const std::size_t d = record.feature_dim();

  for (const auto& [start, end] : segments) {
    const auto [lo, hi] = snippet_range(start, end, record.snippet_rate, record.snippet_count());
    Tensor slice = Tensor::zeros({hi > lo ? hi - lo : 0, d});
    if (hi > lo) {
      std::copy(record.features.values.begin() + static_cast<std::ptrdiff_t>(lo * d),
                record.features.values.begin() + static_cast<std::ptrdiff_t>(hi * d),
                slice.values.begin());
    }
    const std::vector<std::vector<std::string>> scene_ocr(
        deduped.begin() + static_cast<std::ptrdiff_t>(std::min(lo, deduped.size())),
        deduped.begin() + static_cast<std::ptrdiff_t>(std::min(hi, deduped.size())));

    std::vector<Tensor> per_model;
    per_model.reserve(tag_models.size());
    for (const TaggerModel* m : tag_models) {
      per_model.push_back(tag_scene_or_default(*m, slice, scene_ocr, record.asr_tokens,
                                               cfg.weights));
    }
    const Tensor scores = ensemble_scene_scores(per_model);

    ScenePrediction sp;
    sp.start = start;
    sp.end = end;
    sp.scores = scores.values;
    sp.labels = apply_score_threshold(scores, cfg.score_threshold);
    pred.scenes.push_back(std::move(sp));
  }
  return pred;
}

std::vector<Tensor> compute_boundary_probs(const std::vector<const VideoRecord*>& records,
                                           const std::vector<const SegmenterModel*>& seg_models,
                                           WeightSource src, std::size_t workers) {
  std::vector<Tensor> out(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    std::vector<Tensor> probs;
    probs.reserve(seg_models.size());
    for (const SegmenterModel* m : seg_models) {
      probs.push_back(segmenter_forward(*m, records[i]->features, false, 0, src));
    }
    out[i] = ensemble_boundary_probs(probs);
  });
  return out;
}

std::vector<VideoPrediction> predict_from_probs(const std::vector<const VideoRecord*>& records,
                                                const std::vector<Tensor>& probs,
                                                const std::vector<const TaggerModel*>& tag_models,
                                                const PredictConfig& cfg) {
  std::vector<VideoPrediction> out(records.size());
  parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
    out[i] = predict_video(*records[i], probs[i], tag_models, cfg);
  });
  return out;
}

}  // namespace

std::vector<VideoPrediction> predict_dataset(const std::vector<VideoRecord>& records,
                                             const std::vector<const SegmenterModel*>& seg_models,
                                             const std::vector<const TaggerModel*>& tag_models,
                                             const PredictConfig& config) {
  check_model_compatibility(records, seg_models, tag_models);
  const auto ordered = sorted_by_id(records);
  const auto probs = compute_boundary_probs(ordered, seg_models, config.weights, config.workers);
  return predict_from_probs(ordered, probs, tag_models, config);
}

void write_predictions(const std::vector<VideoPrediction>& predictions, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ValidationError("predictions: cannot open '" + path + "' for writing");
  for (const VideoPrediction& p : predictions) {
    nlohmann::json j;
    j["id"] = p.id;
    nlohmann::json segments = nlohmann::json::array();
    for (const ScenePrediction& s : p.scenes) {
      segments.push_back(
          {{"start", s.start}, {"end", s.end}, {"scores", s.scores}, {"labels", s.labels}});
    }
    j["segments"] = std::move(segments);
    os << j.dump() << '\n';
  }
  if (!os) throw ValidationError("predictions: write to '" + path + "' failed");
}

std::vector<VideoPrediction> load_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("predictions: cannot open '" + path + "'");
  std::vector<VideoPrediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      VideoPrediction p;
      p.id = j.at("id").get<std::string>();
      for (const auto& s : j.at("segments")) {
        ScenePrediction sp;
        sp.start = s.at("start").get<double>();
        sp.end = s.at("end").get<double>();
        sp.scores = s.at("scores").get<std::vector<double>>();
        sp.labels = s.at("labels").get<std::vector<int>>();
        p.scenes.push_back(std::move(sp));
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("predictions '" + path + "' line " + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  return out;
}

std::vector<SweepRow> sweep_thresholds(const std::vector<VideoRecord>& records,
                                       const std::vector<const SegmenterModel*>& seg_models,
                                       const std::vector<const TaggerModel*>& tag_models,
                                       const PredictConfig& base, std::vector<double> thresholds,
                                       SweepTarget target) {
  if (thresholds.empty()) throw ConfigError("sweep: empty threshold list");
  for (double t : thresholds) {
    if (t <= 0.0 || t >= 1.0) {
      throw ConfigError("sweep: threshold " + std::to_string(t) + " outside (0, 1)");
    }
  }
  std::sort(thresholds.rbegin(), thresholds.rend());
  check_model_compatibility(records, seg_models, tag_models);
  const auto ordered = sorted_by_id(records);
  const auto probs = compute_boundary_probs(ordered, seg_models, base.weights, base.workers);

  std::vector<SweepRow> rows;
  if (target == SweepTarget::Score) {
    // Boundaries fixed: only the emitted label sets change with the
    // threshold, so predict once and re-threshold.
    std::vector<VideoPrediction> preds = predict_from_probs(ordered, probs, tag_models, base);
    for (double theta : thresholds) {
      for (VideoPrediction& p : preds) {
        for (ScenePrediction& s : p.scenes) {
          s.labels = apply_score_threshold(Tensor::vec(s.scores), theta);
        }
      }
      const MetricReport report = evaluate_predictions(preds, records);
      rows.push_back({theta, report.boundary.f1, report.avg_map, report.final});
    }
  } else {
    for (double theta : thresholds) {
      PredictConfig cfg = base;
      cfg.boundary_threshold = theta;
      const auto preds = predict_from_probs(ordered, probs, tag_models, cfg);
      const MetricReport report = evaluate_predictions(preds, records);
      rows.push_back({theta, report.boundary.f1, report.avg_map, report.final});
    }
  }
  return rows;
}

}  // namespace vads
