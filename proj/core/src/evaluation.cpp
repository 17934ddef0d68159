#include "vads/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vads/error.hpp"

namespace vads {

double temporal_iou(std::pair<double, double> a, std::pair<double, double> b) {
  if (!(a.first < a.second) || !(b.first < b.second)) {
    throw ValidationError("temporal_iou: degenerate interval");
  }
  const double inter = std::max(0.0, std::min(a.second, b.second) - std::max(a.first, b.first));
  const double uni = std::max(a.second, b.second) - std::min(a.first, b.first);
  return inter / uni;
}

MatchResult match_boundaries(std::vector<double> pred_times, std::vector<double> gt_times,
                             double tolerance) {
  if (tolerance <= 0.0) throw ConfigError("match_boundaries: tolerance must be positive");
  std::sort(pred_times.begin(), pred_times.end());
  std::sort(gt_times.begin(), gt_times.end());

  MatchResult result;
  std::size_t next_pred = 0;
  for (std::size_t gi = 0; gi < gt_times.size(); ++gi) {
    // Skip predictions that are already too early for this (and every later) gt.
    while (next_pred < pred_times.size() && pred_times[next_pred] <= gt_times[gi] - tolerance) {
      ++next_pred;
    }
    if (next_pred < pred_times.size() &&
        std::abs(pred_times[next_pred] - gt_times[gi]) < tolerance) {
      result.pairs.emplace_back(next_pred, gi);
      ++next_pred;
    }
  }
  result.tp = result.pairs.size();
  result.fp = pred_times.size() - result.tp;
  result.fn = gt_times.size() - result.tp;
  return result;
}

PrecisionRecallF1 f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  PrecisionRecallF1 out;
  out.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  out.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  out.f1 = (out.precision + out.recall > 0.0)
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

double average_precision(const std::vector<std::pair<double, bool>>& entries) {
  std::size_t n_pos = 0;
  for (const auto& [_, positive] : entries) n_pos += positive ? 1 : 0;
  return average_precision(entries, n_pos);
}

double average_precision(const std::vector<std::pair<double, bool>>& entries, std::size_t n_pos) {
  if (n_pos == 0) return 0.0;
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return entries[a].first > entries[b].first;
  });
  double ap = 0.0;
  std::size_t seen_pos = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!entries[order[rank]].second) continue;
    ++seen_pos;
    ap += static_cast<double>(seen_pos) / static_cast<double>(rank + 1);
  }
  return ap / static_cast<double>(n_pos);
}

std::vector<double> default_tiou_thresholds() {
  std::vector<double> out;
  for (int i = 0; i < 10; ++i) out.push_back(0.5 + 0.05 * i);
  return out;
}

namespace {

struct PooledPrediction {
  std::size_t video = 0;  // index into the sorted ground-truth order
  std::size_t scene = 0;  // index within the video's prediction list
  double start = 0.0, end = 0.0;
  const std::vector<double>* scores = nullptr;
};

}  // namespace

MapResult average_map(const std::vector<VideoPrediction>& predictions,
                      const std::vector<VideoRecord>& ground_truth,
                      const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw ConfigError("average_map: no thresholds");

  std::map<std::string, std::size_t> gt_index;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) gt_index[ground_truth[i].id] = i;

  // Canonical prediction order: video id, then scene order.
  std::vector<const VideoPrediction*> sorted_preds;
  for (const VideoPrediction& p : predictions) sorted_preds.push_back(&p);
  std::sort(sorted_preds.begin(), sorted_preds.end(),
            [](const VideoPrediction* a, const VideoPrediction* b) { return a->id < b->id; });

  std::vector<PooledPrediction> pool;
  for (const VideoPrediction* vp : sorted_preds) {
    auto it = gt_index.find(vp->id);
    if (it == gt_index.end()) {
      throw ValidationError("average_map: prediction for unknown video '" + vp->id + "'");
    }
    for (std::size_t s = 0; s < vp->scenes.size(); ++s) {
      const ScenePrediction& sp = vp->scenes[s];
      pool.push_back({it->second, s, sp.start, sp.end, &sp.scores});
    }
  }

  // Ground-truth instances per class.
  std::map<int, std::size_t> gt_count;
  for (const VideoRecord& r : ground_truth) {
    for (const SceneAnnotation& s : r.scenes) {
      for (int c : s.labels) ++gt_count[c];
    }
  }

  MapResult result;
  result.per_threshold_map.assign(thresholds.size(), 0.0);
  if (gt_count.empty()) return result;

  for (const auto& [cls, n_pos] : gt_count) {
    result.per_class_ap[cls].assign(thresholds.size(), 0.0);
  }

  // Predictions ranked by class score, pooled across videos.
  std::vector<std::size_t> order(pool.size());
  for (std::size_t ti = 0; ti < thresholds.size(); ++ti) {
    const double tau = thresholds[ti];
    double map_sum = 0.0;
    for (const auto& [cls, n_pos] : gt_count) {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = cls < static_cast<int>(pool[a].scores->size()) ? (*pool[a].scores)[cls] : 0.0;
        const double sb = cls < static_cast<int>(pool[b].scores->size()) ? (*pool[b].scores)[cls] : 0.0;
        return sa > sb;
      });

      // Per-video matched flags for this (class, threshold).
      std::map<std::size_t, std::vector<char>> used;
      std::vector<std::pair<double, bool>> ranked;
      ranked.reserve(pool.size());
      for (std::size_t oi : order) {
        const PooledPrediction& p = pool[oi];
        const VideoRecord& gt = ground_truth[p.video];
        auto& flags = used[p.video];
        if (flags.empty()) flags.assign(gt.scenes.size(), 0);
        double best_iou = 0.0;
        std::size_t best = gt.scenes.size();
        for (std::size_t si = 0; si < gt.scenes.size(); ++si) {
          if (flags[si]) continue;
          const SceneAnnotation& scene = gt.scenes[si];
          if (!std::binary_search(scene.labels.begin(), scene.labels.end(), cls)) continue;
          const double iou = temporal_iou({p.start, p.end}, {scene.start, scene.end});
          if (iou >= tau && iou > best_iou) {
            best_iou = iou;
            best = si;
          }
        }
        const bool positive = best < gt.scenes.size();
        if (positive) flags[best] = 1;
        const double score = cls < static_cast<int>(p.scores->size()) ? (*p.scores)[cls] : 0.0;
        ranked.emplace_back(score, positive);
      }
      const double ap = average_precision(ranked, n_pos);
      result.per_class_ap[cls][ti] = ap;
      map_sum += ap;
    }
    result.per_threshold_map[ti] = map_sum / static_cast<double>(gt_count.size());
  }
  result.average = std::accumulate(result.per_threshold_map.begin(),
                                   result.per_threshold_map.end(), 0.0) /
                   static_cast<double>(result.per_threshold_map.size());
  return result;
}

double final_score(double f1, double avg_map) {
  if (f1 < 0.0 || f1 > 1.0 || avg_map < 0.0 || avg_map > 1.0) {
    throw ValidationError("final_score: inputs must be in [0, 1]");
  }
  return f1 * avg_map;
}

std::vector<double> interior_gt_boundaries(const VideoRecord& record) {
  std::vector<double> out;
  for (std::size_t i = 1; i < record.scenes.size(); ++i) out.push_back(record.scenes[i].start);
  return out;
}

std::vector<double> interior_pred_boundaries(const std::vector<ScenePrediction>& scenes) {
  std::vector<double> out;
  for (std::size_t i = 1; i < scenes.size(); ++i) out.push_back(scenes[i].start);
  return out;
}

MetricReport evaluate_predictions(const std::vector<VideoPrediction>& predictions,
                                  const std::vector<VideoRecord>& ground_truth,
                                  double tolerance, const std::vector<double>& thresholds) {
  std::set<std::string> gt_ids;
  for (const VideoRecord& r : ground_truth) gt_ids.insert(r.id);
  std::vector<std::string> unknown;
  for (const VideoPrediction& p : predictions) {
    if (!gt_ids.count(p.id)) unknown.push_back(p.id);
  }
  if (!unknown.empty()) {
    std::ostringstream os;
    os << "evaluate: predictions for unknown video ids:";
    for (const std::string& id : unknown) os << ' ' << id;
    throw ValidationError(os.str());
  }

  std::map<std::string, const VideoPrediction*> by_id;
  for (const VideoPrediction& p : predictions) by_id[p.id] = &p;

  std::size_t tp = 0, fp = 0, fn = 0;
  for (const VideoRecord& r : ground_truth) {
    const std::vector<double> gt_times = interior_gt_boundaries(r);
    std::vector<double> pred_times;
    auto it = by_id.find(r.id);
    if (it != by_id.end()) pred_times = interior_pred_boundaries(it->second->scenes);
    const MatchResult m = match_boundaries(pred_times, gt_times, tolerance);
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
  }

  MetricReport report;
  report.boundary = f1_from_counts(tp, fp, fn);
  MapResult m = average_map(predictions, ground_truth, thresholds);
  report.per_class_ap = std::move(m.per_class_ap);
  report.per_threshold_map = std::move(m.per_threshold_map);
  report.avg_map = m.average;
  report.final = final_score(report.boundary.f1, report.avg_map);
  return report;
}

std::string report_to_json(const MetricReport& report) {
  nlohmann::json j;
  j["precision"] = report.boundary.precision;
  j["recall"] = report.boundary.recall;
  j["f1"] = report.boundary.f1;
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, aps] : report.per_class_ap) {
    per_class[std::to_string(cls)] = aps;
  }
  j["per_class_ap"] = std::move(per_class);
  j["per_threshold_map"] = report.per_threshold_map;
  j["avg_map"] = report.avg_map;
  j["final"] = report.final;
  return j.dump(2);
}

}  // namespace vads
