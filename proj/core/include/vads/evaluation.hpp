#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vads/data.hpp"

namespace vads {

/// One predicted scene: a segment with per-class probabilities and the
/// thresholded label set emitted for downstream consumers.
struct ScenePrediction {
  double start = 0.0;
  double end = 0.0;
  std::vector<double> scores;  // length C
  std::vector<int> labels;
};

struct VideoPrediction {
  std::string id;
  std::vector<ScenePrediction> scenes;
};

/// |a intersect b| / |a union b| for half-open intervals (start, end).
double temporal_iou(std::pair<double, double> a, std::pair<double, double> b);

/// One-to-one boundary matching under |pred - gt| < tolerance (strict).
/// Both lists are sorted and each ground truth greedily takes the earliest
/// unused prediction in range, which attains maximum cardinality for
/// tolerance matching on a line.
struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (pred idx, gt idx)
  std::size_t tp = 0, fp = 0, fn = 0;
};
MatchResult match_boundaries(std::vector<double> pred_times, std::vector<double> gt_times,
                             double tolerance = 0.5);

struct PrecisionRecallF1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};
/// Standard definitions with the 0/0 -> 0 convention.
PrecisionRecallF1 f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

/// AP over a ranked list of (score, is_positive): sort by score descending
/// (stable on ties), sum precision at each positive rank, divide by the
/// positive count. No positives -> 0.
double average_precision(const std::vector<std::pair<double, bool>>& entries);
/// Same, but with an explicit positive denominator (unretrieved positives).
double average_precision(const std::vector<std::pair<double, bool>>& entries, std::size_t n_pos);

std::vector<double> default_tiou_thresholds();  // 0.50, 0.55, ..., 0.95

struct MapResult {
  std::vector<double> per_threshold_map;
  double average = 0.0;
  std::map<int, std::vector<double>> per_class_ap;  // class -> AP per threshold
};
/// Detection-style mAP: per class and tIoU threshold, predictions ranked by
/// score are greedily matched one-to-one to same-video ground-truth scenes of
/// that class with tIoU >= threshold; AP pools predictions across all videos;
/// classes without ground-truth instances are excluded from the mean.
MapResult average_map(const std::vector<VideoPrediction>& predictions,
                      const std::vector<VideoRecord>& ground_truth,
                      const std::vector<double>& thresholds = default_tiou_thresholds());

double final_score(double f1, double avg_map);

struct MetricReport {
  PrecisionRecallF1 boundary;                       // at the 0.5 s tolerance
  std::map<int, std::vector<double>> per_class_ap;  // class -> AP per threshold
  std::vector<double> per_threshold_map;
  double avg_map = 0.0;
  double final = 0.0;
};

/// Interior boundaries: segment/scene starts excluding the video start.
std::vector<double> interior_gt_boundaries(const VideoRecord& record);
std::vector<double> interior_pred_boundaries(const std::vector<ScenePrediction>& scenes);

/// Full protocol: micro-pooled boundary F1 at `tolerance` plus average mAP,
/// final = f1 * avg_map. Every predicted id must exist in the ground truth;
/// ground-truth videos without predictions count as fully missed.
MetricReport evaluate_predictions(const std::vector<VideoPrediction>& predictions,
                                  const std::vector<VideoRecord>& ground_truth,
                                  double tolerance = 0.5,
                                  const std::vector<double>& thresholds = default_tiou_thresholds());

std::string report_to_json(const MetricReport& report);

}  // namespace vads
