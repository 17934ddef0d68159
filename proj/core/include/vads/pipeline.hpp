#pragma once

#include <string>
#include <vector>

#include "vads/data.hpp"
#include "vads/evaluation.hpp"
#include "vads/segmentation.hpp"
#include "vads/tagging.hpp"

namespace vads {

struct PredictConfig {
  double boundary_threshold = 0.5;
  double score_threshold = 0.35;
  double min_gap_seconds = 1.0;
  WeightSource weights = WeightSource::Ema;
  std::size_t workers = 0;  // 0 selects hardware concurrency
};

/// Full two-stage inference: ensemble boundary probabilities -> decode ->
/// segments -> per-segment ensembled tag scores -> thresholded label sets.
/// Output is sorted by video id regardless of scheduling.
std::vector<VideoPrediction> predict_dataset(const std::vector<VideoRecord>& records,
                                             const std::vector<const SegmenterModel*>& seg_models,
                                             const std::vector<const TaggerModel*>& tag_models,
                                             const PredictConfig& config);

/// One JSON object per video per line; see docs/formats.md.
void write_predictions(const std::vector<VideoPrediction>& predictions, const std::string& path);
std::vector<VideoPrediction> load_predictions(const std::string& path);

enum class SweepTarget { Boundary, Score };

struct SweepRow {
  double threshold = 0.0;
  double f1 = 0.0;
  double avg_map = 0.0;
  double final = 0.0;
};

/// Re-runs prediction + evaluation over the threshold list (all else held
/// fixed) and returns one row per threshold, sorted by threshold descending.
std::vector<SweepRow> sweep_thresholds(const std::vector<VideoRecord>& records,
                                       const std::vector<const SegmenterModel*>& seg_models,
                                       const std::vector<const TaggerModel*>& tag_models,
                                       const PredictConfig& base, std::vector<double> thresholds,
                                       SweepTarget target);

}  // namespace vads
