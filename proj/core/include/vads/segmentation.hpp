#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vads/data.hpp"
#include "vads/graph.hpp"
#include "vads/param_store.hpp"

namespace vads {

/// Per-timestep transition classifier: stacked dilated-convolution blocks, a
/// plain convolution, then a dense sigmoid head. Output length always equals
/// input length (same-padding).
struct SegmenterConfig {
  std::size_t input_dim = 64;                   // D
  std::size_t hidden = 64;                      // H
  std::size_t kernel = 3;                       // odd
  std::vector<std::size_t> dilations = {1, 2, 4, 8};
  std::size_t blocks = 2;
  double dropout = 0.3;  // applied after each block while training
  bool residual = true;  // per-layer skip when widths match
};

struct SegmenterModel {
  SegmenterConfig config;
  ParamStore store;

  static SegmenterModel create(const SegmenterConfig& config, std::uint64_t seed);
  static SegmenterModel load(const std::string& path);
  void save(const std::string& path) const;

  /// Snippets on each side of t that can influence the output at t.
  std::size_t receptive_radius() const;
};

/// Per-snippet binary transition labels. In modified mode both the beginning
/// and the end of every scene are positives; in original mode only scene
/// ends are marked. `band` widens each positive by that many snippets on
/// both sides. Shared boundaries between adjacent scenes collapse to one
/// positive; indices clip to [0, T-1].
Tensor transform_ground_truth(const std::vector<SceneAnnotation>& scenes, std::size_t t,
                              double snippet_rate, bool modified = true, std::size_t band = 0);

/// Transition probabilities [T]. Deterministic when training is false.
Tensor segmenter_forward(const SegmenterModel& model, const Tensor& features, bool training,
                         std::uint64_t dropout_seed, WeightSource src = WeightSource::Ema);

/// Graph-side handles to the segmenter's parameters.
struct SegmenterParamIds {
  std::vector<std::vector<std::pair<ValueId, ValueId>>> block_convs;  // (kernel, bias)
  ValueId final_w = 0, final_b = 0;
  ValueId cls_w = 0, cls_b = 0;
};

/// Registers the model's parameters in a graph (once per graph); the forward
/// builder may then be applied to any number of feature timelines.
SegmenterParamIds use_segmenter_params(Graph& g, const SegmenterModel& model, WeightSource src);
ValueId segmenter_forward_graph(Graph& g, const SegmenterConfig& config,
                                const SegmenterParamIds& ids, ValueId features, bool training,
                                std::uint64_t dropout_seed);

enum class SegLossKind { Bce, Focal };

struct TrainSegConfig {
  SegLossKind loss = SegLossKind::Bce;
  double lr = 1e-4;
  std::size_t batch = 64;  // windows per optimizer step
  std::size_t epochs = 50;
  /// Training samples are fixed-length timeline crops; videos shorter than
  /// the window train whole. An epoch is one pass over all windows.
  std::size_t window_snippets = 48;
  std::size_t window_stride = 12;
  /// Positive-class weight in BCE; <= 0 selects #neg/#pos per batch.
  double pos_weight = 0.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double ema_decay = 0.9;
  std::uint64_t seed = 0;
  /// When > 0, this fraction of videos is held out and per-epoch
  /// validation F1 is recorded in the history.
  double val_fraction = 0.0;
  double val_threshold = 0.5;
  double val_min_gap = 1.0;
  WeightSource eval_source = WeightSource::Ema;
  bool modified_gt = true;
  std::size_t label_band = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  std::optional<double> val_f1;
};

struct TrainSegResult {
  SegmenterModel model;
  std::vector<EpochStats> history;
};

/// Trains on annotated records; throws ValidationError when a record lacks
/// scene annotations. Resumes from `init` when given (Adam state included).
TrainSegResult train_segmenter(const std::vector<VideoRecord>& records,
                               const TrainSegConfig& config,
                               const SegmenterModel* init = nullptr);

struct Boundary {
  double time = 0.0;        // seconds
  double confidence = 0.0;  // in [0, 1]
};
using BoundarySet = std::vector<Boundary>;

/// A snippet becomes a boundary when its probability reaches `threshold` and
/// is a strict local maximum within +-ceil(0.5 * snippet_rate) snippets;
/// boundaries closer than min_gap_seconds merge keeping the higher
/// confidence. Returned times are strictly increasing.
BoundarySet decode_boundaries(const Tensor& probs, double snippet_rate, double threshold,
                              double min_gap_seconds);

/// Segments between consecutive boundaries, with 0 and `duration` added as
/// implicit endpoints when absent.
std::vector<std::pair<double, double>> boundaries_to_segments(const BoundarySet& boundaries,
                                                              double duration);

/// Decode, then tile. Boundaries landing on the first or last snippet are
/// dropped first: the ground-truth transform marks every video's first and
/// last snippet as transitions, so a well-trained model fires there and
/// those markers carry no segmentation information.
std::vector<std::pair<double, double>> probs_to_segments(const Tensor& probs,
                                                         double snippet_rate, double threshold,
                                                         double min_gap_seconds);

/// Elementwise mean over equal-length probability timelines.
Tensor ensemble_boundary_probs(const std::vector<Tensor>& prob_sequences);

/// Micro-pooled interior-boundary F1@tolerance of an (ensembled) model set.
double segmentation_f1(const std::vector<const SegmenterModel*>& models,
                       const std::vector<const VideoRecord*>& records, double threshold,
                       double min_gap_seconds, WeightSource src = WeightSource::Ema,
                       double tolerance = 0.5);

}  // namespace vads
