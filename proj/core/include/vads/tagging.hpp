#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vads/aggregation.hpp"
#include "vads/data.hpp"
#include "vads/graph.hpp"
#include "vads/param_store.hpp"
#include "vads/text_fusion.hpp"

namespace vads {

/// Scene-level multi-label classifier: pooled visual descriptors (one
/// pooling block per stream, all reading the shared feature timeline) and an
/// encoded global-local text sequence produce per-modality class logits,
/// fused into C probabilities.
struct TaggerConfig {
  std::size_t n_classes = 82;  // C
  std::size_t n_streams = 1;
  SoftDBoFConfig pooling;
  TextEncoderConfig text;
  /// false: concat the 2C modality logits into a dense fusion head (default);
  /// true: average the two logit vectors instead.
  bool late_average = false;
  double score_threshold = 0.35;
};

struct TaggerModel {
  TaggerConfig config;
  ParamStore store;

  static TaggerModel create(const TaggerConfig& config, std::uint64_t seed);
  static TaggerModel load(const std::string& path);
  void save(const std::string& path) const;
};

struct TaggerParamIds {
  std::vector<SoftDBoFParamIds> streams;
  TextEncoderParamIds text;
  ValueId head_v_w = 0, head_v_b = 0;
  ValueId head_t_w = 0, head_t_b = 0;
  ValueId head_f_w = 0, head_f_b = 0;
};

TaggerParamIds use_tagger_params(Graph& g, const TaggerModel& model, WeightSource src);

/// Scores [C] for one scene. `scene_features` may be empty (std::nullopt) in
/// which case the visual branch sees a zero descriptor.
ValueId tagger_scores_graph(Graph& g, const TaggerConfig& config, const TaggerParamIds& ids,
                            std::optional<ValueId> scene_features, const TokenSequence& seq);

/// Builds the fused text input for one scene from its (deduplicated,
/// scene-sliced) OCR frames and the whole-video ASR token list.
TokenSequence build_scene_sequence(const TaggerConfig& config,
                                   const std::vector<std::vector<std::string>>& scene_ocr,
                                   const std::vector<std::string>& video_asr);

/// Fused class probabilities for a scene with at least one snippet.
Tensor tag_scene(const TaggerModel& model, const Tensor& scene_features,
                 const std::vector<std::vector<std::string>>& scene_ocr,
                 const std::vector<std::string>& video_asr,
                 WeightSource src = WeightSource::Ema);

/// As tag_scene, but an empty feature slice falls back to a zero visual
/// descriptor instead of failing (used for decoded segments shorter than a
/// snippet).
Tensor tag_scene_or_default(const TaggerModel& model, const Tensor& scene_features,
                            const std::vector<std::vector<std::string>>& scene_ocr,
                            const std::vector<std::string>& video_asr,
                            WeightSource src = WeightSource::Ema);

/// Sum over classes of BCE(score_c, c in labels). Throws on out-of-range ids.
double tagging_loss(const Tensor& scores, const std::vector<int>& labels);

/// Elementwise mean of per-model probability vectors.
Tensor ensemble_scene_scores(const std::vector<Tensor>& score_list);

/// {c : score_c >= threshold}; falls back to the argmax class when empty so
/// every scene carries at least one tag.
std::vector<int> apply_score_threshold(const Tensor& scores, double threshold);

struct TrainTagConfig {
  double lr_head = 1e-4;  // head_v, head_t, head_f
  double lr_rest = 1e-5;  // pooling blocks and text encoder
  std::size_t batch = 32;
  std::size_t epochs = 50;
  double ema_decay = 0.9;
  std::uint64_t seed = 0;
};

struct TrainTagResult {
  TaggerModel model;
  std::vector<double> epoch_loss;
};

/// Trains on every annotated scene of the dataset; scene samples are
/// (feature slice, scene OCR, video ASR, label set).
TrainTagResult train_tagger(const std::vector<VideoRecord>& records, const TaggerConfig& config,
                            const TrainTagConfig& train, const TaggerModel* init = nullptr);

/// Snippet index range [lo, hi) covered by the interval [start, end).
std::pair<std::size_t, std::size_t> snippet_range(double start, double end, double snippet_rate,
                                                  std::size_t t);

}  // namespace vads
