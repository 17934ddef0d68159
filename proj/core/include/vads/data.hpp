#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vads/tensor.hpp"

namespace vads {

/// Half-open interval [start, end) in seconds with a multi-label tag set.
struct SceneAnnotation {
  double start = 0.0;
  double end = 0.0;
  std::vector<int> labels;  // sorted class ids in [0, C)
};

/// One video: a timeline of pre-extracted frame features (one vector per
/// snippet), per-snippet OCR token lists, one global ASR token list, and
/// optional scene annotations. Annotated scenes must be sorted,
/// non-overlapping and tile [0, T / snippet_rate).
struct VideoRecord {
  std::string id;
  double snippet_rate = 4.0;  // snippets per second
  Tensor features;            // [T, D]
  std::vector<std::vector<std::string>> ocr_tokens;  // size T
  std::vector<std::string> asr_tokens;
  std::vector<SceneAnnotation> scenes;  // may be empty for test videos

  std::size_t snippet_count() const { return features.rank() == 2 ? features.dim(0) : 0; }
  std::size_t feature_dim() const { return features.rank() == 2 ? features.dim(1) : 0; }
  double duration() const { return static_cast<double>(snippet_count()) / snippet_rate; }
  bool annotated() const { return !scenes.empty(); }
};

/// Throws ValidationError naming the video id if any invariant fails.
void validate_record(const VideoRecord& record);

/// One JSON object per line; see docs/formats.md. Throws ParseError with a
/// line number on malformed input and ValidationError on invariant failures.
std::vector<VideoRecord> load_dataset(const std::string& path);
void save_dataset(const std::vector<VideoRecord>& records, const std::string& path);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::uint64_t split_seed = 0;
};

/// Deterministic split with |val| = round(val_fraction * N).
DatasetSplit split_dataset(const std::vector<VideoRecord>& records, double val_fraction,
                           std::uint64_t seed);

struct SyntheticConfig {
  std::size_t n_videos = 50;
  std::size_t t_min = 40;   // snippets
  std::size_t t_max = 120;  // snippets
  std::size_t feature_dim = 64;
  std::size_t n_classes = 12;
  std::size_t vocab_hint = 4096;  // noise-token pool size
  double snippet_rate = 4.0;
  double centroid_separation = 4.0;
  double noise_sigma = 0.5;
  std::size_t min_scene_snippets = 8;
  std::size_t max_labels_per_scene = 3;
  std::uint64_t seed = 0;
};

/// Seed-deterministic solvable dataset: every video has 2-6 scenes, snippet
/// features cluster around a centroid chosen per label set (pairwise centroid
/// distance >= centroid_separation), scene OCR tokens include label-specific
/// keywords and the ASR stream covers every label in the video.
std::vector<VideoRecord> generate_synthetic(const SyntheticConfig& config);

}  // namespace vads
