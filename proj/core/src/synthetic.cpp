#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "vads/data.hpp"
#include "vads/error.hpp"
#include "vads/rng.hpp"

namespace vads {

namespace {

std::string keyword_token(int class_id, int variant) {
  return "kw_c" + std::to_string(class_id) + "_" + std::to_string(variant);
}

/// Per-label-set cluster centers, pairwise at least `separation` apart.
class CentroidBook {
 public:
  CentroidBook(std::size_t dim, double separation, std::uint64_t seed)
      : dim_(dim), separation_(separation), rng_(seed) {}

  const std::vector<double>& centroid(const std::vector<int>& labels) {
    auto it = book_.find(labels);
    if (it != book_.end()) return it->second;
    double radius = separation_;
    for (int attempt = 0;; ++attempt) {
      std::vector<double> c = random_direction();
      for (double& v : c) v *= radius;
      if (min_distance(c) >= separation_) {
        return book_.emplace(labels, std::move(c)).first->second;
      }
      if (attempt > 0 && attempt % 32 == 0) radius *= 1.25;
    }
  }

 private:
  std::vector<double> random_direction() {
    std::vector<double> v(dim_);
    double norm2 = 0.0;
    do {
      norm2 = 0.0;
      for (double& x : v) {
        x = rng_.normal();
        norm2 += x * x;
      }
    } while (norm2 == 0.0);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& x : v) x *= inv;
    return v;
  }

  double min_distance(const std::vector<double>& c) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [_, other] : book_) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < dim_; ++i) {
        const double d = c[i] - other[i];
        d2 += d * d;
      }
      best = std::min(best, std::sqrt(d2));
    }
    return best;
  }

  std::size_t dim_;
  double separation_;
  Rng rng_;
  std::map<std::vector<int>, std::vector<double>> book_;
};

}  // namespace

std::vector<VideoRecord> generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.feature_dim < 4) throw ConfigError("synthetic: feature_dim must be >= 4");
  if (cfg.n_classes < 2) throw ConfigError("synthetic: n_classes must be >= 2");
  if (cfg.snippet_rate <= 0.0) throw ConfigError("synthetic: snippet_rate must be positive");
  if (cfg.t_min > cfg.t_max) throw ConfigError("synthetic: t_min > t_max");
  if (cfg.n_videos == 0) return {};
  if (cfg.t_min < 2 * cfg.min_scene_snippets) {
    throw ConfigError("synthetic: t_min " + std::to_string(cfg.t_min) +
                      " too small for 2 scenes of " + std::to_string(cfg.min_scene_snippets) +
                      " snippets");
  }

  CentroidBook book(cfg.feature_dim, cfg.centroid_separation,
                    derive_seed(cfg.seed, "synthetic-centroids"));
  std::vector<VideoRecord> records;
  records.reserve(cfg.n_videos);

  for (std::size_t vi = 0; vi < cfg.n_videos; ++vi) {
    Rng rng(derive_seed(cfg.seed, "synthetic-video", vi));
    VideoRecord r;
    {
      std::ostringstream os;
      os << "synth_" << vi / 1000 % 10 << vi / 100 % 10 << vi / 10 % 10 << vi % 10;
      r.id = os.str();
    }
    r.snippet_rate = cfg.snippet_rate;

    const std::size_t T =
        static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(cfg.t_min),
                                                 static_cast<std::int64_t>(cfg.t_max)));
    const std::size_t max_scenes =
        std::min<std::size_t>(6, T / cfg.min_scene_snippets);
    const std::size_t n_scenes =
        static_cast<std::size_t>(rng.uniform_int(2, static_cast<std::int64_t>(max_scenes)));

    // Scene lengths: minimum length plus a random share of the slack.
    std::vector<std::size_t> lengths(n_scenes, cfg.min_scene_snippets);
    std::size_t slack = T - n_scenes * cfg.min_scene_snippets;
    std::vector<double> weights(n_scenes);
    double wsum = 0.0;
    for (double& w : weights) {
      w = rng.uniform(0.2, 1.0);
      wsum += w;
    }
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < n_scenes; ++s) {
      const std::size_t extra = static_cast<std::size_t>(
          std::floor(static_cast<double>(slack) * weights[s] / wsum));
      lengths[s] += extra;
      assigned += extra;
    }
    for (std::size_t s = 0; assigned < slack; ++assigned, s = (s + 1) % n_scenes) {
      ++lengths[s];
    }

    // Labels per scene; consecutive scenes get distinct label sets so every
    // annotated boundary is a real content change.
    std::vector<std::vector<int>> scene_labels(n_scenes);
    for (std::size_t s = 0; s < n_scenes; ++s) {
      for (int attempt = 0; attempt < 64; ++attempt) {
        const std::size_t n_labels = static_cast<std::size_t>(
            rng.uniform_int(1, static_cast<std::int64_t>(cfg.max_labels_per_scene)));
        std::vector<int> labels;
        while (labels.size() < n_labels) {
          const int c = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(cfg.n_classes) - 1));
          if (std::find(labels.begin(), labels.end(), c) == labels.end()) labels.push_back(c);
        }
        std::sort(labels.begin(), labels.end());
        if (s == 0 || labels != scene_labels[s - 1]) {
          scene_labels[s] = std::move(labels);
          break;
        }
      }
      if (scene_labels[s].empty()) {
        scene_labels[s] = {static_cast<int>(s % cfg.n_classes)};
      }
    }

    // Features around per-label-set centroids.
    r.features = Tensor::zeros({T, cfg.feature_dim});
    r.ocr_tokens.resize(T);
    std::size_t begin = 0;
    for (std::size_t s = 0; s < n_scenes; ++s) {
      const std::size_t end = begin + lengths[s];
      const std::vector<double>& centroid = book.centroid(scene_labels[s]);
      const std::string persistent = keyword_token(scene_labels[s][0], 0);
      for (std::size_t t = begin; t < end; ++t) {
        for (std::size_t d = 0; d < cfg.feature_dim; ++d) {
          r.features.at2(t, d) = centroid[d] + cfg.noise_sigma * rng.normal();
        }
        std::vector<std::string>& frame = r.ocr_tokens[t];
        frame.push_back(persistent);
        if (rng.bernoulli(0.5)) {
          const int label = scene_labels[s][static_cast<std::size_t>(
              rng.uniform_int(0, static_cast<std::int64_t>(scene_labels[s].size()) - 1))];
          frame.push_back(keyword_token(label, static_cast<int>(rng.uniform_int(0, 3))));
        }
        if (rng.bernoulli(0.3)) {
          frame.push_back("noise_" + std::to_string(rng.uniform_int(
                              0, std::max<std::int64_t>(1, static_cast<std::int64_t>(cfg.vocab_hint / 4)) - 1)));
        }
      }
      SceneAnnotation ann;
      ann.start = static_cast<double>(begin) / cfg.snippet_rate;
      ann.end = static_cast<double>(end) / cfg.snippet_rate;
      ann.labels = scene_labels[s];
      r.scenes.push_back(std::move(ann));
      begin = end;
    }

    // Global ASR: every label keyword in scene order plus noise chatter.
    for (std::size_t s = 0; s < n_scenes; ++s) {
      for (int label : scene_labels[s]) {
        r.asr_tokens.push_back(keyword_token(label, 0));
        r.asr_tokens.push_back(keyword_token(label, 1));
      }
    }
    const std::size_t n_noise = static_cast<std::size_t>(rng.uniform_int(5, 10));
    for (std::size_t i = 0; i < n_noise; ++i) {
      r.asr_tokens.push_back("noise_" + std::to_string(rng.uniform_int(
                                 0, std::max<std::int64_t>(1, static_cast<std::int64_t>(cfg.vocab_hint / 4)) - 1)));
    }

    validate_record(r);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace vads
