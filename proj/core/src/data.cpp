#include "vads/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vads/error.hpp"
#include "vads/rng.hpp"

namespace vads {

void validate_record(const VideoRecord& r) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("video '" + r.id + "': " + what);
  };
  if (r.id.empty()) throw ValidationError("video record with empty id");
  if (r.snippet_rate <= 0.0) fail("snippet_rate must be positive");
  if (r.features.rank() != 2) fail("features must be a [T, D] matrix");
  const std::size_t T = r.features.dim(0);
  if (T < 1) fail("needs at least one snippet");
  r.features.check_finite("video '" + r.id + "' features");
  if (r.ocr_tokens.size() != T) {
    fail("ocr token lists (" + std::to_string(r.ocr_tokens.size()) + ") must match snippets (" +
         std::to_string(T) + ")");
  }
  if (r.scenes.empty()) return;

  if (T < 2) fail("annotated videos need at least two snippets");
  const double duration = r.duration();
  const double tol = 1e-9 * std::max(1.0, duration);
  for (std::size_t i = 0; i < r.scenes.size(); ++i) {
    const SceneAnnotation& s = r.scenes[i];
    if (!(s.start >= 0.0) || !(s.start < s.end)) {
      fail("scene " + std::to_string(i) + " has a degenerate interval");
    }
    if (s.end > duration + tol) {
      fail("scene " + std::to_string(i) + " extends past the video end");
    }
    if (s.labels.empty()) fail("scene " + std::to_string(i) + " has no labels");
    for (int c : s.labels) {
      if (c < 0) fail("scene " + std::to_string(i) + " has a negative label");
    }
    if (i > 0 && r.scenes[i - 1].end != s.start) {
      std::ostringstream os;
      os << "scenes " << (i - 1) << " and " << i << " do not tile (end " << r.scenes[i - 1].end
         << " != start " << s.start << ")";
      fail(os.str());
    }
  }
  if (r.scenes.front().start != 0.0) fail("first scene must start at 0");
  if (std::abs(r.scenes.back().end - duration) > tol) {
    fail("last scene must end at the video duration");
  }
}

namespace {

nlohmann::json record_to_json(const VideoRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["snippet_rate"] = r.snippet_rate;
  const std::size_t T = r.features.dim(0), D = r.features.dim(1);
  nlohmann::json feats = nlohmann::json::array();
  for (std::size_t t = 0; t < T; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t d = 0; d < D; ++d) row.push_back(r.features.at2(t, d));
    feats.push_back(std::move(row));
  }
  j["features"] = std::move(feats);
  j["ocr"] = r.ocr_tokens;
  j["asr"] = r.asr_tokens;
  nlohmann::json scenes = nlohmann::json::array();
  for (const SceneAnnotation& s : r.scenes) {
    scenes.push_back({{"start", s.start}, {"end", s.end}, {"labels", s.labels}});
  }
  j["scenes"] = std::move(scenes);
  return j;
}

VideoRecord record_from_json(const nlohmann::json& j) {
  VideoRecord r;
  r.id = j.at("id").get<std::string>();
  r.snippet_rate = j.at("snippet_rate").get<double>();
  const auto& feats = j.at("features");
  const std::size_t T = feats.size();
  const std::size_t D = T > 0 ? feats.at(0).size() : 0;
  std::vector<double> flat;
  flat.reserve(T * D);
  for (const auto& row : feats) {
    if (row.size() != D) {
      throw ValidationError("video '" + r.id + "': ragged feature rows");
    }
    for (const auto& v : row) flat.push_back(v.get<double>());
  }
  r.features = Tensor({T, D}, std::move(flat));
  r.ocr_tokens = j.at("ocr").get<std::vector<std::vector<std::string>>>();
  r.asr_tokens = j.at("asr").get<std::vector<std::string>>();
  for (const auto& s : j.at("scenes")) {
    SceneAnnotation a;
    a.start = s.at("start").get<double>();
    a.end = s.at("end").get<double>();
    a.labels = s.at("labels").get<std::vector<int>>();
    std::sort(a.labels.begin(), a.labels.end());
    r.scenes.push_back(std::move(a));
  }
  return r;
}

}  // namespace

std::vector<VideoRecord> load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("dataset: cannot open '" + path + "'");
  std::vector<VideoRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset '" + path + "' line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    VideoRecord r;
    try {
      r = record_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset '" + path + "' line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    validate_record(r);
    records.push_back(std::move(r));
  }
  return records;
}

void save_dataset(const std::vector<VideoRecord>& records, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ValidationError("dataset: cannot open '" + path + "' for writing");
  for (const VideoRecord& r : records) {
    os << record_to_json(r).dump() << '\n';
  }
  if (!os) throw ValidationError("dataset: write to '" + path + "' failed");
}

DatasetSplit split_dataset(const std::vector<VideoRecord>& records, double val_fraction,
                           std::uint64_t seed) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    throw ConfigError("split: val_fraction must be in (0, 1)");
  }
  if (records.size() < 2) {
    throw ConfigError("split: need at least 2 videos, got " + std::to_string(records.size()));
  }
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const VideoRecord& r : records) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());

  Rng rng(derive_seed(seed, "dataset-split"));
  // Fisher-Yates on the sorted id list.
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(ids[i - 1], ids[j]);
  }
  const std::size_t n_val = static_cast<std::size_t>(
      std::lround(val_fraction * static_cast<double>(ids.size())));
  DatasetSplit split;
  split.split_seed = seed;
  split.val.assign(ids.begin(), ids.begin() + n_val);
  split.train.assign(ids.begin() + n_val, ids.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

}  // namespace vads
