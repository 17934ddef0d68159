#include "vads/text_fusion.hpp"

#include <algorithm>
#include <unordered_set>

#include "vads/error.hpp"
#include "vads/init.hpp"
#include "vads/rng.hpp"

namespace vads {

std::vector<std::vector<std::string>> dedup_ocr(
    const std::vector<std::vector<std::string>>& frames) {
  std::vector<std::vector<std::string>> out(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (f == 0) {
      out[f] = frames[f];
      continue;
    }
    const std::unordered_set<std::string> prev(frames[f - 1].begin(), frames[f - 1].end());
    for (const std::string& tok : frames[f]) {
      if (!prev.count(tok)) out[f].push_back(tok);
    }
  }
  return out;
}

namespace {

bool is_cjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) ||   // unified ideographs
         (cp >= 0x3400 && cp <= 0x4DBF) ||   // extension A
         (cp >= 0xF900 && cp <= 0xFAFF) ||   // compatibility ideographs
         (cp >= 0x3040 && cp <= 0x30FF);     // kana
}

/// Splits one raw string into word tokens: whitespace-separated runs, with
/// each CJK character emitted as its own token.
void split_words(const std::string& s, std::vector<std::string>& out) {
  std::string current;
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = c;
    if (c >= 0xF0) {
      len = 4;
    } else if (c >= 0xE0) {
      len = 3;
    } else if (c >= 0xC0) {
      len = 2;
    }
    if (len > 1 && i + len <= s.size()) {
      cp = c & (0x7F >> len);
      for (std::size_t k = 1; k < len; ++k) {
        cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
      }
    } else {
      len = 1;
    }
    if (len == 1 && std::isspace(c)) {
      if (!current.empty()) {
        out.push_back(current);
        current.clear();
      }
    } else if (is_cjk(cp)) {
      if (!current.empty()) {
        out.push_back(current);
        current.clear();
      }
      out.push_back(s.substr(i, len));
    } else {
      current.append(s, i, len);
    }
    i += len;
  }
  if (!current.empty()) out.push_back(current);
}

}  // namespace

std::vector<std::uint32_t> tokenize(const std::vector<std::string>& raw,
                                    const VocabConfig& vocab) {
  if (vocab.size <= kNumReservedTokens) {
    throw ConfigError("tokenize: vocabulary must be larger than the reserved ids");
  }
  std::vector<std::string> words;
  for (const std::string& s : raw) split_words(s, words);
  std::vector<std::uint32_t> ids;
  ids.reserve(words.size());
  const std::uint64_t slots = vocab.size - kNumReservedTokens;
  for (const std::string& w : words) {
    std::uint64_t h = fnv1a(w, vocab.hash_seed ^ 0xcbf29ce484222325ull);
    // Avalanche finalizer: plain FNV clusters under small moduli.
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ull;
    h ^= h >> 33;
    ids.push_back(kNumReservedTokens + static_cast<std::uint32_t>(h % slots));
  }
  return ids;
}

TokenSequence build_input(const std::vector<std::uint32_t>& ocr_ids,
                          const std::vector<std::uint32_t>& asr_ids, std::size_t max_len) {
  if (max_len < 3) throw ConfigError("build_input: max_len must be >= 3");
  const std::size_t budget = max_len - 2;  // CLS and SEP
  const std::size_t n_asr = std::min(asr_ids.size(), budget);
  const std::size_t n_ocr = std::min(ocr_ids.size(), budget - n_asr);

  TokenSequence seq;
  seq.ids.reserve(n_ocr + n_asr + 2);
  seq.segments.reserve(n_ocr + n_asr + 2);
  seq.ids.push_back(kTokenCls);
  seq.segments.push_back(SegmentKind::Cls);
  for (std::size_t i = 0; i < n_ocr; ++i) {
    seq.ids.push_back(ocr_ids[i]);
    seq.segments.push_back(SegmentKind::Ocr);
  }
  seq.ids.push_back(kTokenSep);
  seq.segments.push_back(SegmentKind::Sep);
  for (std::size_t i = 0; i < n_asr; ++i) {
    seq.ids.push_back(asr_ids[i]);
    seq.segments.push_back(SegmentKind::Asr);
  }
  return seq;
}

void init_text_encoder_params(ParamStore& store, const std::string& prefix,
                              const TextEncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab.size <= kNumReservedTokens) {
    throw ConfigError("text encoder: vocabulary too small");
  }
  const std::size_t v = cfg.vocab.size, e = cfg.embed_dim;
  store.add(prefix + "/token_emb",
            normal_init({v, e}, 0.5, derive_seed(seed, prefix + "/token_emb")));
  store.add(prefix + "/segment_emb",
            normal_init({kNumSegmentKinds, e}, 0.5, derive_seed(seed, prefix + "/segment_emb")));
  store.add(prefix + "/query", xavier_init({e, 1}, e, derive_seed(seed, prefix + "/query")));
  store.add(prefix + "/proj",
            xavier_init({e, cfg.output_dim}, e, derive_seed(seed, prefix + "/proj")));
}

TextEncoderParamIds use_text_encoder_params(Graph& g, const ParamStore& store,
                                            const std::string& prefix, WeightSource src) {
  TextEncoderParamIds p;
  p.token_emb = g.parameter(prefix + "/token_emb", store.weights(prefix + "/token_emb", src));
  p.segment_emb = g.parameter(prefix + "/segment_emb", store.weights(prefix + "/segment_emb", src));
  p.query = g.parameter(prefix + "/query", store.weights(prefix + "/query", src));
  p.proj = g.parameter(prefix + "/proj", store.weights(prefix + "/proj", src));
  return p;
}

ValueId encode_text(Graph& g, const TokenSequence& seq, const TextEncoderParamIds& p,
                    const TextEncoderConfig& cfg) {
  if (seq.ids.size() != seq.segments.size()) {
    throw ValidationError("encode_text: ids and segments length mismatch");
  }
  if (seq.ids.empty()) throw ValidationError("encode_text: empty sequence");
  const std::size_t L = seq.ids.size();
  const std::size_t V = g.value(p.token_emb).dim(0);
  for (std::uint32_t id : seq.ids) {
    if (id >= V) {
      throw ValidationError("encode_text: token id " + std::to_string(id) +
                            " outside vocabulary of " + std::to_string(V));
    }
  }

  std::vector<std::uint32_t> seg_idx(L);
  Tensor mask = Tensor::zeros({L, 1});
  for (std::size_t j = 0; j < L; ++j) {
    seg_idx[j] = static_cast<std::uint32_t>(seq.segments[j]);
    if (seq.ids[j] == kTokenPad) mask.at(j) = -1e30;  // excluded from attention
  }

  ValueId tok = g.gather_rows(p.token_emb, seq.ids);       // [L, E]
  ValueId seg = g.gather_rows(p.segment_emb, seg_idx);     // [L, E]
  ValueId h = g.add(tok, seg);

  const double inv_sqrt_e = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
  ValueId scores = g.scale(g.matmul(h, p.query), inv_sqrt_e);  // [L, 1]
  ValueId masked = g.add(scores, g.input(std::move(mask)));
  ValueId attn = g.softmax_rows(g.reshape(masked, {std::size_t{1}, L}));  // [1, L]
  ValueId pooled = g.matmul(attn, h);                                     // [1, E]
  ValueId projected = g.matmul(pooled, p.proj);                           // [1, E_out]
  return g.reshape(projected, {cfg.output_dim});
}

std::vector<double> encode_attention_weights(const TokenSequence& seq, const ParamStore& store,
                                             const std::string& prefix,
                                             const TextEncoderConfig& cfg, WeightSource src) {
  const std::size_t L = seq.ids.size();
  const Tensor& tok_emb = store.weights(prefix + "/token_emb", src);
  const Tensor& seg_emb = store.weights(prefix + "/segment_emb", src);
  const Tensor& query = store.weights(prefix + "/query", src);
  const std::size_t E = cfg.embed_dim;
  std::vector<double> scores(L);
  for (std::size_t j = 0; j < L; ++j) {
    double s = 0.0;
    for (std::size_t d = 0; d < E; ++d) {
      s += (tok_emb.at2(seq.ids[j], d) + seg_emb.at2(static_cast<std::size_t>(seq.segments[j]), d)) *
           query.at2(d, 0);
    }
    scores[j] = seq.ids[j] == kTokenPad ? -1e30 : s / std::sqrt(static_cast<double>(E));
  }
  const double m = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double& s : scores) {
    s = std::exp(s - m);
    z += s;
  }
  for (double& s : scores) s /= z;
  return scores;
}

Tensor encode_text_eval(const TokenSequence& seq, const ParamStore& store,
                        const std::string& prefix, const TextEncoderConfig& cfg,
                        WeightSource src) {
  Graph g;
  TextEncoderParamIds p = use_text_encoder_params(g, store, prefix, src);
  return g.value(encode_text(g, seq, p, cfg));
}

}  // namespace vads
