#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vads/graph.hpp"
#include "vads/param_store.hpp"

namespace vads {

// Reserved token ids.
constexpr std::uint32_t kTokenCls = 0;
constexpr std::uint32_t kTokenSep = 1;
constexpr std::uint32_t kTokenPad = 2;
constexpr std::uint32_t kTokenUnk = 3;
constexpr std::uint32_t kNumReservedTokens = 4;

/// Segment kinds distinguish the scene-local OCR span from the video-global
/// ASR span inside one fused sequence.
enum class SegmentKind : std::uint8_t { Cls = 0, Ocr = 1, Sep = 2, Asr = 3 };
constexpr std::size_t kNumSegmentKinds = 4;

/// Drops from each frame any token string that appeared verbatim in the
/// previous frame's original (pre-dedup) list. Idempotent.
std::vector<std::vector<std::string>> dedup_ocr(
    const std::vector<std::vector<std::string>>& per_frame_tokens);

struct VocabConfig {
  std::uint32_t size = 8192;  // includes the 4 reserved ids
  std::uint64_t hash_seed = 0x5eed;
};

/// Whitespace/CJK split followed by a deterministic hash into [4, size).
std::vector<std::uint32_t> tokenize(const std::vector<std::string>& raw, const VocabConfig& vocab);

/// [CLS] + OCR tokens + [SEP] + ASR tokens with parallel segment ids.
struct TokenSequence {
  std::vector<std::uint32_t> ids;
  std::vector<SegmentKind> segments;

  std::size_t size() const { return ids.size(); }
};

/// Assembles the fused global-local input, truncating to max_len by trimming
/// the OCR tail first and the ASR tail only when OCR alone cannot absorb it.
TokenSequence build_input(const std::vector<std::uint32_t>& ocr_ids,
                          const std::vector<std::uint32_t>& asr_ids, std::size_t max_len);

struct TextEncoderConfig {
  VocabConfig vocab;
  std::size_t embed_dim = 64;    // E
  std::size_t output_dim = 128;  // E_out
  std::size_t max_len = 256;
};

struct TextEncoderParamIds {
  ValueId token_emb;    // [V, E]
  ValueId segment_emb;  // [4, E]
  ValueId query;        // [E, 1]
  ValueId proj;         // [E, E_out]
};

void init_text_encoder_params(ParamStore& store, const std::string& prefix,
                              const TextEncoderConfig& cfg, std::uint64_t seed);
TextEncoderParamIds use_text_encoder_params(Graph& g, const ParamStore& store,
                                            const std::string& prefix, WeightSource src);

/// Single-query attention pooling over token+segment embeddings; PAD
/// positions are masked out of the attention. Returns the [E_out] handle.
ValueId encode_text(Graph& g, const TokenSequence& seq, const TextEncoderParamIds& p,
                    const TextEncoderConfig& cfg);

/// Attention weights over the sequence (PAD entries are exactly zero).
std::vector<double> encode_attention_weights(const TokenSequence& seq, const ParamStore& store,
                                             const std::string& prefix,
                                             const TextEncoderConfig& cfg,
                                             WeightSource src = WeightSource::Raw);

Tensor encode_text_eval(const TokenSequence& seq, const ParamStore& store,
                        const std::string& prefix, const TextEncoderConfig& cfg,
                        WeightSource src = WeightSource::Raw);

}  // namespace vads
