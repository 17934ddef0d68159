#pragma once

#include <cstdint>
#include <string>

#include "vads/graph.hpp"
#include "vads/param_store.hpp"

namespace vads {

/// Grouped soft bag-of-features pooling: snippets are expanded to lambda*N
/// dims, soft-assigned to K clusters within each of G groups, weighted by a
/// per-group sigmoid attention and summed over time and groups into a K-dim
/// orderless descriptor.
struct SoftDBoFConfig {
  std::size_t input_dim = 64;  // N
  std::size_t expansion = 2;   // lambda
  std::size_t groups = 8;      // G
  std::size_t clusters = 64;   // K
  bool normalize_by_time = false;

  std::size_t expanded_dim() const { return expansion * input_dim; }
};

/// Graph-side handles to one pooling block's parameters.
struct SoftDBoFParamIds {
  ValueId expand_w, expand_b;    // [N, lambda*N], [lambda*N]
  ValueId attn_w, attn_b;        // [lambda*N, G], [G]
  ValueId cluster_w, cluster_b;  // [lambda*N, G*K], [G*K]
};

/// Registers freshly initialised parameters under "<prefix>/..." names.
void init_softdbof_params(ParamStore& store, const std::string& prefix,
                          const SoftDBoFConfig& cfg, std::uint64_t seed);

/// Inserts the block's parameters into a graph for a forward pass.
SoftDBoFParamIds use_softdbof_params(Graph& g, const ParamStore& store, const std::string& prefix,
                                     WeightSource src);

// Graph builders. Shapes: features [T, N], expanded [T, lambda*N],
// attention [T, G], assignments [T, G, K], descriptor [K].
ValueId softdbof_expand(Graph& g, ValueId features, const SoftDBoFParamIds& p);
ValueId softdbof_attention(Graph& g, ValueId expanded, const SoftDBoFParamIds& p);
ValueId softdbof_assignments(Graph& g, ValueId expanded, const SoftDBoFParamIds& p,
                             const SoftDBoFConfig& cfg);
ValueId aggregate(Graph& g, ValueId features, const SoftDBoFParamIds& p,
                  const SoftDBoFConfig& cfg);

// Tensor-level conveniences for single snippets / whole clips.
// `group` is 1-based and must be in [1, G].
Tensor expand_eval(const Tensor& x, const ParamStore& store, const std::string& prefix,
                   WeightSource src = WeightSource::Raw);
double group_attention_eval(const Tensor& expanded, const ParamStore& store,
                            const std::string& prefix, std::size_t group,
                            WeightSource src = WeightSource::Raw);
Tensor cluster_assign_eval(const Tensor& expanded, const ParamStore& store,
                           const std::string& prefix, std::size_t group, const SoftDBoFConfig& cfg,
                           WeightSource src = WeightSource::Raw);
Tensor aggregate_eval(const Tensor& features, const ParamStore& store, const std::string& prefix,
                      const SoftDBoFConfig& cfg, WeightSource src = WeightSource::Raw);

/// Learnable-scalar counts for this pooling block and for the NeXtVLAD
/// layout with the same (lambda, G, K, N); NeXtVLAD additionally carries a
/// K x (lambda*N/G) cluster-center tensor.
std::size_t softdbof_param_count(const SoftDBoFConfig& cfg);
std::size_t nextvlad_param_count(const SoftDBoFConfig& cfg);

}  // namespace vads
