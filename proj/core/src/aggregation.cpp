#include "vads/aggregation.hpp"

#include "vads/error.hpp"
#include "vads/init.hpp"

namespace vads {

void init_softdbof_params(ParamStore& store, const std::string& prefix,
                          const SoftDBoFConfig& cfg, std::uint64_t seed) {
  if (cfg.expansion < 1 || cfg.groups < 1 || cfg.clusters < 1 || cfg.input_dim < 1) {
    throw ConfigError("softdbof: expansion, groups, clusters and input_dim must be >= 1");
  }
  const std::size_t n = cfg.input_dim, e = cfg.expanded_dim();
  const std::size_t gk = cfg.groups * cfg.clusters;
  store.add(prefix + "/expand_w", xavier_init({n, e}, n, derive_seed(seed, prefix + "/expand_w")));
  store.add(prefix + "/expand_b", Tensor::zeros({e}));
  store.add(prefix + "/attn_w", xavier_init({e, cfg.groups}, e, derive_seed(seed, prefix + "/attn_w")));
  store.add(prefix + "/attn_b", Tensor::zeros({cfg.groups}));
  store.add(prefix + "/cluster_w", xavier_init({e, gk}, e, derive_seed(seed, prefix + "/cluster_w")));
  store.add(prefix + "/cluster_b", Tensor::zeros({gk}));
}

SoftDBoFParamIds use_softdbof_params(Graph& g, const ParamStore& store, const std::string& prefix,
                                     WeightSource src) {
  SoftDBoFParamIds p;
  p.expand_w = g.parameter(prefix + "/expand_w", store.weights(prefix + "/expand_w", src));
  p.expand_b = g.parameter(prefix + "/expand_b", store.weights(prefix + "/expand_b", src));
  p.attn_w = g.parameter(prefix + "/attn_w", store.weights(prefix + "/attn_w", src));
  p.attn_b = g.parameter(prefix + "/attn_b", store.weights(prefix + "/attn_b", src));
  p.cluster_w = g.parameter(prefix + "/cluster_w", store.weights(prefix + "/cluster_w", src));
  p.cluster_b = g.parameter(prefix + "/cluster_b", store.weights(prefix + "/cluster_b", src));
  return p;
}

ValueId softdbof_expand(Graph& g, ValueId features, const SoftDBoFParamIds& p) {
  return g.dense(features, p.expand_w, p.expand_b);
}

ValueId softdbof_attention(Graph& g, ValueId expanded, const SoftDBoFParamIds& p) {
  return g.sigmoid(g.dense(expanded, p.attn_w, p.attn_b));
}

ValueId softdbof_assignments(Graph& g, ValueId expanded, const SoftDBoFParamIds& p,
                             const SoftDBoFConfig& cfg) {
  const std::size_t t = g.value(expanded).dim(0);
  ValueId scores = g.dense(expanded, p.cluster_w, p.cluster_b);  // [T, G*K]
  return g.softmax_rows(g.reshape(scores, {t, cfg.groups, cfg.clusters}));
}

ValueId aggregate(Graph& g, ValueId features, const SoftDBoFParamIds& p,
                  const SoftDBoFConfig& cfg) {
  const Tensor& x = g.value(features);
  if (x.rank() != 2) {
    throw DimensionError("aggregate: features must be [T, N], got " + shape_str(x.shape));
  }
  if (x.dim(0) < 1) {
    throw ValidationError("aggregate: empty clip (T = 0) has no descriptor");
  }
  if (x.dim(1) != cfg.input_dim) {
    throw DimensionError("aggregate: feature dim " + std::to_string(x.dim(1)) +
                         " does not match configured input_dim " +
                         std::to_string(cfg.input_dim));
  }
  const std::size_t t_len = x.dim(0);  // before recording invalidates x
  ValueId expanded = softdbof_expand(g, features, p);
  ValueId attention = softdbof_attention(g, expanded, p);          // [T, G]
  ValueId assign = softdbof_assignments(g, expanded, p, cfg);      // [T, G, K]
  ValueId weighted = g.row_scale(assign, attention);               // rows are (t, g) pairs
  ValueId descriptor = g.sum_rows(weighted);                       // [K]
  if (cfg.normalize_by_time) {
    descriptor = g.scale(descriptor, 1.0 / static_cast<double>(t_len));
  }
  return descriptor;
}

namespace {

void check_group(std::size_t group, std::size_t groups) {
  if (group < 1 || group > groups) {
    throw ValidationError("softdbof: group " + std::to_string(group) + " out of range [1, " +
                          std::to_string(groups) + "]");
  }
}

}  // namespace

Tensor expand_eval(const Tensor& x, const ParamStore& store, const std::string& prefix,
                   WeightSource src) {
  Graph g;
  ValueId in = g.input(x);
  ValueId out = g.dense(in, g.input(store.weights(prefix + "/expand_w", src)),
                        g.input(store.weights(prefix + "/expand_b", src)));
  return g.value(out);
}

double group_attention_eval(const Tensor& expanded, const ParamStore& store,
                            const std::string& prefix, std::size_t group, WeightSource src) {
  const Tensor& w = store.weights(prefix + "/attn_w", src);
  check_group(group, w.dim(1));
  Graph g;
  ValueId in = g.input(expanded);
  ValueId attn = g.sigmoid(g.dense(in, g.input(w), g.input(store.weights(prefix + "/attn_b", src))));
  return g.value(attn).at(group - 1);
}

Tensor cluster_assign_eval(const Tensor& expanded, const ParamStore& store,
                           const std::string& prefix, std::size_t group,
                           const SoftDBoFConfig& cfg, WeightSource src) {
  check_group(group, cfg.groups);
  Graph g;
  ValueId in = g.input(expanded);
  ValueId scores = g.dense(in, g.input(store.weights(prefix + "/cluster_w", src)),
                           g.input(store.weights(prefix + "/cluster_b", src)));
  ValueId assign = g.softmax_rows(g.reshape(scores, {cfg.groups, cfg.clusters}));
  const Tensor& a = g.value(assign);
  Tensor out = Tensor::zeros({cfg.clusters});
  for (std::size_t k = 0; k < cfg.clusters; ++k) out.at(k) = a.at2(group - 1, k);
  return out;
}

Tensor aggregate_eval(const Tensor& features, const ParamStore& store, const std::string& prefix,
                      const SoftDBoFConfig& cfg, WeightSource src) {
  Graph g;
  SoftDBoFParamIds p = use_softdbof_params(g, store, prefix, src);
  return g.value(aggregate(g, g.input(features), p, cfg));
}

std::size_t softdbof_param_count(const SoftDBoFConfig& cfg) {
  const std::size_t n = cfg.input_dim, e = cfg.expanded_dim();
  const std::size_t gk = cfg.groups * cfg.clusters;
  return n * e + e          // expansion
         + e * cfg.groups + cfg.groups  // attention
         + e * gk + gk;     // cluster scores
}

std::size_t nextvlad_param_count(const SoftDBoFConfig& cfg) {
  const std::size_t e = cfg.expanded_dim();
  if (e % cfg.groups != 0) {
    throw ConfigError("nextvlad count: expanded dim must be divisible by groups");
  }
  return softdbof_param_count(cfg) + cfg.clusters * (e / cfg.groups);
}

}  // namespace vads
