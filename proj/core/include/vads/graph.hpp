#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vads/tensor.hpp"

namespace vads {

using ValueId = std::size_t;

enum class Reduction { Mean, Sum };

/// Tape of primitive operations over tensors. Values are computed eagerly as
/// nodes are recorded; backward() then yields exact reverse-mode gradients
/// for every named parameter reachable from a scalar loss.
///
/// Recording is single-writer. A fully recorded graph is immutable apart
/// from further appends, and value()/backward() are safe to call from the
/// recording thread at any point.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(Graph&&) noexcept;
  Graph& operator=(Graph&&) noexcept;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf holding data that never receives a gradient (features, labels).
  ValueId input(Tensor value);

  /// Leaf marked as trainable; `name` keys the gradient map from backward().
  /// Names must be unique within a graph.
  ValueId parameter(const std::string& name, Tensor value);

  // -- primitives ----------------------------------------------------------
  /// a viewed as [rows, K] times b[K, N]; output keeps a's leading dims.
  ValueId matmul(ValueId a, ValueId b);
  ValueId add(ValueId a, ValueId b);
  /// x[*, N] + bias[N], broadcast over rows.
  ValueId add_bias(ValueId x, ValueId bias);
  ValueId mul(ValueId a, ValueId b);
  /// Scales row r of x (viewed as [R, N]) by s[r]; s must have R elements.
  ValueId row_scale(ValueId x, ValueId s);
  /// Sums x (viewed as [R, N]) over rows, producing [N].
  ValueId sum_rows(ValueId x);
  ValueId scale(ValueId x, double c);
  ValueId reshape(ValueId x, Shape shape);
  /// Concatenation of rank-1 tensors.
  ValueId concat(const std::vector<ValueId>& parts);
  /// out[j, :] = table[indices[j], :]. Indices must be < table rows.
  ValueId gather_rows(ValueId table, std::vector<std::uint32_t> indices);
  /// Arithmetic mean of scalar values.
  ValueId mean_of(const std::vector<ValueId>& scalars);

  // -- activations ---------------------------------------------------------
  ValueId relu(ValueId x);
  ValueId sigmoid(ValueId x);
  /// Row-wise softmax over the last dimension, max-subtracted for stability.
  ValueId softmax_rows(ValueId x);

  // -- layer ops -----------------------------------------------------------
  /// y = xW + b with x[*, N_in], W[N_in, N_out], b[N_out].
  ValueId dense(ValueId x, ValueId w, ValueId b);
  /// Same-length dilated 1-D convolution: x[T, C_in], kernel[k, C_in, C_out],
  /// zero padding of (k-1)*dilation/2 on each side. k must be odd.
  ValueId conv1d(ValueId x, ValueId kernel, int dilation);
  /// Training: zero each element with probability `rate`, scale survivors by
  /// 1/(1-rate), mask drawn deterministically from `seed`. Inference: identity.
  ValueId dropout(ValueId x, double rate, std::uint64_t seed, bool training);

  // -- losses --------------------------------------------------------------
  /// -[pos_weight*y*log(p) + (1-y)*log(1-p)] reduced over elements.
  /// p is clamped to [1e-7, 1 - 1e-7]; gradients are zero where clamped.
  ValueId bce_loss(ValueId p, ValueId y, Reduction red = Reduction::Mean,
                   double pos_weight = 1.0);
  /// -alpha_t * (1 - p_t)^gamma * log(p_t) with p_t = p where y = 1 else 1-p.
  ValueId focal_loss(ValueId p, ValueId y, double gamma = 2.0, double alpha = 0.25,
                     Reduction red = Reduction::Mean);

  const Tensor& value(ValueId id) const;

  /// Gradients of the scalar `loss` for every parameter in the graph.
  /// Disconnected parameters map to zero tensors of the parameter's shape.
  std::map<std::string, Tensor> backward(ValueId loss) const;

  std::size_t size() const;

 private:
  struct Impl;
  Impl* impl_;
};

}  // namespace vads
