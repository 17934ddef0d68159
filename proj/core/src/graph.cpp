#include "vads/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>

#include "vads/error.hpp"
#include "vads/rng.hpp"

namespace vads {

namespace {

constexpr double kProbEps = 1e-7;

enum class Op {
  Input,
  Parameter,
  MatMul,
  Add,
  AddBias,
  Mul,
  RowScale,
  SumRows,
  Scale,
  Reshape,
  Concat,
  GatherRows,
  MeanOf,
  Relu,
  Sigmoid,
  SoftmaxRows,
  Conv1d,
  Dropout,
  BceLoss,
  FocalLoss,
};

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

struct Graph::Impl {
  struct Node {
    Op op;
    std::vector<ValueId> inputs;
    bool requires_grad = false;
    std::string name;                    // Parameter
    int dilation = 1;                    // Conv1d
    double c0 = 0.0;                     // Scale factor / dropout rate / gamma
    double c1 = 0.0;                     // pos_weight / alpha
    Reduction red = Reduction::Mean;     // losses
    std::vector<std::uint32_t> indices;  // GatherRows
    std::vector<std::uint8_t> mask;      // Dropout keep mask
    std::vector<std::size_t> parts;      // Concat part lengths
  };

  // deque: references returned by value() stay valid while recording appends
  std::deque<Node> nodes;
  std::deque<Tensor> values;
  std::map<std::string, ValueId> param_ids;

  const Tensor& val(ValueId id) const { return values[id]; }

  ValueId push(Node n, Tensor out) {
    nodes.push_back(std::move(n));
    values.push_back(std::move(out));
    return nodes.size() - 1;
  }

  bool any_grad(const std::vector<ValueId>& ids) const {
    return std::any_of(ids.begin(), ids.end(),
                       [&](ValueId i) { return nodes[i].requires_grad; });
  }

  void check_id(ValueId id) const {
    if (id >= nodes.size()) throw ValidationError("graph: unknown tensor id");
  }
};

Graph::Graph() : impl_(new Impl) {}
Graph::~Graph() { delete impl_; }
Graph::Graph(Graph&& other) noexcept : impl_(other.impl_) { other.impl_ = nullptr; }
Graph& Graph::operator=(Graph&& other) noexcept {
  if (this != &other) {
    delete impl_;
    impl_ = other.impl_;
    other.impl_ = nullptr;
  }
  return *this;
}

std::size_t Graph::size() const { return impl_->nodes.size(); }

const Tensor& Graph::value(ValueId id) const {
  impl_->check_id(id);
  return impl_->values[id];
}

ValueId Graph::input(Tensor value) {
  Impl::Node n;
  n.op = Op::Input;
  return impl_->push(std::move(n), std::move(value));
}

ValueId Graph::parameter(const std::string& name, Tensor value) {
  if (impl_->param_ids.count(name)) {
    throw ValidationError("graph: duplicate parameter name '" + name + "'");
  }
  Impl::Node n;
  n.op = Op::Parameter;
  n.name = name;
  n.requires_grad = true;
  ValueId id = impl_->push(std::move(n), std::move(value));
  impl_->param_ids[name] = id;
  return id;
}

ValueId Graph::matmul(ValueId a, ValueId b) {
  impl_->check_id(a);
  impl_->check_id(b);
  const Tensor& A = impl_->val(a);
  const Tensor& B = impl_->val(b);
  if (B.rank() != 2) {
    throw DimensionError("matmul: rhs must be rank-2, got " + shape_str(B.shape));
  }
  const std::size_t R = A.rows2d(), K = A.cols2d();
  if (K != B.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree, lhs " + shape_str(A.shape) +
                         " vs rhs " + shape_str(B.shape));
  }
  const std::size_t N = B.dim(1);
  Shape out_shape(A.shape.empty() ? Shape{N} : A.shape);
  if (!A.shape.empty()) out_shape.back() = N;
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t r = 0; r < R; ++r) {
    const double* arow = A.values.data() + r * K;
    double* orow = out.values.data() + r * N;
    for (std::size_t k = 0; k < K; ++k) {
      const double av = arow[k];
      const double* brow = B.values.data() + k * N;
      for (std::size_t nn = 0; nn < N; ++nn) orow[nn] += av * brow[nn];
    }
  }
  Impl::Node n;
  n.op = Op::MatMul;
  n.inputs = {a, b};
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::add(ValueId a, ValueId b) {
  const Tensor& A = impl_->val(a);
  const Tensor& B = impl_->val(b);
  if (!A.same_shape(B)) {
    throw DimensionError("add: shape mismatch " + shape_str(A.shape) + " vs " +
                         shape_str(B.shape));
  }
  Tensor out = A;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += B.values[i];
  Impl::Node n;
  n.op = Op::Add;
  n.inputs = {a, b};
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::add_bias(ValueId x, ValueId bias) {
  const Tensor& X = impl_->val(x);
  const Tensor& B = impl_->val(bias);
  const std::size_t N = X.cols2d();
  if (B.rank() != 1 || B.dim(0) != N) {
    throw DimensionError("add_bias: bias " + shape_str(B.shape) + " does not match columns of " +
                         shape_str(X.shape));
  }
  Tensor out = X;
  const std::size_t R = X.rows2d();
  for (std::size_t r = 0; r < R; ++r) {
    double* row = out.values.data() + r * N;
    for (std::size_t c = 0; c < N; ++c) row[c] += B.values[c];
  }
  Impl::Node n;
  n.op = Op::AddBias;
  n.inputs = {x, bias};
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::mul(ValueId a, ValueId b) {
  const Tensor& A = impl_->val(a);
  const Tensor& B = impl_->val(b);
  if (!A.same_shape(B)) {
    throw DimensionError("mul: shape mismatch " + shape_str(A.shape) + " vs " +
                         shape_str(B.shape));
  }
  Tensor out = A;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= B.values[i];
  Impl::Node n;
  n.op = Op::Mul;
  n.inputs = {a, b};
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::row_scale(ValueId x, ValueId s) {
  const Tensor& X = impl_->val(x);
  const Tensor& S = impl_->val(s);
  const std::size_t R = X.rows2d(), N = X.cols2d();
  if (S.numel() != R) {
    throw DimensionError("row_scale: scale has " + std::to_string(S.numel()) +
                         " elements for " + std::to_string(R) + " rows");
  }
  Tensor out = X;
  for (std::size_t r = 0; r < R; ++r) {
    double* row = out.values.data() + r * N;
    const double sv = S.values[r];
    for (std::size_t c = 0; c < N; ++c) row[c] *= sv;
  }
  Impl::Node n;
  n.op = Op::RowScale;
  n.inputs = {x, s};
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::sum_rows(ValueId x) {
  const Tensor& X = impl_->val(x);
  const std::size_t R = X.rows2d(), N = X.cols2d();
  Tensor out = Tensor::zeros({N});
  for (std::size_t r = 0; r < R; ++r) {
    const double* row = X.values.data() + r * N;
    for (std::size_t c = 0; c < N; ++c) out.values[c] += row[c];
  }
  Impl::Node n;
  n.op = Op::SumRows;
  n.inputs = {x};
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::scale(ValueId x, double c) {
  Tensor out = impl_->val(x);
  for (double& v : out.values) v *= c;
  Impl::Node n;
  n.op = Op::Scale;
  n.inputs = {x};
  n.c0 = c;
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::reshape(ValueId x, Shape shape) {
  const Tensor& X = impl_->val(x);
  if (shape_numel(shape) != X.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(X.shape) + " as " +
                         shape_str(shape));
  }
  Tensor out(shape, X.values);
  Impl::Node n;
  n.op = Op::Reshape;
  n.inputs = {x};
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::concat(const std::vector<ValueId>& idsin) {
  if (idsin.empty()) throw ValidationError("concat: empty list");
  std::vector<std::size_t> parts;
  std::size_t total = 0;
  for (ValueId id : idsin) {
    const Tensor& t = impl_->val(id);
    if (t.rank() != 1) {
      throw DimensionError("concat: expects rank-1 tensors, got " + shape_str(t.shape));
    }
    parts.push_back(t.numel());
    total += t.numel();
  }
  Tensor out = Tensor::zeros({total});
  std::size_t off = 0;
  for (ValueId id : idsin) {
    const Tensor& t = impl_->val(id);
    std::copy(t.values.begin(), t.values.end(), out.values.begin() + off);
    off += t.numel();
  }
  Impl::Node n;
  n.op = Op::Concat;
  n.inputs = idsin;
  n.parts = std::move(parts);
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::gather_rows(ValueId table, std::vector<std::uint32_t> indices) {
  const Tensor& T = impl_->val(table);
  if (T.rank() != 2) {
    throw DimensionError("gather_rows: table must be rank-2, got " + shape_str(T.shape));
  }
  const std::size_t V = T.dim(0), E = T.dim(1);
  for (std::uint32_t ix : indices) {
    if (ix >= V) {
      throw ValidationError("gather_rows: index " + std::to_string(ix) +
                            " out of range for table with " + std::to_string(V) + " rows");
    }
  }
  Tensor out = Tensor::zeros({indices.size(), E});
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const double* src = T.values.data() + static_cast<std::size_t>(indices[j]) * E;
    std::copy(src, src + E, out.values.data() + j * E);
  }
  Impl::Node n;
  n.op = Op::GatherRows;
  n.inputs = {table};
  n.indices = std::move(indices);
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::mean_of(const std::vector<ValueId>& scalars) {
  if (scalars.empty()) throw ValidationError("mean_of: empty list");
  double sum = 0.0;
  for (ValueId id : scalars) {
    const Tensor& t = impl_->val(id);
    if (t.numel() != 1) {
      throw DimensionError("mean_of: expects scalars, got " + shape_str(t.shape));
    }
    sum += t.values[0];
  }
  Impl::Node n;
  n.op = Op::MeanOf;
  n.inputs = scalars;
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), Tensor::scalar(sum / static_cast<double>(scalars.size())));
}

ValueId Graph::relu(ValueId x) {
  Tensor out = impl_->val(x);
  for (double& v : out.values) v = v > 0.0 ? v : 0.0;
  Impl::Node n;
  n.op = Op::Relu;
  n.inputs = {x};
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::sigmoid(ValueId x) {
  Tensor out = impl_->val(x);
  for (double& v : out.values) v = stable_sigmoid(v);
  Impl::Node n;
  n.op = Op::Sigmoid;
  n.inputs = {x};
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::softmax_rows(ValueId x) {
  const Tensor& X = impl_->val(x);
  const std::size_t R = X.rows2d(), N = X.cols2d();
  if (N == 0) throw DimensionError("softmax_rows: empty rows");
  Tensor out = X;
  for (std::size_t r = 0; r < R; ++r) {
    double* row = out.values.data() + r * N;
    double m = row[0];
    for (std::size_t c = 1; c < N; ++c) m = std::max(m, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < N; ++c) {
      row[c] = std::exp(row[c] - m);
      s += row[c];
    }
    for (std::size_t c = 0; c < N; ++c) row[c] /= s;
  }
  Impl::Node n;
  n.op = Op::SoftmaxRows;
  n.inputs = {x};
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::dense(ValueId x, ValueId w, ValueId b) {
  return add_bias(matmul(x, w), b);
}

ValueId Graph::conv1d(ValueId x, ValueId kernel, int dilation) {
  const Tensor& X = impl_->val(x);
  const Tensor& K = impl_->val(kernel);
  if (dilation < 1) {
    throw ConfigError("conv1d: dilation must be >= 1, got " + std::to_string(dilation));
  }
  if (X.rank() != 2 || K.rank() != 3) {
    throw DimensionError("conv1d: expects x[T, C_in] and kernel[k, C_in, C_out], got " +
                         shape_str(X.shape) + " and " + shape_str(K.shape));
  }
  const std::size_t k = K.dim(0);
  if (k % 2 == 0) {
    throw ConfigError("conv1d: kernel size must be odd, got " + std::to_string(k));
  }
  if (K.dim(1) != X.dim(1)) {
    throw DimensionError("conv1d: input channels disagree, x " + shape_str(X.shape) +
                         " vs kernel " + shape_str(K.shape));
  }
  const std::size_t T = X.dim(0), Cin = X.dim(1), Cout = K.dim(2);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  Tensor out = Tensor::zeros({T, Cout});
  for (std::size_t j = 0; j < k; ++j) {
    const std::ptrdiff_t off =
        (static_cast<std::ptrdiff_t>(j) - half) * static_cast<std::ptrdiff_t>(dilation);
    const double* ktap = K.values.data() + j * Cin * Cout;
    for (std::size_t t = 0; t < T; ++t) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + off;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
      const double* xrow = X.values.data() + static_cast<std::size_t>(src) * Cin;
      double* orow = out.values.data() + t * Cout;
      for (std::size_t c = 0; c < Cin; ++c) {
        const double xv = xrow[c];
        const double* krow = ktap + c * Cout;
        for (std::size_t o = 0; o < Cout; ++o) orow[o] += xv * krow[o];
      }
    }
  }
  Impl::Node n;
  n.op = Op::Conv1d;
  n.inputs = {x, kernel};
  n.dilation = dilation;
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::dropout(ValueId x, double rate, std::uint64_t seed, bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  const Tensor& X = impl_->val(x);
  Impl::Node n;
  n.op = Op::Dropout;
  n.inputs = {x};
  n.c0 = rate;
  n.requires_grad = impl_->any_grad(n.inputs);
  if (!training || rate == 0.0) {
    Tensor out = X;
    return impl_->push(std::move(n), std::move(out));
  }
  Rng rng(seed);
  Tensor out = X;
  n.mask.resize(X.numel());
  const double inv_keep = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < X.numel(); ++i) {
    const bool keep = rng.uniform() >= rate;
    n.mask[i] = keep ? 1 : 0;
    out.values[i] = keep ? out.values[i] * inv_keep : 0.0;
  }
  return impl_->push(std::move(n), std::move(out));
}

ValueId Graph::bce_loss(ValueId p, ValueId y, Reduction red, double pos_weight) {
  const Tensor& P = impl_->val(p);
  const Tensor& Y = impl_->val(y);
  if (!P.same_shape(Y)) {
    throw DimensionError("bce_loss: shape mismatch " + shape_str(P.shape) + " vs " +
                         shape_str(Y.shape));
  }
  if (P.numel() == 0) throw ValidationError("bce_loss: empty tensors");
  double total = 0.0;
  for (std::size_t i = 0; i < P.numel(); ++i) {
    const double ph = std::clamp(P.values[i], kProbEps, 1.0 - kProbEps);
    const double yv = Y.values[i];
    total -= pos_weight * yv * std::log(ph) + (1.0 - yv) * std::log(1.0 - ph);
  }
  if (red == Reduction::Mean) total /= static_cast<double>(P.numel());
  Impl::Node n;
  n.op = Op::BceLoss;
  n.inputs = {p, y};
  n.red = red;
  n.c1 = pos_weight;
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), Tensor::scalar(total));
}

ValueId Graph::focal_loss(ValueId p, ValueId y, double gamma, double alpha, Reduction red) {
  if (gamma < 0.0) throw ConfigError("focal_loss: gamma must be >= 0");
  if (alpha <= 0.0 || alpha >= 1.0) throw ConfigError("focal_loss: alpha must be in (0, 1)");
  const Tensor& P = impl_->val(p);
  const Tensor& Y = impl_->val(y);
  if (!P.same_shape(Y)) {
    throw DimensionError("focal_loss: shape mismatch " + shape_str(P.shape) + " vs " +
                         shape_str(Y.shape));
  }
  if (P.numel() == 0) throw ValidationError("focal_loss: empty tensors");
  double total = 0.0;
  for (std::size_t i = 0; i < P.numel(); ++i) {
    const double ph = std::clamp(P.values[i], kProbEps, 1.0 - kProbEps);
    const bool pos = Y.values[i] >= 0.5;
    const double pt = pos ? ph : 1.0 - ph;
    const double at = pos ? alpha : 1.0 - alpha;
    total -= at * std::pow(1.0 - pt, gamma) * std::log(pt);
  }
  if (red == Reduction::Mean) total /= static_cast<double>(P.numel());
  Impl::Node n;
  n.op = Op::FocalLoss;
  n.inputs = {p, y};
  n.red = red;
  n.c0 = gamma;
  n.c1 = alpha;
  n.requires_grad = impl_->any_grad(n.inputs);
  return impl_->push(std::move(n), Tensor::scalar(total));
}

std::map<std::string, Tensor> Graph::backward(ValueId loss) const {
  const Impl& im = *impl_;
  im.check_id(loss);
  if (im.values[loss].numel() != 1) {
    throw ValidationError("backward: loss must be scalar, got shape " +
                          shape_str(im.values[loss].shape));
  }

  std::vector<Tensor> grads(im.nodes.size());
  std::vector<char> has(im.nodes.size(), 0);
  auto buf = [&](ValueId id) -> Tensor& {
    if (!has[id]) {
      grads[id] = Tensor::zeros(im.values[id].shape);
      has[id] = 1;
    }
    return grads[id];
  };

  buf(loss).values[0] = 1.0;

  for (std::size_t idx = loss + 1; idx-- > 0;) {
    const Impl::Node& n = im.nodes[idx];
    if (!has[idx] || !n.requires_grad) continue;
    const Tensor& g = grads[idx];
    auto wants = [&](std::size_t slot) { return im.nodes[n.inputs[slot]].requires_grad; };

    switch (n.op) {
      case Op::Input:
      case Op::Parameter:
        break;
      case Op::MatMul: {
        const Tensor& A = im.values[n.inputs[0]];
        const Tensor& B = im.values[n.inputs[1]];
        const std::size_t R = A.rows2d(), K = A.cols2d(), N = B.dim(1);
        if (wants(0)) {
          Tensor& da = buf(n.inputs[0]);
          for (std::size_t r = 0; r < R; ++r) {
            const double* grow = g.values.data() + r * N;
            double* darow = da.values.data() + r * K;
            for (std::size_t k = 0; k < K; ++k) {
              const double* brow = B.values.data() + k * N;
              double acc = 0.0;
              for (std::size_t nn = 0; nn < N; ++nn) acc += grow[nn] * brow[nn];
              darow[k] += acc;
            }
          }
        }
        if (wants(1)) {
          Tensor& db = buf(n.inputs[1]);
          for (std::size_t r = 0; r < R; ++r) {
            const double* arow = A.values.data() + r * K;
            const double* grow = g.values.data() + r * N;
            for (std::size_t k = 0; k < K; ++k) {
              const double av = arow[k];
              double* dbrow = db.values.data() + k * N;
              for (std::size_t nn = 0; nn < N; ++nn) dbrow[nn] += av * grow[nn];
            }
          }
        }
        break;
      }
      case Op::Add: {
        for (int slot = 0; slot < 2; ++slot) {
          if (!wants(slot)) continue;
          Tensor& d = buf(n.inputs[slot]);
          for (std::size_t i = 0; i < g.numel(); ++i) d.values[i] += g.values[i];
        }
        break;
      }
      case Op::AddBias: {
        const std::size_t N = im.values[n.inputs[0]].cols2d();
        const std::size_t R = im.values[n.inputs[0]].rows2d();
        if (wants(0)) {
          Tensor& dx = buf(n.inputs[0]);
          for (std::size_t i = 0; i < g.numel(); ++i) dx.values[i] += g.values[i];
        }
        if (wants(1)) {
          Tensor& db = buf(n.inputs[1]);
          for (std::size_t r = 0; r < R; ++r) {
            const double* grow = g.values.data() + r * N;
            for (std::size_t c = 0; c < N; ++c) db.values[c] += grow[c];
          }
        }
        break;
      }
      case Op::Mul: {
        const Tensor& A = im.values[n.inputs[0]];
        const Tensor& B = im.values[n.inputs[1]];
        if (wants(0)) {
          Tensor& da = buf(n.inputs[0]);
          for (std::size_t i = 0; i < g.numel(); ++i) da.values[i] += g.values[i] * B.values[i];
        }
        if (wants(1)) {
          Tensor& db = buf(n.inputs[1]);
          for (std::size_t i = 0; i < g.numel(); ++i) db.values[i] += g.values[i] * A.values[i];
        }
        break;
      }
      case Op::RowScale: {
        const Tensor& X = im.values[n.inputs[0]];
        const Tensor& S = im.values[n.inputs[1]];
        const std::size_t R = X.rows2d(), N = X.cols2d();
        if (wants(0)) {
          Tensor& dx = buf(n.inputs[0]);
          for (std::size_t r = 0; r < R; ++r) {
            const double sv = S.values[r];
            const double* grow = g.values.data() + r * N;
            double* drow = dx.values.data() + r * N;
            for (std::size_t c = 0; c < N; ++c) drow[c] += grow[c] * sv;
          }
        }
        if (wants(1)) {
          Tensor& ds = buf(n.inputs[1]);
          for (std::size_t r = 0; r < R; ++r) {
            const double* grow = g.values.data() + r * N;
            const double* xrow = X.values.data() + r * N;
            double acc = 0.0;
            for (std::size_t c = 0; c < N; ++c) acc += grow[c] * xrow[c];
            ds.values[r] += acc;
          }
        }
        break;
      }
      case Op::SumRows: {
        if (!wants(0)) break;
        const Tensor& X = im.values[n.inputs[0]];
        const std::size_t R = X.rows2d(), N = X.cols2d();
        Tensor& dx = buf(n.inputs[0]);
        for (std::size_t r = 0; r < R; ++r) {
          double* drow = dx.values.data() + r * N;
          for (std::size_t c = 0; c < N; ++c) drow[c] += g.values[c];
        }
        break;
      }
      case Op::Scale: {
        if (!wants(0)) break;
        Tensor& dx = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) dx.values[i] += g.values[i] * n.c0;
        break;
      }
      case Op::Reshape: {
        if (!wants(0)) break;
        Tensor& dx = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) dx.values[i] += g.values[i];
        break;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (std::size_t slot = 0; slot < n.inputs.size(); ++slot) {
          if (wants(slot)) {
            Tensor& d = buf(n.inputs[slot]);
            for (std::size_t i = 0; i < n.parts[slot]; ++i) d.values[i] += g.values[off + i];
          }
          off += n.parts[slot];
        }
        break;
      }
      case Op::GatherRows: {
        if (!wants(0)) break;
        const std::size_t E = im.values[n.inputs[0]].dim(1);
        Tensor& dt = buf(n.inputs[0]);
        for (std::size_t j = 0; j < n.indices.size(); ++j) {
          double* drow = dt.values.data() + static_cast<std::size_t>(n.indices[j]) * E;
          const double* grow = g.values.data() + j * E;
          for (std::size_t c = 0; c < E; ++c) drow[c] += grow[c];
        }
        break;
      }
      case Op::MeanOf: {
        const double share = g.values[0] / static_cast<double>(n.inputs.size());
        for (std::size_t slot = 0; slot < n.inputs.size(); ++slot) {
          if (wants(slot)) buf(n.inputs[slot]).values[0] += share;
        }
        break;
      }
      case Op::Relu: {
        if (!wants(0)) break;
        const Tensor& X = im.values[n.inputs[0]];
        Tensor& dx = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          if (X.values[i] > 0.0) dx.values[i] += g.values[i];
        }
        break;
      }
      case Op::Sigmoid: {
        if (!wants(0)) break;
        const Tensor& S = im.values[idx];
        Tensor& dx = buf(n.inputs[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const double s = S.values[i];
          dx.values[i] += g.values[i] * s * (1.0 - s);
        }
        break;
      }
      case Op::SoftmaxRows: {
        if (!wants(0)) break;
        const Tensor& A = im.values[idx];
        const std::size_t R = A.rows2d(), N = A.cols2d();
        Tensor& dx = buf(n.inputs[0]);
        for (std::size_t r = 0; r < R; ++r) {
          const double* arow = A.values.data() + r * N;
          const double* grow = g.values.data() + r * N;
          double dot = 0.0;
          for (std::size_t c = 0; c < N; ++c) dot += arow[c] * grow[c];
          double* drow = dx.values.data() + r * N;
          for (std::size_t c = 0; c < N; ++c) drow[c] += arow[c] * (grow[c] - dot);
        }
        break;
      }
      case Op::Conv1d: {
        const Tensor& X = im.values[n.inputs[0]];
        const Tensor& K = im.values[n.inputs[1]];
        const std::size_t T = X.dim(0), Cin = X.dim(1);
        const std::size_t kk = K.dim(0), Cout = K.dim(2);
        const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(kk / 2);
        for (std::size_t j = 0; j < kk; ++j) {
          const std::ptrdiff_t off =
              (static_cast<std::ptrdiff_t>(j) - half) * static_cast<std::ptrdiff_t>(n.dilation);
          if (wants(0)) {
            Tensor& dx = buf(n.inputs[0]);
            const double* ktap = K.values.data() + j * Cin * Cout;
            for (std::size_t t = 0; t < T; ++t) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + off;
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
              const double* grow = g.values.data() + t * Cout;
              double* dxrow = dx.values.data() + static_cast<std::size_t>(src) * Cin;
              for (std::size_t c = 0; c < Cin; ++c) {
                const double* krow = ktap + c * Cout;
                double acc = 0.0;
                for (std::size_t o = 0; o < Cout; ++o) acc += krow[o] * grow[o];
                dxrow[c] += acc;
              }
            }
          }
          if (wants(1)) {
            Tensor& dk = buf(n.inputs[1]);
            double* dktap = dk.values.data() + j * Cin * Cout;
            for (std::size_t t = 0; t < T; ++t) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t) + off;
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
              const double* xrow = X.values.data() + static_cast<std::size_t>(src) * Cin;
              const double* grow = g.values.data() + t * Cout;
              for (std::size_t c = 0; c < Cin; ++c) {
                const double xv = xrow[c];
                double* dkrow = dktap + c * Cout;
                for (std::size_t o = 0; o < Cout; ++o) dkrow[o] += xv * grow[o];
              }
            }
          }
        }
        break;
      }
      case Op::Dropout: {
        if (!wants(0)) break;
        Tensor& dx = buf(n.inputs[0]);
        if (n.mask.empty()) {
          for (std::size_t i = 0; i < g.numel(); ++i) dx.values[i] += g.values[i];
        } else {
          const double inv_keep = 1.0 / (1.0 - n.c0);
          for (std::size_t i = 0; i < g.numel(); ++i) {
            if (n.mask[i]) dx.values[i] += g.values[i] * inv_keep;
          }
        }
        break;
      }
      case Op::BceLoss: {
        if (!wants(0)) break;
        const Tensor& P = im.values[n.inputs[0]];
        const Tensor& Y = im.values[n.inputs[1]];
        const double f =
            g.values[0] * (n.red == Reduction::Mean ? 1.0 / static_cast<double>(P.numel()) : 1.0);
        Tensor& dp = buf(n.inputs[0]);
        for (std::size_t i = 0; i < P.numel(); ++i) {
          const double pv = P.values[i];
          if (pv <= kProbEps || pv >= 1.0 - kProbEps) continue;  // clamped: zero grad
          const double yv = Y.values[i];
          dp.values[i] += f * (-n.c1 * yv / pv + (1.0 - yv) / (1.0 - pv));
        }
        break;
      }
      case Op::FocalLoss: {
        if (!wants(0)) break;
        const Tensor& P = im.values[n.inputs[0]];
        const Tensor& Y = im.values[n.inputs[1]];
        const double gamma = n.c0, alpha = n.c1;
        const double f =
            g.values[0] * (n.red == Reduction::Mean ? 1.0 / static_cast<double>(P.numel()) : 1.0);
        Tensor& dp = buf(n.inputs[0]);
        for (std::size_t i = 0; i < P.numel(); ++i) {
          const double pv = P.values[i];
          if (pv <= kProbEps || pv >= 1.0 - kProbEps) continue;
          const bool pos = Y.values[i] >= 0.5;
          const double pt = pos ? pv : 1.0 - pv;
          const double at = pos ? alpha : 1.0 - alpha;
          double dpt = -at * std::pow(1.0 - pt, gamma) / pt;
          if (gamma > 0.0) dpt += at * gamma * std::pow(1.0 - pt, gamma - 1.0) * std::log(pt);
          dp.values[i] += f * (pos ? dpt : -dpt);
        }
        break;
      }
    }
  }

  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : im.param_ids) {
    if (has[id]) {
      out.emplace(name, std::move(grads[id]));
    } else {
      out.emplace(name, Tensor::zeros(im.values[id].shape));
    }
  }
  return out;
}

}  // namespace vads
