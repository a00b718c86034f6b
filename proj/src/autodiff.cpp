#include "fewtopics/autodiff.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace fewtopics::ad {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_graph(Var a, Var b) {
  if (!a.graph || a.graph != b.graph)
    throw ContractError("operands belong to different graphs");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
}

}  // namespace

int Graph::check(Var v) const {
  if (v.graph != this || v.index < 0 || v.index >= size())
    throw ContractError("variable does not belong to this graph");
  return v.index;
}

Var Graph::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, false});
  return Var{size() - 1, this};
}

Var Graph::param(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr, true});
  return Var{size() - 1, this};
}

Var Graph::op(Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
  bool needs = false;
  for (Var p : parents) {
    check(p);
    needs = needs || nodes_[p.index].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : nullptr, needs});
  return Var{size() - 1, this};
}

Scalar Graph::scalar_value(Var v) const {
  const Matrix& m = value(v);
  if (m.rows() != 1 || m.cols() != 1)
    throw ContractError("expected a scalar node, got " + shape(m));
  return m(0, 0);
}

Matrix Graph::gradient(Var v) const {
  int i = check(v);
  if (nodes_[i].grad.size() > 0) return nodes_[i].grad;
  return Matrix::Zero(nodes_[i].value.rows(), nodes_[i].value.cols());
}

void Graph::accumulate(int index, const Matrix& contribution) {
  Node& n = nodes_[index];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = contribution;
  else
    n.grad += contribution;
}

void Graph::backward(Var loss) {
  int root = check(loss);
  const Matrix& lv = nodes_[root].value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ContractError("backward target must be a 1x1 scalar, got " + shape(lv));
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[root].grad = Matrix::Ones(1, 1);
  for (int i = root; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, i);
  }
}

std::vector<Matrix> gradients(Var loss, std::span<const Var> params) {
  Graph* g = loss.graph;
  if (!g) throw ContractError("loss variable is empty");
  g->backward(loss);
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (Var p : params) out.push_back(g->gradient(p));
  return out;
}

Var operator+(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph;
  require_same_shape(g.value(a), g.value(b), "add");
  Matrix v = g.value(a) + g.value(b);
  int ia = a.index, ib = b.index;
  return g.op(std::move(v), {a, b}, [ia, ib](Graph& g, int self) {
    g.accumulate(ia, g.raw_grad(self));
    g.accumulate(ib, g.raw_grad(self));
  });
}

Var operator-(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph;
  require_same_shape(g.value(a), g.value(b), "sub");
  Matrix v = g.value(a) - g.value(b);
  int ia = a.index, ib = b.index;
  return g.op(std::move(v), {a, b}, [ia, ib](Graph& g, int self) {
    g.accumulate(ia, g.raw_grad(self));
    g.accumulate(ib, -g.raw_grad(self));
  });
}

Var operator*(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph;
  require_same_shape(g.value(a), g.value(b), "mul");
  Matrix v = g.value(a).cwiseProduct(g.value(b));
  int ia = a.index, ib = b.index;
  return g.op(std::move(v), {a, b}, [ia, ib](Graph& g, int self) {
    g.accumulate(ia, g.raw_grad(self).cwiseProduct(g.value(Var{ib, &g})));
    g.accumulate(ib, g.raw_grad(self).cwiseProduct(g.value(Var{ia, &g})));
  });
}

Var div_elem(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph;
  require_same_shape(g.value(a), g.value(b), "div");
  Matrix v = g.value(a).cwiseQuotient(g.value(b));
  int ia = a.index, ib = b.index;
  return g.op(std::move(v), {a, b}, [ia, ib](Graph& g, int self) {
    const Matrix& bp = g.value(Var{ib, &g});
    const Matrix& y = g.value(Var{self, &g});
    g.accumulate(ia, g.raw_grad(self).cwiseQuotient(bp));
    g.accumulate(ib, -g.raw_grad(self).cwiseProduct(y).cwiseQuotient(bp));
  });
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph;
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: " + shape(av) + " * " + shape(bv));
  Matrix v = av * bv;
  int ia = a.index, ib = b.index;
  return g.op(std::move(v), {a, b}, [ia, ib](Graph& g, int self) {
    const Matrix& gr = g.raw_grad(self);
    g.accumulate(ia, gr * g.value(Var{ib, &g}).transpose());
    g.accumulate(ib, g.value(Var{ia, &g}).transpose() * gr);
  });
}

Var transpose(Var a) {
  Graph& g = *a.graph;
  Matrix v = g.value(a).transpose();
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia](Graph& g, int self) {
    g.accumulate(ia, g.raw_grad(self).transpose());
  });
}

Var cadd(Var a, Scalar c) {
  Graph& g = *a.graph;
  Matrix v = g.value(a).array() + c;
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia](Graph& g, int self) {
    g.accumulate(ia, g.raw_grad(self));
  });
}

Var cmul(Var a, Scalar c) {
  Graph& g = *a.graph;
  Matrix v = g.value(a) * c;
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia, c](Graph& g, int self) {
    g.accumulate(ia, g.raw_grad(self) * c);
  });
}

Var cwise_max(Var a, Scalar c) {
  Graph& g = *a.graph;
  Matrix v = g.value(a).cwiseMax(c);
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia, c](Graph& g, int self) {
    const Matrix& x = g.value(Var{ia, &g});
    Matrix m = (x.array() > c).cast<Scalar>();
    g.accumulate(ia, g.raw_grad(self).cwiseProduct(m));
  });
}

Var log_guarded(Var a) {
  Graph& g = *a.graph;
  Matrix v = g.value(a).cwiseMax(kEpsLog).array().log();
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia](Graph& g, int self) {
    const Matrix& x = g.value(Var{ia, &g});
    Matrix d = (x.array() > kEpsLog).cast<Scalar>() / x.cwiseMax(kEpsLog).array();
    g.accumulate(ia, g.raw_grad(self).cwiseProduct(d));
  });
}

Var relu(Var a) {
  Graph& g = *a.graph;
  Matrix v = g.value(a).cwiseMax(0.0);
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia](Graph& g, int self) {
    Matrix m = (g.value(Var{ia, &g}).array() > 0.0).cast<Scalar>();
    g.accumulate(ia, g.raw_grad(self).cwiseProduct(m));
  });
}

Var softplus(Var a) {
  Graph& g = *a.graph;
  // max(x,0) + log1p(exp(-|x|)) is exact and never overflows
  Matrix v = g.value(a).unaryExpr([](Scalar x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  });
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia](Graph& g, int self) {
    Matrix s = g.value(Var{ia, &g}).unaryExpr([](Scalar x) {
      Scalar t = std::exp(-std::abs(x));
      return x >= 0.0 ? 1.0 / (1.0 + t) : t / (1.0 + t);
    });
    g.accumulate(ia, g.raw_grad(self).cwiseProduct(s));
  });
}

Var sum(Var a) {
  Graph& g = *a.graph;
  Matrix v(1, 1);
  v(0, 0) = g.value(a).sum();
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia](Graph& g, int self) {
    const Matrix& x = g.value(Var{ia, &g});
    g.accumulate(ia, Matrix::Constant(x.rows(), x.cols(), g.raw_grad(self)(0, 0)));
  });
}

Var row_sum(Var a) {
  Graph& g = *a.graph;
  Matrix v = g.value(a).rowwise().sum();
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia](Graph& g, int self) {
    const Matrix& x = g.value(Var{ia, &g});
    g.accumulate(ia, g.raw_grad(self).replicate(1, x.cols()));
  });
}

Var col_mean(Var a) {
  Graph& g = *a.graph;
  const Matrix& x = g.value(a);
  if (x.rows() < 1) throw ContractError("col_mean on an empty matrix");
  Matrix v = x.colwise().mean();
  int ia = a.index;
  Scalar inv = 1.0 / static_cast<Scalar>(x.rows());
  return g.op(std::move(v), {a}, [ia, inv](Graph& g, int self) {
    const Matrix& x = g.value(Var{ia, &g});
    g.accumulate(ia, (g.raw_grad(self) * inv).replicate(x.rows(), 1));
  });
}

Var normalize_rows(Var a) {
  Graph& g = *a.graph;
  const Matrix& x = g.value(a);
  Vector s = x.rowwise().sum();
  Matrix v = x.array().colwise() / s.array();
  int ia = a.index;
  // y_ij = x_ij / s_i  =>  dx_ij = (g_ij - sum_j' g_ij' y_ij') / s_i
  return g.op(std::move(v), {a}, [ia, s = std::move(s)](Graph& g, int self) {
    const Matrix& gr = g.raw_grad(self);
    const Matrix& y = g.value(Var{self, &g});
    Vector dot = gr.cwiseProduct(y).rowwise().sum();
    Matrix d = (gr.array().colwise() - dot.array()).colwise() / s.array();
    g.accumulate(ia, d);
  });
}

Var concat_cols(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph;
  const Matrix& av = g.value(a);
  const Matrix& bv = g.value(b);
  if (av.rows() != bv.rows())
    throw DimensionError("concat_cols: " + shape(av) + " vs " + shape(bv));
  Matrix v(av.rows(), av.cols() + bv.cols());
  v.leftCols(av.cols()) = av;
  v.rightCols(bv.cols()) = bv;
  int ia = a.index, ib = b.index;
  long ca = av.cols(), cb = bv.cols();
  return g.op(std::move(v), {a, b}, [ia, ib, ca, cb](Graph& g, int self) {
    const Matrix& gr = g.raw_grad(self);
    g.accumulate(ia, gr.leftCols(ca));
    g.accumulate(ib, gr.rightCols(cb));
  });
}

Var broadcast_rows(Var a, int rows) {
  Graph& g = *a.graph;
  const Matrix& x = g.value(a);
  if (x.rows() != 1) throw DimensionError("broadcast_rows expects a 1xC row, got " + shape(x));
  if (rows < 1) throw ContractError("broadcast_rows: rows must be positive");
  Matrix v = x.replicate(rows, 1);
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia](Graph& g, int self) {
    g.accumulate(ia, g.raw_grad(self).colwise().sum());
  });
}

Var add_row_vector(Var m, Var row) {
  require_same_graph(m, row);
  Graph& g = *m.graph;
  const Matrix& mv = g.value(m);
  const Matrix& rv = g.value(row);
  if (rv.rows() != 1 || rv.cols() != mv.cols())
    throw DimensionError("add_row_vector: " + shape(mv) + " + " + shape(rv));
  Matrix v = mv.rowwise() + rv.row(0);
  int im = m.index, ir = row.index;
  return g.op(std::move(v), {m, row}, [im, ir](Graph& g, int self) {
    const Matrix& gr = g.raw_grad(self);
    g.accumulate(im, gr);
    g.accumulate(ir, gr.colwise().sum());
  });
}

Var dropout(Var a, Scalar rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  Graph& g = *a.graph;
  if (!training || rate == 0.0) return a;
  const Matrix& x = g.value(a);
  Matrix mask(x.rows(), x.cols());
  std::uniform_real_distribution<Scalar> u(0.0, 1.0);
  Scalar keep = 1.0 / (1.0 - rate);
  for (long i = 0; i < mask.rows(); ++i)
    for (long j = 0; j < mask.cols(); ++j) mask(i, j) = u(rng) < rate ? 0.0 : keep;
  Matrix v = x.cwiseProduct(mask);
  int ia = a.index;
  return g.op(std::move(v), {a}, [ia, mask = std::move(mask)](Graph& g, int self) {
    g.accumulate(ia, g.raw_grad(self).cwiseProduct(mask));
  });
}

Var dense_layer(Var input, Var W, Var b, Activation activation) {
  Graph& g = *input.graph;
  const Matrix& x = g.value(input);
  const Matrix& w = g.value(W);
  if (x.cols() != w.rows())
    throw DimensionError("dense_layer: input " + shape(x) + " vs weights " + shape(w));
  Var pre = add_row_vector(matmul(input, W), b);
  switch (activation) {
    case Activation::kIdentity: return pre;
    case Activation::kRelu: return relu(pre);
    case Activation::kSoftplus: return softplus(pre);
  }
  throw ContractError("unknown activation");
}

}  // namespace fewtopics::ad
