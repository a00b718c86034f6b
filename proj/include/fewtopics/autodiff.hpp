#pragma once

#include <functional>
#include <random>
#include <span>
#include <vector>

#include "fewtopics/common.hpp"

// Reverse-mode automatic differentiation over a tape of dense matrices.
// A Graph owns the nodes; creation order is a valid topological order, so
// one reverse sweep over the tape visits each node exactly once.

namespace fewtopics::ad {

class Graph;

struct Var {
  int index = -1;
  Graph* graph = nullptr;
  bool valid() const { return graph != nullptr && index >= 0; }
};

using BackwardFn = std::function<void(Graph&, int self)>;

class Graph {
 public:
  // Leaf that gradients are not tracked through (data, counts).
  Var constant(Matrix value);
  // Leaf that participates in backward (network weights, free priors).
  Var param(Matrix value);
  // Interior node; requires_grad is inherited from the parents.
  Var op(Matrix value, std::initializer_list<Var> parents, BackwardFn backward);

  const Matrix& value(Var v) const { return nodes_[check(v)].value; }
  Scalar scalar_value(Var v) const;

  // Gradient of the last backward() target w.r.t. v; zeros if v was unused.
  Matrix gradient(Var v) const;

  // Seeds a scalar loss node with 1 and sweeps the tape in reverse.
  void backward(Var loss);

  void accumulate(int index, const Matrix& contribution);
  bool requires_grad(int index) const { return nodes_[index].requires_grad; }
  bool has_grad(int index) const { return nodes_[index].grad.size() > 0; }
  const Matrix& raw_grad(int index) const { return nodes_[index].grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until touched by backward
    BackwardFn backward;
    bool requires_grad = false;
  };

  int check(Var v) const;
  std::vector<Node> nodes_;
};

enum class Activation { kIdentity, kRelu, kSoftplus };

// Elementwise; shapes must match exactly.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var div_elem(Var a, Var b);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var cadd(Var a, Scalar c);
Var cmul(Var a, Scalar c);
Var cwise_max(Var a, Scalar c);

// log(max(x, kEpsLog)); gradient is 1/x above the guard, 0 below it.
Var log_guarded(Var a);
Var relu(Var a);
Var softplus(Var a);

Var sum(Var a);                       // 1x1
Var row_sum(Var a);                   // R x 1
Var col_mean(Var a);                  // 1 x C
Var normalize_rows(Var a);            // rows scaled to sum 1 (caller guards zero rows)
Var concat_cols(Var a, Var b);        // R x (Ca + Cb)
Var broadcast_rows(Var a, int rows);  // 1 x C -> rows x C
Var add_row_vector(Var m, Var row);   // bias add, row is 1 x C

// Inverted dropout on every element; identity when not training.
// Pre: 0 <= rate < 1, otherwise a config error.
Var dropout(Var a, Scalar rate, bool training, std::mt19937_64& rng);

// activation(input * W + b); W is in x out, b is 1 x out.
Var dense_layer(Var input, Var W, Var b, Activation activation);

// Runs backward from loss (must be 1x1) and collects gradients for params,
// zeros for any parameter the loss does not depend on.
std::vector<Matrix> gradients(Var loss, std::span<const Var> params);

}  // namespace fewtopics::ad
