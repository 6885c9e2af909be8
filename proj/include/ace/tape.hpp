#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ace/errors.hpp"
#include "ace/param_tree.hpp"

namespace ace::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

// Lightweight handle into a tape node. Vars from different tapes must not mix.
struct Var {
  Tape* tape = nullptr;
  std::int32_t id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode tape over dense matrices, rebuilt per forward pass. Nodes own
// their values; backward closures accumulate into parent adjoints.
//
// Construct with recording=false for inference: values flow, nothing is taped.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  Var leaf(Matrix value) {
    nodes_.push_back(Node{std::move(value), nullptr});
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  const Matrix& value(Var v) const { return node(v).value; }

  // Adjoint of v after backward(); zero matrix if the node was never reached.
  Matrix grad(Var v) const {
    const Node& n = node(v);
    if (grads_.empty() || grads_[static_cast<std::size_t>(v.id)].size() == 0)
      return Matrix::Zero(n.value.rows(), n.value.cols());
    return grads_[static_cast<std::size_t>(v.id)];
  }

  // Reverse sweep from a 1x1 output. Nodes were appended in topological
  // order, so a single backwards pass over the vector suffices.
  void backward(Var output) {
    if (!recording_) throw graph_error("backward on a non-recording tape");
    const Node& out = node(output);
    if (out.value.rows() != 1 || out.value.cols() != 1)
      throw graph_error("backward requires a scalar (1x1) output");
    grads_.assign(nodes_.size(), Matrix());
    grads_[static_cast<std::size_t>(output.id)] = Matrix::Constant(1, 1, 1.0);
    for (std::int32_t i = output.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.backward) continue;
      if (grads_[static_cast<std::size_t>(i)].size() == 0) continue;  // not on the path
      n.backward(*this, grads_[static_cast<std::size_t>(i)]);
    }
  }

  // --- used by op implementations ---

  using BackwardFn = std::function<void(Tape&, const Matrix& upstream)>;
  using BackwardSelfFn = std::function<void(Tape&, Var self, const Matrix& upstream)>;

  Var emit(Matrix value, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), recording_ ? std::move(backward) : nullptr});
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  // For ops whose backward reads the op's own output (tanh, softmax).
  Var emit_self(Matrix value, BackwardSelfFn backward) {
    nodes_.push_back(Node{std::move(value), nullptr});
    Var self{this, static_cast<std::int32_t>(nodes_.size() - 1)};
    if (recording_ && backward) {
      nodes_.back().backward = [self, fn = std::move(backward)](Tape& tp, const Matrix& up) {
        fn(tp, self, up);
      };
    }
    return self;
  }

  void accumulate(Var v, const Matrix& g) {
    Matrix& slot = grads_[static_cast<std::size_t>(v.id)];
    if (slot.size() == 0)
      slot = g;
    else
      slot += g;
  }

  void check_owns(Var v, const char* op) const {
    if (v.tape != this) throw graph_error(std::string(op) + ": var from a different tape");
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw graph_error(std::string(op) + ": var not recorded on this tape");
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    BackwardFn backward;
  };

  const Node& node(Var v) const {
    if (v.tape != this) throw graph_error("var belongs to a different tape");
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw graph_error("var not recorded on this tape");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  bool recording_;
  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
};

// ---------------------------------------------------------------------------
// Differentiable primitives. Free functions so expressions compose naturally.
// ---------------------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);        // elementwise
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add_rowvec(Var m, Var row);          // row broadcast over rows of m
Var leaky_relu(Var a, double slope);
Var gelu(Var a);
Var tanh_op(Var a);
Var softmax_rows(Var a);                 // softmax across each row
Var softmax_flat(Var a);                 // softmax across all entries
Var layer_norm_rows(Var a, Var gain, Var offset, double eps = 1e-5);
Var mean_rows(Var a);                    // 1 x C column means
Var sum_all(Var a);                      // 1 x 1
Var slice_cols(Var a, Eigen::Index first, Eigen::Index count);
Var concat_cols(const std::vector<Var>& parts);
Var square(Var a);

// Tape leaves for every entry of a ParamTree, keyed by name.
struct BoundParams {
  std::map<std::string, Var> vars;

  Var at(const std::string& name) const {
    auto it = vars.find(name);
    if (it == vars.end()) throw graph_error("BoundParams: no var named " + name);
    return it->second;
  }
};

BoundParams bind(Tape& tape, const ParamTree& params);

// Gradients of a previously-backwarded scalar w.r.t. every bound parameter.
// Structure mirrors the source tree exactly.
ParamTree grads_of(const Tape& tape, const BoundParams& bound, const ParamTree& params);

}  // namespace ace::ad
