#pragma once

#include <functional>
#include <random>
#include <vector>

#include "cfx/tensor.hpp"

namespace cfx {

// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over Tensors. Values are recorded in creation order,
// which is a topological order by construction; backward() walks it in
// reverse. A tape is single-owner: never share one across threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);

  const Tensor& val(Var v) const;
  // Gradient of the last backward() loss w.r.t. v. Throws if none was
  // accumulated (v unreachable from the loss or backward not run).
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const;
  bool requires_grad(Var v) const;

  // Snapshot of the tape extent, for bounded-memory inference loops:
  // bind parameters, mark, then forward/truncate per input.
  struct Mark {
    size_t slots = 0;
    size_t nodes = 0;
  };
  Mark mark() const { return {slots_.size(), nodes_.size()}; }
  void truncate(Mark m);

  size_t num_slots() const { return slots_.size(); }

  // Accumulates d(loss)/d(x) for every recorded value with requires_grad
  // reachable from loss. loss must be a single-element tensor.
  void backward(Var loss);

  // ---- arithmetic ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double c);
  Var add_rowvec(Var m, Var v);  // m: [r x c], v: [c], broadcast over rows
  Var matmul(Var a, Var b);      // [m x k] * [k x n]
  Var matmul_nt(Var a, Var b);   // [m x k] * [n x k]^T -> [m x n]
  Var matvec(Var m, Var v);      // [r x c] * [c] -> [r]
  Var dot(Var a, Var b);         // [k] . [k] -> [1]
  Var sum(Var a);                // all elements -> [1]

  // ---- nonlinearities ----
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var gelu(Var a);
  // Softmax over the last dimension, max-subtracted for stability.
  Var softmax_lastdim(Var a);
  // Row-wise normalization to zero mean / unit variance, then gain & shift.
  Var layer_norm(Var x, Var gain, Var shift, double eps = 1e-5);

  // ---- structure ----
  Var reshape(Var a, Shape s);
  Var gather_rows(Var m, std::vector<int> idx);
  Var slice_cols(Var m, int start, int len);
  Var concat_cols(const std::vector<Var>& parts);
  Var concat_rows(const std::vector<Var>& parts);
  // Sliding windows of `window` consecutive (zero-padded) rows, flattened:
  // [n x d] -> [n + pad_left + pad_right - window + 1, window * d].
  Var im2col_rows(Var m, int window, int pad_left, int pad_right);
  Var colwise_max(Var m);  // [r x c] -> [c], first max row wins ties
  // Inverted dropout; identity when rate == 0.
  Var dropout(Var a, double rate, std::mt19937_64& rng);

  // ---- fused heads ----
  // gamma * sum_j softmax(logits)_j * layers[j], all layers same shape.
  Var scalar_mix(const std::vector<Var>& layers, Var logits, Var gamma);
  // -log softmax(logits)[target] for a score vector, max-subtracted.
  Var softmax_xent(Var logits, int target);
  // Binary cross-entropy of one probability against a {0,1} label,
  // probability clamped to [1e-12, 1 - 1e-12] before the log.
  Var bce(Var prob, int label);

 private:
  struct Slot {
    Tensor value;
    Tensor grad;  // empty until backward touches it
    bool requires_grad = false;
  };
  struct Node {
    int out = -1;
    std::function<void()> back;
  };

  std::vector<Slot> slots_;
  std::vector<Node> nodes_;

  Var push(Tensor value, bool requires_grad);
  void record(int out, std::function<void()> back);
  const Tensor& v(int id) const { return slots_[static_cast<size_t>(id)].value; }
  bool rg(Var a) const { return slots_[static_cast<size_t>(a.id)].requires_grad; }
  // Gradient buffer for id, allocated as zeros on first use.
  Tensor& gbuf(int id);
  // Gradient of a node output; nullptr when nothing downstream accumulated.
  const Tensor* gout(int id) const;
  void check(Var a, const char* op) const;
};

}  // namespace cfx
