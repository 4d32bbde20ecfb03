#include "cfx/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cfx {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// C = A * B (+=).  A: m x k, B: k x n.  i-k-j order, streams rows of B.
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    if (!accumulate) std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
    const double* arow = a + static_cast<size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C = A * B^T (+=).  A: m x k, B: n x k.  Four accumulators keep the dot
// product vectorizable without reassociating a single chain.
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      int l = 0;
      for (; l + 4 <= k; l += 4) {
        s0 += arow[l] * brow[l];
        s1 += arow[l + 1] * brow[l + 1];
        s2 += arow[l + 2] * brow[l + 2];
        s3 += arow[l + 3] * brow[l + 3];
      }
      double s = (s0 + s1) + (s2 + s3);
      for (; l < k; ++l) s += arow[l] * brow[l];
      if (accumulate) {
        crow[j] += s;
      } else {
        crow[j] = s;
      }
    }
  }
}

// C += A^T * B.  A: m x k, B: m x n, C: k x n.
void gemm_tn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* brow = b + static_cast<size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = arow[l];
      double* crow = c + static_cast<size_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Var Tape::push(Tensor value, bool requires_grad) {
  slots_.push_back(Slot{std::move(value), Tensor{}, requires_grad});
  return Var{static_cast<int>(slots_.size()) - 1};
}

void Tape::record(int out, std::function<void()> back) {
  nodes_.push_back(Node{out, std::move(back)});
}

Var Tape::leaf(Tensor value, bool requires_grad) { return push(std::move(value), requires_grad); }

const Tensor& Tape::val(Var v) const {
  check(v, "val");
  return slots_[static_cast<size_t>(v.id)].value;
}

const Tensor& Tape::grad(Var v) const {
  check(v, "grad");
  const Tensor& g = slots_[static_cast<size_t>(v.id)].grad;
  if (g.data.empty()) throw InputError("no gradient accumulated for this value");
  return g;
}

bool Tape::has_grad(Var v) const {
  check(v, "has_grad");
  return !slots_[static_cast<size_t>(v.id)].grad.data.empty();
}

bool Tape::requires_grad(Var v) const {
  check(v, "requires_grad");
  return slots_[static_cast<size_t>(v.id)].requires_grad;
}

void Tape::truncate(Mark m) {
  if (m.slots > slots_.size() || m.nodes > nodes_.size()) {
    throw InputError("tape truncate mark is ahead of the tape");
  }
  slots_.resize(m.slots);
  nodes_.resize(m.nodes);
}

Tensor& Tape::gbuf(int id) {
  Slot& s = slots_[static_cast<size_t>(id)];
  if (s.grad.data.empty()) s.grad = Tensor::zeros(s.value.shape);
  return s.grad;
}

const Tensor* Tape::gout(int id) const {
  const Slot& s = slots_[static_cast<size_t>(id)];
  return s.grad.data.empty() ? nullptr : &s.grad;
}

void Tape::check(Var a, const char* op) const {
  if (!a.valid() || a.id >= static_cast<int>(slots_.size())) {
    throw InputError(std::string(op) + ": var is not on this tape");
  }
}

void Tape::backward(Var loss) {
  check(loss, "backward");
  if (v(loss.id).numel() != 1) {
    throw InputError("backward: loss must be a single element, got shape " +
                     shape_str(v(loss.id).shape));
  }
  for (Slot& s : slots_) s.grad = Tensor{};
  gbuf(loss.id).data[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (gout(it->out) != nullptr) it->back();
  }
}

// ---------------------------------------------------------------------------
// arithmetic

Var Tape::add(Var a, Var b) {
  check(a, "add");
  check(b, "add");
  check_same_shape(v(a.id), v(b.id), "add");
  Tensor out = v(a.id);
  const Tensor& bb = v(b.id);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += bb.data[i];
  Var o = push(std::move(out), rg(a) || rg(b));
  if (rg(a) || rg(b)) {
    record(o.id, [this, a = a.id, b = b.id, o = o.id] {
      const Tensor& g = *gout(o);
      if (slots_[a].requires_grad) {
        Tensor& ga = gbuf(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      }
      if (slots_[b].requires_grad) {
        Tensor& gb = gbuf(b);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i];
      }
    });
  }
  return o;
}

Var Tape::sub(Var a, Var b) {
  check(a, "sub");
  check(b, "sub");
  check_same_shape(v(a.id), v(b.id), "sub");
  Tensor out = v(a.id);
  const Tensor& bb = v(b.id);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bb.data[i];
  Var o = push(std::move(out), rg(a) || rg(b));
  if (rg(a) || rg(b)) {
    record(o.id, [this, a = a.id, b = b.id, o = o.id] {
      const Tensor& g = *gout(o);
      if (slots_[a].requires_grad) {
        Tensor& ga = gbuf(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      }
      if (slots_[b].requires_grad) {
        Tensor& gb = gbuf(b);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] -= g.data[i];
      }
    });
  }
  return o;
}

Var Tape::mul(Var a, Var b) {
  check(a, "mul");
  check(b, "mul");
  check_same_shape(v(a.id), v(b.id), "mul");
  Tensor out = v(a.id);
  const Tensor& bb = v(b.id);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bb.data[i];
  Var o = push(std::move(out), rg(a) || rg(b));
  if (rg(a) || rg(b)) {
    record(o.id, [this, a = a.id, b = b.id, o = o.id] {
      const Tensor& g = *gout(o);
      const Tensor& av = slots_[a].value;
      const Tensor& bv = slots_[b].value;
      if (slots_[a].requires_grad) {
        Tensor& ga = gbuf(a);
        for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
      }
      if (slots_[b].requires_grad) {
        Tensor& gb = gbuf(b);
        for (size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
      }
    });
  }
  return o;
}

Var Tape::scale(Var a, double c) {
  check(a, "scale");
  Tensor out = v(a.id);
  for (double& x : out.data) x *= c;
  Var o = push(std::move(out), rg(a));
  if (rg(a)) {
    record(o.id, [this, a = a.id, o = o.id, c] {
      const Tensor& g = *gout(o);
      Tensor& ga = gbuf(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += c * g.data[i];
    });
  }
  return o;
}

Var Tape::add_rowvec(Var m, Var vv) {
  check(m, "add_rowvec");
  check(vv, "add_rowvec");
  const Tensor& mv = v(m.id);
  const Tensor& rv = v(vv.id);
  if (mv.rank() != 2 || rv.rank() != 1 || mv.cols() != rv.shape[0]) {
    throw DimError("add_rowvec: shape " + shape_str(mv.shape) + " vs " + shape_str(rv.shape));
  }
  Tensor out = mv;
  const int r = mv.rows(), c = mv.cols();
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) out.data[static_cast<size_t>(i) * c + j] += rv.data[j];
  }
  Var o = push(std::move(out), rg(m) || rg(vv));
  if (rg(m) || rg(vv)) {
    record(o.id, [this, m = m.id, vv = vv.id, o = o.id, r, c] {
      const Tensor& g = *gout(o);
      if (slots_[m].requires_grad) {
        Tensor& gm = gbuf(m);
        for (size_t i = 0; i < g.data.size(); ++i) gm.data[i] += g.data[i];
      }
      if (slots_[vv].requires_grad) {
        Tensor& gv = gbuf(vv);
        for (int i = 0; i < r; ++i) {
          for (int j = 0; j < c; ++j) gv.data[j] += g.data[static_cast<size_t>(i) * c + j];
        }
      }
    });
  }
  return o;
}

Var Tape::matmul(Var a, Var b) {
  check(a, "matmul");
  check(b, "matmul");
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) {
    throw DimError("matmul: shape " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  }
  const int m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  gemm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n, false);
  Var o = push(std::move(out), rg(a) || rg(b));
  if (rg(a) || rg(b)) {
    record(o.id, [this, a = a.id, b = b.id, o = o.id, m, k, n] {
      const Tensor& g = *gout(o);
      if (slots_[a].requires_grad) {
        gemm_nt(g.data.data(), slots_[b].value.data.data(), gbuf(a).data.data(), m, n, k, true);
      }
      if (slots_[b].requires_grad) {
        gemm_tn_acc(slots_[a].value.data.data(), g.data.data(), gbuf(b).data.data(), m, k, n);
      }
    });
  }
  return o;
}

Var Tape::matmul_nt(Var a, Var b) {
  check(a, "matmul_nt");
  check(b, "matmul_nt");
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols()) {
    throw DimError("matmul_nt: shape " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  }
  const int m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  gemm_nt(av.data.data(), bv.data.data(), out.data.data(), m, k, n, false);
  Var o = push(std::move(out), rg(a) || rg(b));
  if (rg(a) || rg(b)) {
    record(o.id, [this, a = a.id, b = b.id, o = o.id, m, k, n] {
      const Tensor& g = *gout(o);  // m x n
      if (slots_[a].requires_grad) {
        gemm_nn(g.data.data(), slots_[b].value.data.data(), gbuf(a).data.data(), m, n, k, true);
      }
      if (slots_[b].requires_grad) {
        gemm_tn_acc(g.data.data(), slots_[a].value.data.data(), gbuf(b).data.data(), m, n, k);
      }
    });
  }
  return o;
}

Var Tape::matvec(Var m, Var x) {
  check(m, "matvec");
  check(x, "matvec");
  const Tensor& mv = v(m.id);
  const Tensor& xv = v(x.id);
  if (mv.rank() != 2 || xv.rank() != 1 || mv.cols() != xv.shape[0]) {
    throw DimError("matvec: shape " + shape_str(mv.shape) + " vs " + shape_str(xv.shape));
  }
  const int r = mv.rows(), c = mv.cols();
  Tensor out({r});
  for (int i = 0; i < r; ++i) {
    const double* row = mv.data.data() + static_cast<size_t>(i) * c;
    double s = 0;
    for (int j = 0; j < c; ++j) s += row[j] * xv.data[j];
    out.data[static_cast<size_t>(i)] = s;
  }
  Var o = push(std::move(out), rg(m) || rg(x));
  if (rg(m) || rg(x)) {
    record(o.id, [this, m = m.id, x = x.id, o = o.id, r, c] {
      const Tensor& g = *gout(o);
      const Tensor& mv2 = slots_[m].value;
      const Tensor& xv2 = slots_[x].value;
      if (slots_[m].requires_grad) {
        Tensor& gm = gbuf(m);
        for (int i = 0; i < r; ++i) {
          const double gi = g.data[static_cast<size_t>(i)];
          double* row = gm.data.data() + static_cast<size_t>(i) * c;
          for (int j = 0; j < c; ++j) row[j] += gi * xv2.data[j];
        }
      }
      if (slots_[x].requires_grad) {
        Tensor& gx = gbuf(x);
        for (int i = 0; i < r; ++i) {
          const double gi = g.data[static_cast<size_t>(i)];
          const double* row = mv2.data.data() + static_cast<size_t>(i) * c;
          for (int j = 0; j < c; ++j) gx.data[j] += gi * row[j];
        }
      }
    });
  }
  return o;
}

Var Tape::dot(Var a, Var b) {
  check(a, "dot");
  check(b, "dot");
  const Tensor& av = v(a.id);
  const Tensor& bv = v(b.id);
  if (av.rank() != 1 || bv.rank() != 1 || av.shape[0] != bv.shape[0]) {
    throw DimError("dot: shape " + shape_str(av.shape) + " vs " + shape_str(bv.shape));
  }
  double s = 0;
  for (size_t i = 0; i < av.data.size(); ++i) s += av.data[i] * bv.data[i];
  Var o = push(Tensor::scalar(s), rg(a) || rg(b));
  if (rg(a) || rg(b)) {
    record(o.id, [this, a = a.id, b = b.id, o = o.id] {
      const double g = gout(o)->data[0];
      const Tensor& av2 = slots_[a].value;
      const Tensor& bv2 = slots_[b].value;
      if (slots_[a].requires_grad) {
        Tensor& ga = gbuf(a);
        for (size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g * bv2.data[i];
      }
      if (slots_[b].requires_grad) {
        Tensor& gb = gbuf(b);
        for (size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g * av2.data[i];
      }
    });
  }
  return o;
}

Var Tape::sum(Var a) {
  check(a, "sum");
  double s = 0;
  for (double x : v(a.id).data) s += x;
  Var o = push(Tensor::scalar(s), rg(a));
  if (rg(a)) {
    record(o.id, [this, a = a.id, o = o.id] {
      const double g = gout(o)->data[0];
      Tensor& ga = gbuf(a);
      for (double& x : ga.data) x += g;
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// nonlinearities

Var Tape::tanh(Var a) {
  check(a, "tanh");
  Tensor out = v(a.id);
  for (double& x : out.data) x = std::tanh(x);
  Var o = push(std::move(out), rg(a));
  if (rg(a)) {
    record(o.id, [this, a = a.id, o = o.id] {
      const Tensor& g = *gout(o);
      const Tensor& y = slots_[o].value;
      Tensor& ga = gbuf(a);
      for (size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
      }
    });
  }
  return o;
}

Var Tape::sigmoid(Var a) {
  check(a, "sigmoid");
  Tensor out = v(a.id);
  for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
  Var o = push(std::move(out), rg(a));
  if (rg(a)) {
    record(o.id, [this, a = a.id, o = o.id] {
      const Tensor& g = *gout(o);
      const Tensor& y = slots_[o].value;
      Tensor& ga = gbuf(a);
      for (size_t i = 0; i < g.data.size(); ++i) {
        ga.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
      }
    });
  }
  return o;
}

Var Tape::gelu(Var a) {
  check(a, "gelu");
  Tensor out = v(a.id);
  for (double& x : out.data) x = x * 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  Var o = push(std::move(out), rg(a));
  if (rg(a)) {
    record(o.id, [this, a = a.id, o = o.id] {
      const Tensor& g = *gout(o);
      const Tensor& xv = slots_[a].value;
      Tensor& ga = gbuf(a);
      for (size_t i = 0; i < g.data.size(); ++i) {
        const double x = xv.data[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        ga.data[i] += g.data[i] * (cdf + x * pdf);
      }
    });
  }
  return o;
}

Var Tape::softmax_lastdim(Var a) {
  check(a, "softmax_lastdim");
  const Tensor& av = v(a.id);
  if (av.rank() < 1) throw DimError("softmax_lastdim: scalar input");
  const int last = av.shape.back();
  const size_t rows = av.data.size() / static_cast<size_t>(last);
  Tensor out = av;
  for (size_t r = 0; r < rows; ++r) {
    double* row = out.data.data() + r * static_cast<size_t>(last);
    double mx = row[0];
    for (int j = 1; j < last; ++j) mx = std::max(mx, row[j]);
    double denom = 0;
    for (int j = 0; j < last; ++j) {
      row[j] = std::exp(row[j] - mx);
      denom += row[j];
    }
    for (int j = 0; j < last; ++j) row[j] /= denom;
  }
  Var o = push(std::move(out), rg(a));
  if (rg(a)) {
    record(o.id, [this, a = a.id, o = o.id, last, rows] {
      const Tensor& g = *gout(o);
      const Tensor& y = slots_[o].value;
      Tensor& ga = gbuf(a);
      for (size_t r = 0; r < rows; ++r) {
        const double* grow = g.data.data() + r * static_cast<size_t>(last);
        const double* yrow = y.data.data() + r * static_cast<size_t>(last);
        double* garow = ga.data.data() + r * static_cast<size_t>(last);
        double dotgy = 0;
        for (int j = 0; j < last; ++j) dotgy += grow[j] * yrow[j];
        for (int j = 0; j < last; ++j) garow[j] += (grow[j] - dotgy) * yrow[j];
      }
    });
  }
  return o;
}

Var Tape::layer_norm(Var x, Var gain, Var shift, double eps) {
  check(x, "layer_norm");
  check(gain, "layer_norm");
  check(shift, "layer_norm");
  const Tensor& xv = v(x.id);
  const Tensor& gv = v(gain.id);
  const Tensor& sv = v(shift.id);
  if (xv.rank() != 2 || gv.rank() != 1 || sv.rank() != 1 || gv.shape[0] != xv.cols() ||
      sv.shape[0] != xv.cols()) {
    throw DimError("layer_norm: shape " + shape_str(xv.shape) + " with gain " +
                   shape_str(gv.shape) + ", shift " + shape_str(sv.shape));
  }
  const int r = xv.rows(), c = xv.cols();
  Tensor out({r, c});
  std::vector<double> mean(static_cast<size_t>(r)), inv_std(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const double* row = xv.data.data() + static_cast<size_t>(i) * c;
    double mu = 0;
    for (int j = 0; j < c; ++j) mu += row[j];
    mu /= c;
    double var = 0;
    for (int j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= c;
    const double inv = 1.0 / std::sqrt(var + eps);
    mean[static_cast<size_t>(i)] = mu;
    inv_std[static_cast<size_t>(i)] = inv;
    double* orow = out.data.data() + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) orow[j] = gv.data[j] * (row[j] - mu) * inv + sv.data[j];
  }
  Var o = push(std::move(out), rg(x) || rg(gain) || rg(shift));
  if (rg(x) || rg(gain) || rg(shift)) {
    record(o.id, [this, x = x.id, gain = gain.id, shift = shift.id, o = o.id, r, c,
                  mean = std::move(mean), inv_std = std::move(inv_std)] {
      const Tensor& g = *gout(o);
      const Tensor& xv2 = slots_[x].value;
      const Tensor& gv2 = slots_[gain].value;
      for (int i = 0; i < r; ++i) {
        const double* grow = g.data.data() + static_cast<size_t>(i) * c;
        const double* xrow = xv2.data.data() + static_cast<size_t>(i) * c;
        const double mu = mean[static_cast<size_t>(i)];
        const double inv = inv_std[static_cast<size_t>(i)];
        if (slots_[gain].requires_grad) {
          Tensor& gg = gbuf(gain);
          for (int j = 0; j < c; ++j) gg.data[j] += grow[j] * (xrow[j] - mu) * inv;
        }
        if (slots_[shift].requires_grad) {
          Tensor& gs = gbuf(shift);
          for (int j = 0; j < c; ++j) gs.data[j] += grow[j];
        }
        if (slots_[x].requires_grad) {
          Tensor& gx = gbuf(x);
          double* gxrow = gx.data.data() + static_cast<size_t>(i) * c;
          // dxhat = g * gain; then map through the normalization.
          double sum_dxhat = 0, sum_dxhat_xhat = 0;
          for (int j = 0; j < c; ++j) {
            const double dxh = grow[j] * gv2.data[j];
            const double xh = (xrow[j] - mu) * inv;
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh;
          }
          for (int j = 0; j < c; ++j) {
            const double dxh = grow[j] * gv2.data[j];
            const double xh = (xrow[j] - mu) * inv;
            gxrow[j] += inv * (dxh - sum_dxhat / c - xh * sum_dxhat_xhat / c);
          }
        }
      }
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// structure

Var Tape::reshape(Var a, Shape s) {
  check(a, "reshape");
  const Tensor& av = v(a.id);
  if (shape_numel(s) != av.numel()) {
    throw DimError("reshape: " + shape_str(av.shape) + " to " + shape_str(s));
  }
  Tensor out(std::move(s), av.data);
  Var o = push(std::move(out), rg(a));
  if (rg(a)) {
    record(o.id, [this, a = a.id, o = o.id] {
      const Tensor& g = *gout(o);
      Tensor& ga = gbuf(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    });
  }
  return o;
}

Var Tape::gather_rows(Var m, std::vector<int> idx) {
  check(m, "gather_rows");
  const Tensor& mv = v(m.id);
  if (mv.rank() != 2) throw DimError("gather_rows: need a matrix, got " + shape_str(mv.shape));
  const int r = mv.rows(), c = mv.cols();
  for (int i : idx) {
    if (i < 0 || i >= r) {
      throw InputError("gather_rows: row " + std::to_string(i) + " out of range [0, " +
                       std::to_string(r) + ")");
    }
  }
  Tensor out({static_cast<int>(idx.size()), c});
  for (size_t k = 0; k < idx.size(); ++k) {
    std::memcpy(out.data.data() + k * static_cast<size_t>(c),
                mv.data.data() + static_cast<size_t>(idx[k]) * c, sizeof(double) * c);
  }
  Var o = push(std::move(out), rg(m));
  if (rg(m)) {
    record(o.id, [this, m = m.id, o = o.id, idx = std::move(idx), c] {
      const Tensor& g = *gout(o);
      Tensor& gm = gbuf(m);
      for (size_t k = 0; k < idx.size(); ++k) {
        const double* grow = g.data.data() + k * static_cast<size_t>(c);
        double* mrow = gm.data.data() + static_cast<size_t>(idx[k]) * c;
        for (int j = 0; j < c; ++j) mrow[j] += grow[j];
      }
    });
  }
  return o;
}

Var Tape::slice_cols(Var m, int start, int len) {
  check(m, "slice_cols");
  const Tensor& mv = v(m.id);
  if (mv.rank() != 2 || start < 0 || len <= 0 || start + len > mv.cols()) {
    throw DimError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                   ") of " + shape_str(mv.shape));
  }
  const int r = mv.rows(), c = mv.cols();
  Tensor out({r, len});
  for (int i = 0; i < r; ++i) {
    std::memcpy(out.data.data() + static_cast<size_t>(i) * len,
                mv.data.data() + static_cast<size_t>(i) * c + start, sizeof(double) * len);
  }
  Var o = push(std::move(out), rg(m));
  if (rg(m)) {
    record(o.id, [this, m = m.id, o = o.id, start, len, r, c] {
      const Tensor& g = *gout(o);
      Tensor& gm = gbuf(m);
      for (int i = 0; i < r; ++i) {
        const double* grow = g.data.data() + static_cast<size_t>(i) * len;
        double* mrow = gm.data.data() + static_cast<size_t>(i) * c + start;
        for (int j = 0; j < len; ++j) mrow[j] += grow[j];
      }
    });
  }
  return o;
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("concat_cols: no parts");
  int r = -1, total = 0;
  bool need = false;
  for (Var p : parts) {
    check(p, "concat_cols");
    const Tensor& t = v(p.id);
    if (t.rank() != 2) throw DimError("concat_cols: need matrices, got " + shape_str(t.shape));
    if (r < 0) r = t.rows();
    if (t.rows() != r) {
      throw DimError("concat_cols: row mismatch " + std::to_string(r) + " vs " +
                     std::to_string(t.rows()));
    }
    total += t.cols();
    need = need || rg(p);
  }
  Tensor out({r, total});
  int off = 0;
  for (Var p : parts) {
    const Tensor& t = v(p.id);
    const int c = t.cols();
    for (int i = 0; i < r; ++i) {
      std::memcpy(out.data.data() + static_cast<size_t>(i) * total + off,
                  t.data.data() + static_cast<size_t>(i) * c, sizeof(double) * c);
    }
    off += c;
  }
  Var o = push(std::move(out), need);
  if (need) {
    std::vector<int> ids;
    for (Var p : parts) ids.push_back(p.id);
    record(o.id, [this, ids = std::move(ids), o = o.id, r, total] {
      const Tensor& g = *gout(o);
      int off2 = 0;
      for (int id : ids) {
        const int c = slots_[static_cast<size_t>(id)].value.cols();
        if (slots_[static_cast<size_t>(id)].requires_grad) {
          Tensor& gp = gbuf(id);
          for (int i = 0; i < r; ++i) {
            const double* grow = g.data.data() + static_cast<size_t>(i) * total + off2;
            double* prow = gp.data.data() + static_cast<size_t>(i) * c;
            for (int j = 0; j < c; ++j) prow[j] += grow[j];
          }
        }
        off2 += c;
      }
    });
  }
  return o;
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("concat_rows: no parts");
  int c = -1, total = 0;
  bool need = false;
  for (Var p : parts) {
    check(p, "concat_rows");
    const Tensor& t = v(p.id);
    if (t.rank() != 2) throw DimError("concat_rows: need matrices, got " + shape_str(t.shape));
    if (c < 0) c = t.cols();
    if (t.cols() != c) {
      throw DimError("concat_rows: col mismatch " + std::to_string(c) + " vs " +
                     std::to_string(t.cols()));
    }
    total += t.rows();
    need = need || rg(p);
  }
  Tensor out({total, c});
  int off = 0;
  for (Var p : parts) {
    const Tensor& t = v(p.id);
    std::memcpy(out.data.data() + static_cast<size_t>(off) * c, t.data.data(),
                sizeof(double) * t.data.size());
    off += t.rows();
  }
  Var o = push(std::move(out), need);
  if (need) {
    std::vector<int> ids;
    for (Var p : parts) ids.push_back(p.id);
    record(o.id, [this, ids = std::move(ids), o = o.id, c] {
      const Tensor& g = *gout(o);
      int off2 = 0;
      for (int id : ids) {
        const int r = slots_[static_cast<size_t>(id)].value.rows();
        if (slots_[static_cast<size_t>(id)].requires_grad) {
          Tensor& gp = gbuf(id);
          for (size_t i = 0; i < gp.data.size(); ++i) {
            gp.data[i] += g.data[static_cast<size_t>(off2) * c + i];
          }
        }
        off2 += r;
      }
    });
  }
  return o;
}

Var Tape::im2col_rows(Var m, int window, int pad_left, int pad_right) {
  check(m, "im2col_rows");
  const Tensor& mv = v(m.id);
  if (mv.rank() != 2 || window <= 0 || pad_left < 0 || pad_right < 0) {
    throw DimError("im2col_rows: bad arguments for shape " + shape_str(mv.shape));
  }
  const int n = mv.rows(), d = mv.cols();
  const int padded = n + pad_left + pad_right;
  const int positions = padded - window + 1;
  if (positions <= 0) {
    throw DimError("im2col_rows: window " + std::to_string(window) + " over " +
                   std::to_string(padded) + " padded rows");
  }
  Tensor out({positions, window * d});
  for (int p = 0; p < positions; ++p) {
    for (int t = 0; t < window; ++t) {
      const int src = p + t - pad_left;
      double* dst = out.data.data() + static_cast<size_t>(p) * (window * d) +
                    static_cast<size_t>(t) * d;
      if (src >= 0 && src < n) {
        std::memcpy(dst, mv.data.data() + static_cast<size_t>(src) * d, sizeof(double) * d);
      }
    }
  }
  Var o = push(std::move(out), rg(m));
  if (rg(m)) {
    record(o.id, [this, m = m.id, o = o.id, window, pad_left, positions, n, d] {
      const Tensor& g = *gout(o);
      Tensor& gm = gbuf(m);
      for (int p = 0; p < positions; ++p) {
        for (int t = 0; t < window; ++t) {
          const int src = p + t - pad_left;
          if (src < 0 || src >= n) continue;
          const double* grow = g.data.data() + static_cast<size_t>(p) * (window * d) +
                               static_cast<size_t>(t) * d;
          double* mrow = gm.data.data() + static_cast<size_t>(src) * d;
          for (int j = 0; j < d; ++j) mrow[j] += grow[j];
        }
      }
    });
  }
  return o;
}

Var Tape::colwise_max(Var m) {
  check(m, "colwise_max");
  const Tensor& mv = v(m.id);
  if (mv.rank() != 2) throw DimError("colwise_max: need a matrix, got " + shape_str(mv.shape));
  const int r = mv.rows(), c = mv.cols();
  Tensor out({c});
  std::vector<int> argmax(static_cast<size_t>(c), 0);
  for (int j = 0; j < c; ++j) {
    double best = mv.data[static_cast<size_t>(j)];
    int where = 0;
    for (int i = 1; i < r; ++i) {
      const double x = mv.data[static_cast<size_t>(i) * c + j];
      if (x > best) {
        best = x;
        where = i;
      }
    }
    out.data[static_cast<size_t>(j)] = best;
    argmax[static_cast<size_t>(j)] = where;
  }
  Var o = push(std::move(out), rg(m));
  if (rg(m)) {
    record(o.id, [this, m = m.id, o = o.id, argmax = std::move(argmax), c] {
      const Tensor& g = *gout(o);
      Tensor& gm = gbuf(m);
      for (int j = 0; j < c; ++j) {
        gm.data[static_cast<size_t>(argmax[static_cast<size_t>(j)]) * c + j] +=
            g.data[static_cast<size_t>(j)];
      }
    });
  }
  return o;
}

Var Tape::dropout(Var a, double rate, std::mt19937_64& rng) {
  check(a, "dropout");
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
  if (rate == 0.0) return a;
  const Tensor& av = v(a.id);
  std::bernoulli_distribution keep(1.0 - rate);
  const double inv_keep = 1.0 / (1.0 - rate);
  std::vector<double> mask(av.data.size());
  Tensor out = av;
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = keep(rng) ? inv_keep : 0.0;
    out.data[i] *= mask[i];
  }
  Var o = push(std::move(out), rg(a));
  if (rg(a)) {
    record(o.id, [this, a = a.id, o = o.id, mask = std::move(mask)] {
      const Tensor& g = *gout(o);
      Tensor& ga = gbuf(a);
      for (size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * mask[i];
    });
  }
  return o;
}

// ---------------------------------------------------------------------------
// fused heads

Var Tape::scalar_mix(const std::vector<Var>& layers, Var logits, Var gamma) {
  if (layers.empty()) throw InputError("scalar_mix: no layers");
  check(logits, "scalar_mix");
  check(gamma, "scalar_mix");
  const Tensor& lv = v(logits.id);
  const Tensor& gv = v(gamma.id);
  if (lv.rank() != 1 || lv.shape[0] != static_cast<int>(layers.size())) {
    throw DimError("scalar_mix: " + std::to_string(layers.size()) + " layers with logits " +
                   shape_str(lv.shape));
  }
  if (gv.numel() != 1) throw DimError("scalar_mix: gamma must be a scalar");
  bool need = rg(logits) || rg(gamma);
  for (Var l : layers) {
    check(l, "scalar_mix");
    check_same_shape(v(l.id), v(layers[0].id), "scalar_mix");
    need = need || rg(l);
  }
  const int k = static_cast<int>(layers.size());
  std::vector<double> w(static_cast<size_t>(k));
  double mx = lv.data[0];
  for (int j = 1; j < k; ++j) mx = std::max(mx, lv.data[static_cast<size_t>(j)]);
  double denom = 0;
  for (int j = 0; j < k; ++j) {
    w[static_cast<size_t>(j)] = std::exp(lv.data[static_cast<size_t>(j)] - mx);
    denom += w[static_cast<size_t>(j)];
  }
  for (double& x : w) x /= denom;
  const double gam = gv.data[0];
  Tensor out = Tensor::zeros(v(layers[0].id).shape);
  for (int j = 0; j < k; ++j) {
    const Tensor& lj = v(layers[j].id);
    const double c = gam * w[static_cast<size_t>(j)];
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += c * lj.data[i];
  }
  Var o = push(std::move(out), need);
  if (need) {
    std::vector<int> ids;
    for (Var l : layers) ids.push_back(l.id);
    record(o.id, [this, ids = std::move(ids), logits = logits.id, gamma = gamma.id, o = o.id,
                  w = std::move(w), gam] {
      const Tensor& g = *gout(o);
      const int k2 = static_cast<int>(ids.size());
      // c_j = <g, layer_j>
      std::vector<double> cj(static_cast<size_t>(k2), 0.0);
      for (int j = 0; j < k2; ++j) {
        const Tensor& lj = slots_[static_cast<size_t>(ids[j])].value;
        double s = 0;
        for (size_t i = 0; i < g.data.size(); ++i) s += g.data[i] * lj.data[i];
        cj[static_cast<size_t>(j)] = s;
      }
      double wc = 0;
      for (int j = 0; j < k2; ++j) wc += w[static_cast<size_t>(j)] * cj[static_cast<size_t>(j)];
      for (int j = 0; j < k2; ++j) {
        if (slots_[static_cast<size_t>(ids[j])].requires_grad) {
          Tensor& gl = gbuf(ids[j]);
          const double c = gam * w[static_cast<size_t>(j)];
          for (size_t i = 0; i < g.data.size(); ++i) gl.data[i] += c * g.data[i];
        }
      }
      if (slots_[static_cast<size_t>(logits)].requires_grad) {
        Tensor& glog = gbuf(logits);
        for (int j = 0; j < k2; ++j) {
          glog.data[static_cast<size_t>(j)] +=
              gam * w[static_cast<size_t>(j)] * (cj[static_cast<size_t>(j)] - wc);
        }
      }
      if (slots_[static_cast<size_t>(gamma)].requires_grad) gbuf(gamma).data[0] += wc;
    });
  }
  return o;
}

Var Tape::softmax_xent(Var logits, int target) {
  check(logits, "softmax_xent");
  const Tensor& lv = v(logits.id);
  if (lv.rank() != 1) throw DimError("softmax_xent: need a vector, got " + shape_str(lv.shape));
  const int n = lv.shape[0];
  if (target < 0 || target >= n) {
    throw InputError("softmax_xent: target " + std::to_string(target) + " out of range [0, " +
                     std::to_string(n) + ")");
  }
  double mx = lv.data[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, lv.data[static_cast<size_t>(j)]);
  double denom = 0;
  for (int j = 0; j < n; ++j) denom += std::exp(lv.data[static_cast<size_t>(j)] - mx);
  const double loss = std::log(denom) - (lv.data[static_cast<size_t>(target)] - mx);
  Var o = push(Tensor::scalar(loss), rg(logits));
  if (rg(logits)) {
    record(o.id, [this, logits = logits.id, o = o.id, target, n, mx, denom] {
      const double g = gout(o)->data[0];
      const Tensor& lv2 = slots_[static_cast<size_t>(logits)].value;
      Tensor& gl = gbuf(logits);
      for (int j = 0; j < n; ++j) {
        const double p = std::exp(lv2.data[static_cast<size_t>(j)] - mx) / denom;
        gl.data[static_cast<size_t>(j)] += g * (p - (j == target ? 1.0 : 0.0));
      }
    });
  }
  return o;
}

Var Tape::bce(Var prob, int label) {
  check(prob, "bce");
  const Tensor& pv = v(prob.id);
  if (pv.numel() != 1) throw DimError("bce: need a scalar probability, got " + shape_str(pv.shape));
  if (label != 0 && label != 1) {
    throw InputError("bce: label must be 0 or 1, got " + std::to_string(label));
  }
  constexpr double kEps = 1e-12;
  const double p = std::clamp(pv.data[0], kEps, 1.0 - kEps);
  const double loss = label == 1 ? -std::log(p) : -std::log(1.0 - p);
  Var o = push(Tensor::scalar(loss), rg(prob));
  if (rg(prob)) {
    const bool clamped = pv.data[0] < kEps || pv.data[0] > 1.0 - kEps;
    record(o.id, [this, prob = prob.id, o = o.id, label, p, clamped] {
      if (clamped) return;
      const double g = gout(o)->data[0];
      gbuf(prob).data[0] += g * (label == 1 ? -1.0 / p : 1.0 / (1.0 - p));
    });
  }
  return o;
}

}  // namespace cfx
