// SPDX-License-Identifier: Apache-2.0
#include "lusifer/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lusifer {

namespace {

// C (m,n) += A (m,k) * B (k,n)
void matmul_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    const double* arow = a + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA (m,k) += G (m,n) * B^T; dB (k,n) += A^T * G (both optional)
void matmul_backward(const double* a, const double* b, const double* g,
                     double* da, double* db, int m, int k, int n) {
  if (da) {
    for (int i = 0; i < m; ++i) {
      const double* grow = g + static_cast<std::size_t>(i) * n;
      double* darow = da + static_cast<std::size_t>(i) * k;
      for (int kk = 0; kk < k; ++kk) {
        const double* brow = b + static_cast<std::size_t>(kk) * n;
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
        darow[kk] += s;
      }
    }
  }
  if (db) {
    for (int i = 0; i < m; ++i) {
      const double* arow = a + static_cast<std::size_t>(i) * k;
      const double* grow = g + static_cast<std::size_t>(i) * n;
      for (int kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        if (av == 0.0) continue;
        double* dbrow = db + static_cast<std::size_t>(kk) * n;
        for (int j = 0; j < n; ++j) dbrow[j] += av * grow[j];
      }
    }
  }
}

// Split shape at `axis` into (outer, n, inner).
void axis_split(const std::vector<int>& shape, int axis, std::size_t& outer,
                int& n, std::size_t& inner) {
  if (axis < 0 || axis >= static_cast<int>(shape.size())) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_to_string(shape));
  }
  outer = 1;
  inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(shape[static_cast<std::size_t>(i)]);
  n = shape[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) {
    inner *= static_cast<std::size_t>(shape[i]);
  }
}

}  // namespace

VarId Tape::alloc(Tensor value, std::initializer_list<VarId> parents, const char* op) {
  check_finite(value, op);
  Node n;
  n.value = std::move(value);
  for (VarId p : parents) {
    if (nodes_[static_cast<std::size_t>(p)].needs_grad) {
      n.needs_grad = true;
      break;
    }
  }
  nodes_.push_back(std::move(n));
  return static_cast<VarId>(nodes_.size() - 1);
}

VarId Tape::constant(Tensor value) { return alloc(std::move(value), {}, "constant"); }

VarId Tape::leaf(const Tensor& value, Tensor* grad_sink) {
  check_finite(value, "leaf");
  Node n;
  n.value = value;
  n.needs_grad = grad_sink != nullptr;
  n.sink = grad_sink;
  nodes_.push_back(std::move(n));
  return static_cast<VarId>(nodes_.size() - 1);
}

double Tape::scalar_value(VarId id) const {
  const Tensor& t = val(id);
  if (t.numel() != 1) throw ShapeError("scalar_value on tensor " + t.shape_str());
  return t.data[0];
}

Tensor& Tape::grad_buffer(VarId id) {
  Node& n = node(id);
  if (!n.grad_alloc) {
    n.grad = Tensor::zeros(n.value.shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

void Tape::backward(VarId root) {
  if (backward_done_) throw ShapeError("backward called twice on one tape");
  backward_done_ = true;
  if (val(root).numel() != 1) {
    throw ShapeError("backward root must be scalar, got " + val(root).shape_str());
  }
  grad_buffer(root).data[0] = 1.0;
  for (VarId i = root; i >= 0; --i) {
    Node& n = node(i);
    if (!n.grad_alloc) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.sink) {
      if (!n.sink->same_shape(n.grad)) {
        *n.sink = Tensor::zeros(n.grad.shape);
      }
      for (std::size_t j = 0; j < n.grad.data.size(); ++j) {
        n.sink->data[j] += n.grad.data[j];
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  backward_done_ = false;
}

VarId Tape::add(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) {
    throw ShapeError("add shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
  VarId id = alloc(std::move(out), {a, b}, "add");
  if (wants_grad(id)) {
    node(id).backward = [a, b](Tape& t, const Tensor& g) {
      for (VarId p : {a, b}) {
        if (!t.wants_grad(p)) continue;
        Tensor& gp = t.grad_buffer(p);
        for (std::size_t i = 0; i < g.data.size(); ++i) gp.data[i] += g.data[i];
      }
    };
  }
  return id;
}

VarId Tape::add_bias(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (tb.rank() != 1 || ta.rank() < 1 || ta.shape.back() != tb.dim(0)) {
    throw ShapeError("add_bias shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  const int d = tb.dim(0);
  const std::size_t rows = ta.numel() / static_cast<std::size_t>(d == 0 ? 1 : d);
  Tensor out = ta;
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = out.data.data() + r * static_cast<std::size_t>(d);
    for (int j = 0; j < d; ++j) orow[j] += tb.data[static_cast<std::size_t>(j)];
  }
  VarId id = alloc(std::move(out), {a, b}, "add_bias");
  if (wants_grad(id)) {
    node(id).backward = [a, b, d, rows](Tape& t, const Tensor& g) {
      if (t.wants_grad(a)) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
      }
      if (t.wants_grad(b)) {
        Tensor& gb = t.grad_buffer(b);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* grow = g.data.data() + r * static_cast<std::size_t>(d);
          for (int j = 0; j < d; ++j) gb.data[static_cast<std::size_t>(j)] += grow[j];
        }
      }
    };
  }
  return id;
}

VarId Tape::mul(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb)) {
    throw ShapeError("mul shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  VarId id = alloc(std::move(out), {a, b}, "mul");
  if (wants_grad(id)) {
    node(id).backward = [a, b](Tape& t, const Tensor& g) {
      if (t.wants_grad(a)) {
        Tensor& ga = t.grad_buffer(a);
        const Tensor& vb = t.val(b);
        for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i] * vb.data[i];
      }
      if (t.wants_grad(b)) {
        Tensor& gb = t.grad_buffer(b);
        const Tensor& va = t.val(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) gb.data[i] += g.data[i] * va.data[i];
      }
    };
  }
  return id;
}

VarId Tape::scale(VarId a, double c) {
  Tensor out = val(a);
  for (auto& x : out.data) x *= c;
  VarId id = alloc(std::move(out), {a}, "scale");
  if (wants_grad(id)) {
    node(id).backward = [a, c](Tape& t, const Tensor& g) {
      if (!t.wants_grad(a)) return;
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += c * g.data[i];
    };
  }
  return id;
}

VarId Tape::add_const(VarId a, const Tensor& c) {
  const Tensor& ta = val(a);
  if (!ta.same_shape(c)) {
    throw ShapeError("add_const shape mismatch " + ta.shape_str() + " vs " + c.shape_str());
  }
  Tensor out = ta;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += c.data[i];
  VarId id = alloc(std::move(out), {a}, "add_const");
  if (wants_grad(id)) {
    node(id).backward = [a](Tape& t, const Tensor& g) {
      if (!t.wants_grad(a)) return;
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    };
  }
  return id;
}

VarId Tape::matmul(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() < 2 || tb.rank() != 2) {
    throw ShapeError("matmul expects (...,k) x (k,n), got " + ta.shape_str() + " x " + tb.shape_str());
  }
  const int k = ta.shape.back();
  if (k != tb.dim(0)) {
    throw ShapeError("matmul inner dimension mismatch " + ta.shape_str() + " x " + tb.shape_str());
  }
  const int n = tb.dim(1);
  const int m = static_cast<int>(ta.numel() / static_cast<std::size_t>(k == 0 ? 1 : k));
  std::vector<int> out_shape(ta.shape.begin(), ta.shape.end() - 1);
  out_shape.push_back(n);
  Tensor out = Tensor::zeros(out_shape);
  if (k > 0) matmul_acc(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  VarId id = alloc(std::move(out), {a, b}, "matmul");
  if (wants_grad(id)) {
    node(id).backward = [a, b, m, k, n](Tape& t, const Tensor& g) {
      const Tensor& va = t.val(a);
      const Tensor& vb = t.val(b);
      double* da = t.wants_grad(a) ? t.grad_buffer(a).data.data() : nullptr;
      double* db = t.wants_grad(b) ? t.grad_buffer(b).data.data() : nullptr;
      if (k > 0 && (da || db)) {
        matmul_backward(va.data.data(), vb.data.data(), g.data.data(), da, db, m, k, n);
      }
    };
  }
  return id;
}

VarId Tape::bmm(VarId a, VarId b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != 3 || tb.rank() != 3 || ta.dim(0) != tb.dim(0) || ta.dim(2) != tb.dim(1)) {
    throw ShapeError("bmm expects (N,p,q) x (N,q,r), got " + ta.shape_str() + " x " + tb.shape_str());
  }
  const int nb = ta.dim(0), p = ta.dim(1), q = ta.dim(2), r = tb.dim(2);
  Tensor out = Tensor::zeros({nb, p, r});
  for (int i = 0; i < nb; ++i) {
    matmul_acc(ta.data.data() + static_cast<std::size_t>(i) * p * q,
               tb.data.data() + static_cast<std::size_t>(i) * q * r,
               out.data.data() + static_cast<std::size_t>(i) * p * r, p, q, r);
  }
  VarId id = alloc(std::move(out), {a, b}, "bmm");
  if (wants_grad(id)) {
    node(id).backward = [a, b, nb, p, q, r](Tape& t, const Tensor& g) {
      const Tensor& va = t.val(a);
      const Tensor& vb = t.val(b);
      double* da = t.wants_grad(a) ? t.grad_buffer(a).data.data() : nullptr;
      double* db = t.wants_grad(b) ? t.grad_buffer(b).data.data() : nullptr;
      if (!da && !db) return;
      for (int i = 0; i < nb; ++i) {
        matmul_backward(va.data.data() + static_cast<std::size_t>(i) * p * q,
                        vb.data.data() + static_cast<std::size_t>(i) * q * r,
                        g.data.data() + static_cast<std::size_t>(i) * p * r,
                        da ? da + static_cast<std::size_t>(i) * p * q : nullptr,
                        db ? db + static_cast<std::size_t>(i) * q * r : nullptr, p, q, r);
      }
    };
  }
  return id;
}

namespace {

Tensor transpose_last_impl(const Tensor& t) {
  if (t.rank() == 2) {
    const int m = t.dim(0), n = t.dim(1);
    Tensor out = Tensor::zeros({n, m});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.at2(j, i) = t.at2(i, j);
    return out;
  }
  if (t.rank() == 3) {
    const int nb = t.dim(0), m = t.dim(1), n = t.dim(2);
    Tensor out = Tensor::zeros({nb, n, m});
    for (int b = 0; b < nb; ++b)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at3(b, j, i) = t.at3(b, i, j);
    return out;
  }
  throw ShapeError("transpose_last needs rank 2 or 3, got " + t.shape_str());
}

}  // namespace

VarId Tape::transpose_last(VarId a) {
  Tensor out = transpose_last_impl(val(a));
  VarId id = alloc(std::move(out), {a}, "transpose_last");
  if (wants_grad(id)) {
    node(id).backward = [a](Tape& t, const Tensor& g) {
      if (!t.wants_grad(a)) return;
      Tensor gt = transpose_last_impl(g);
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < gt.data.size(); ++i) ga.data[i] += gt.data[i];
    };
  }
  return id;
}

VarId Tape::reshape(VarId a, std::vector<int> shape) {
  const Tensor& ta = val(a);
  if (numel_of(shape) != ta.numel()) {
    throw ShapeError("reshape " + ta.shape_str() + " -> " + shape_to_string(shape));
  }
  Tensor out;
  out.shape = std::move(shape);
  out.data = ta.data;
  VarId id = alloc(std::move(out), {a}, "reshape");
  if (wants_grad(id)) {
    node(id).backward = [a](Tape& t, const Tensor& g) {
      if (!t.wants_grad(a)) return;
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.data.size(); ++i) ga.data[i] += g.data[i];
    };
  }
  return id;
}

VarId Tape::concat(VarId a, VarId b, int axis) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (ta.rank() != tb.rank()) {
    throw ShapeError("concat rank mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  }
  for (int i = 0; i < ta.rank(); ++i) {
    if (i != axis && ta.dim(i) != tb.dim(i)) {
      throw ShapeError("concat shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
  }
  std::size_t outer, inner;
  int na, nb2;
  axis_split(ta.shape, axis, outer, na, inner);
  {
    std::size_t o2, i2;
    axis_split(tb.shape, axis, o2, nb2, i2);
  }
  std::vector<int> out_shape = ta.shape;
  out_shape[static_cast<std::size_t>(axis)] = na + nb2;
  Tensor out = Tensor::zeros(out_shape);
  const std::size_t sa = static_cast<std::size_t>(na) * inner;
  const std::size_t sb = static_cast<std::size_t>(nb2) * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(ta.data.data() + o * sa, sa, out.data.data() + o * (sa + sb));
    std::copy_n(tb.data.data() + o * sb, sb, out.data.data() + o * (sa + sb) + sa);
  }
  VarId id = alloc(std::move(out), {a, b}, "concat");
  if (wants_grad(id)) {
    node(id).backward = [a, b, outer, sa, sb](Tape& t, const Tensor& g) {
      if (t.wants_grad(a)) {
        Tensor& ga = t.grad_buffer(a);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < sa; ++i) ga.data[o * sa + i] += g.data[o * (sa + sb) + i];
      }
      if (t.wants_grad(b)) {
        Tensor& gb = t.grad_buffer(b);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < sb; ++i)
            gb.data[o * sb + i] += g.data[o * (sa + sb) + sa + i];
      }
    };
  }
  return id;
}

VarId Tape::slice(VarId a, int axis, int start, int len) {
  const Tensor& ta = val(a);
  std::size_t outer, inner;
  int n;
  axis_split(ta.shape, axis, outer, n, inner);
  if (start < 0 || len < 0 || start + len > n) {
    throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") out of range for axis size " + std::to_string(n));
  }
  std::vector<int> out_shape = ta.shape;
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tensor out = Tensor::zeros(out_shape);
  const std::size_t src_stride = static_cast<std::size_t>(n) * inner;
  const std::size_t dst_stride = static_cast<std::size_t>(len) * inner;
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(ta.data.data() + o * src_stride + static_cast<std::size_t>(start) * inner,
                dst_stride, out.data.data() + o * dst_stride);
  }
  VarId id = alloc(std::move(out), {a}, "slice");
  if (wants_grad(id)) {
    node(id).backward = [a, outer, inner, start, src_stride, dst_stride](Tape& t, const Tensor& g) {
      if (!t.wants_grad(a)) return;
      Tensor& ga = t.grad_buffer(a);
      for (std::size_t o = 0; o < outer; ++o) {
        double* dst = ga.data.data() + o * src_stride + static_cast<std::size_t>(start) * inner;
        const double* src = g.data.data() + o * dst_stride;
        for (std::size_t i = 0; i < dst_stride; ++i) dst[i] += src[i];
      }
    };
  }
  return id;
}

VarId Tape::embedding(VarId table, const std::vector<std::int32_t>& ids,
                      std::vector<int> id_shape) {
  const Tensor& tt = val(table);
  if (tt.rank() != 2) throw ShapeError("embedding table must be rank 2, got " + tt.shape_str());
  if (numel_of(id_shape) != ids.size()) {
    throw ShapeError("embedding id count mismatch with shape " + shape_to_string(id_shape));
  }
  const int v = tt.dim(0), d = tt.dim(1);
  for (std::int32_t idx : ids) {
    if (idx < 0 || idx >= v) {
      throw DataError("token id " + std::to_string(idx) + " out of vocabulary range [0," +
                      std::to_string(v) + ")");
    }
  }
  std::vector<int> out_shape = std::move(id_shape);
  out_shape.push_back(d);
  Tensor out = Tensor::zeros(out_shape);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tt.data.data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data.data() + i * static_cast<std::size_t>(d));
  }
  VarId id = alloc(std::move(out), {table}, "embedding");
  if (wants_grad(id)) {
    node(id).backward = [table, ids, d](Tape& t, const Tensor& g) {
      if (!t.wants_grad(table)) return;
      Tensor& gt = t.grad_buffer(table);
      for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = gt.data.data() + static_cast<std::size_t>(ids[i]) * d;
        const double* src = g.data.data() + i * static_cast<std::size_t>(d);
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return id;
}

VarId Tape::tile_rows(VarId v, int batch) {
  const Tensor& tv = val(v);
  if (tv.rank() != 1) throw ShapeError("tile_rows expects rank-1, got " + tv.shape_str());
  const int d = tv.dim(0);
  Tensor out = Tensor::zeros({batch, 1, d});
  for (int b = 0; b < batch; ++b) {
    std::copy_n(tv.data.data(), d, out.data.data() + static_cast<std::size_t>(b) * d);
  }
  VarId id = alloc(std::move(out), {v}, "tile_rows");
  if (wants_grad(id)) {
    node(id).backward = [v, batch, d](Tape& t, const Tensor& g) {
      if (!t.wants_grad(v)) return;
      Tensor& gv = t.grad_buffer(v);
      for (int b = 0; b < batch; ++b) {
        const double* src = g.data.data() + static_cast<std::size_t>(b) * d;
        for (int j = 0; j < d; ++j) gv.data[static_cast<std::size_t>(j)] += src[j];
      }
    };
  }
  return id;
}

VarId Tape::gelu(VarId a) {
  const Tensor& ta = val(a);
  Tensor out = ta;
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (auto& x : out.data) x = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  VarId id = alloc(std::move(out), {a}, "gelu");
  if (wants_grad(id)) {
    node(id).backward = [a](Tape& t, const Tensor& g) {
      if (!t.wants_grad(a)) return;
      Tensor& ga = t.grad_buffer(a);
      const Tensor& va = t.val(a);
      constexpr double inv_sqrt2 = 0.7071067811865475244;
      const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        const double x = va.data[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
        ga.data[i] += g.data[i] * (cdf + x * pdf);
      }
    };
  }
  return id;
}

VarId Tape::layer_norm(VarId x, VarId gamma, VarId beta, double eps) {
  const Tensor& tx = val(x);
  const Tensor& tg = val(gamma);
  const Tensor& tb = val(beta);
  if (tx.rank() < 1 || tg.rank() != 1 || tb.rank() != 1 ||
      tx.shape.back() != tg.dim(0) || tg.dim(0) != tb.dim(0)) {
    throw ShapeError("layer_norm shape mismatch " + tx.shape_str() + " / " + tg.shape_str());
  }
  const int d = tg.dim(0);
  const std::size_t rows = tx.numel() / static_cast<std::size_t>(d);
  Tensor out = Tensor::zeros(tx.shape);
  std::vector<double> mean(rows), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = tx.data.data() + r * static_cast<std::size_t>(d);
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += xr[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = xr[j] - mu;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    inv_std[r] = inv;
    double* orow = out.data.data() + r * static_cast<std::size_t>(d);
    for (int j = 0; j < d; ++j) {
      orow[j] = tg.data[static_cast<std::size_t>(j)] * (xr[j] - mu) * inv +
                tb.data[static_cast<std::size_t>(j)];
    }
  }
  VarId id = alloc(std::move(out), {x, gamma, beta}, "layer_norm");
  if (wants_grad(id)) {
    node(id).backward = [x, gamma, beta, d, rows, mean = std::move(mean),
                         inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
      const Tensor& vx = t.val(x);
      const Tensor& vg = t.val(gamma);
      Tensor* gx = t.wants_grad(x) ? &t.grad_buffer(x) : nullptr;
      Tensor* gg = t.wants_grad(gamma) ? &t.grad_buffer(gamma) : nullptr;
      Tensor* gb = t.wants_grad(beta) ? &t.grad_buffer(beta) : nullptr;
      std::vector<double> xhat(static_cast<std::size_t>(d));
      std::vector<double> dxhat(static_cast<std::size_t>(d));
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = vx.data.data() + r * static_cast<std::size_t>(d);
        const double* gr = g.data.data() + r * static_cast<std::size_t>(d);
        const double inv = inv_std[r];
        for (int j = 0; j < d; ++j) xhat[static_cast<std::size_t>(j)] = (xr[j] - mean[r]) * inv;
        if (gg) {
          for (int j = 0; j < d; ++j)
            gg->data[static_cast<std::size_t>(j)] += gr[j] * xhat[static_cast<std::size_t>(j)];
        }
        if (gb) {
          for (int j = 0; j < d; ++j) gb->data[static_cast<std::size_t>(j)] += gr[j];
        }
        if (gx) {
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (int j = 0; j < d; ++j) {
            dxhat[static_cast<std::size_t>(j)] = gr[j] * vg.data[static_cast<std::size_t>(j)];
            sum_dxhat += dxhat[static_cast<std::size_t>(j)];
            sum_dxhat_xhat += dxhat[static_cast<std::size_t>(j)] * xhat[static_cast<std::size_t>(j)];
          }
          double* gxr = gx->data.data() + r * static_cast<std::size_t>(d);
          for (int j = 0; j < d; ++j) {
            gxr[j] += inv * (dxhat[static_cast<std::size_t>(j)] - sum_dxhat / d -
                             xhat[static_cast<std::size_t>(j)] * sum_dxhat_xhat / d);
          }
        }
      }
    };
  }
  return id;
}

VarId Tape::softmax(VarId x, int axis) {
  const Tensor& tx = val(x);
  std::size_t outer, inner;
  int n;
  axis_split(tx.shape, axis, outer, n, inner);
  Tensor out = Tensor::zeros(tx.shape);
  // max-subtraction for stability
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * static_cast<std::size_t>(n) * inner + in;
      double mx = -HUGE_VAL;
      for (int i = 0; i < n; ++i) mx = std::max(mx, tx.data[base + static_cast<std::size_t>(i) * inner]);
      double denom = 0.0;
      for (int i = 0; i < n; ++i) {
        double e = std::exp(tx.data[base + static_cast<std::size_t>(i) * inner] - mx);
        out.data[base + static_cast<std::size_t>(i) * inner] = e;
        denom += e;
      }
      for (int i = 0; i < n; ++i) out.data[base + static_cast<std::size_t>(i) * inner] /= denom;
    }
  }
  VarId id = alloc(std::move(out), {x}, "softmax");
  if (wants_grad(id)) {
    node(id).backward = [x, id, outer, n, inner](Tape& t, const Tensor& g) {
      if (!t.wants_grad(x)) return;
      Tensor& gx = t.grad_buffer(x);
      const Tensor& y = t.val(id);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          const std::size_t base = o * static_cast<std::size_t>(n) * inner + in;
          double dot = 0.0;
          for (int i = 0; i < n; ++i) {
            const std::size_t off = base + static_cast<std::size_t>(i) * inner;
            dot += g.data[off] * y.data[off];
          }
          for (int i = 0; i < n; ++i) {
            const std::size_t off = base + static_cast<std::size_t>(i) * inner;
            gx.data[off] += y.data[off] * (g.data[off] - dot);
          }
        }
      }
    };
  }
  return id;
}

VarId Tape::cross_entropy_mean(VarId logits, const std::vector<std::int32_t>& targets,
                               const std::vector<std::uint8_t>& include) {
  const Tensor& tl = val(logits);
  if (tl.rank() != 2) throw ShapeError("cross_entropy expects (N,V) logits, got " + tl.shape_str());
  const int n = tl.dim(0), v = tl.dim(1);
  if (targets.size() != static_cast<std::size_t>(n) || include.size() != static_cast<std::size_t>(n)) {
    throw ShapeError("cross_entropy target/include length mismatch");
  }
  std::size_t count = 0;
  for (int i = 0; i < n; ++i) {
    if (!include[static_cast<std::size_t>(i)]) continue;
    ++count;
    const std::int32_t tgt = targets[static_cast<std::size_t>(i)];
    if (tgt < 0 || tgt >= v) {
      throw DataError("cross_entropy target " + std::to_string(tgt) + " out of range [0," +
                      std::to_string(v) + ")");
    }
  }
  if (count == 0) throw DataError("cross_entropy: all positions ignored, mean undefined");
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!include[static_cast<std::size_t>(i)]) continue;
    const double* row = tl.data.data() + static_cast<std::size_t>(i) * v;
    double mx = -HUGE_VAL;
    for (int j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
    const double lse = mx + std::log(denom);
    loss += lse - row[targets[static_cast<std::size_t>(i)]];
  }
  loss /= static_cast<double>(count);
  VarId id = alloc(Tensor::scalar(loss), {logits}, "cross_entropy");
  if (wants_grad(id)) {
    node(id).backward = [logits, targets, include, n, v, count](Tape& t, const Tensor& g) {
      if (!t.wants_grad(logits)) return;
      Tensor& gl = t.grad_buffer(logits);
      const Tensor& vl = t.val(logits);
      const double go = g.data[0] / static_cast<double>(count);
      for (int i = 0; i < n; ++i) {
        if (!include[static_cast<std::size_t>(i)]) continue;
        const double* row = vl.data.data() + static_cast<std::size_t>(i) * v;
        double* grow = gl.data.data() + static_cast<std::size_t>(i) * v;
        double mx = -HUGE_VAL;
        for (int j = 0; j < v; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int j = 0; j < v; ++j) denom += std::exp(row[j] - mx);
        for (int j = 0; j < v; ++j) {
          double p = std::exp(row[j] - mx) / denom;
          grow[j] += go * (p - (j == targets[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
        }
      }
    };
  }
  return id;
}

VarId Tape::normalize_rows(VarId x) {
  const Tensor& tx = val(x);
  if (tx.rank() != 2) throw ShapeError("normalize_rows expects (N,d), got " + tx.shape_str());
  const int n = tx.dim(0), d = tx.dim(1);
  Tensor out = Tensor::zeros(tx.shape);
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double* row = tx.data.data() + static_cast<std::size_t>(i) * d;
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += row[j] * row[j];
    const double r = std::sqrt(s);
    if (r < 1e-300) throw NumericError("normalize_rows: zero-norm row");
    norms[static_cast<std::size_t>(i)] = r;
    double* orow = out.data.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) orow[j] = row[j] / r;
  }
  VarId id = alloc(std::move(out), {x}, "normalize_rows");
  if (wants_grad(id)) {
    node(id).backward = [x, id, n, d, norms = std::move(norms)](Tape& t, const Tensor& g) {
      if (!t.wants_grad(x)) return;
      Tensor& gx = t.grad_buffer(x);
      const Tensor& y = t.val(id);
      for (int i = 0; i < n; ++i) {
        const double* yrow = y.data.data() + static_cast<std::size_t>(i) * d;
        const double* grow = g.data.data() + static_cast<std::size_t>(i) * d;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += grow[j] * yrow[j];
        double* gxr = gx.data.data() + static_cast<std::size_t>(i) * d;
        const double inv = 1.0 / norms[static_cast<std::size_t>(i)];
        for (int j = 0; j < d; ++j) gxr[j] += (grow[j] - yrow[j] * dot) * inv;
      }
    };
  }
  return id;
}

VarId Tape::mean_pool_valid(VarId x, const std::vector<std::uint8_t>& valid) {
  const Tensor& tx = val(x);
  if (tx.rank() != 3) throw ShapeError("mean_pool_valid expects (B,L,d), got " + tx.shape_str());
  const int b = tx.dim(0), l = tx.dim(1), d = tx.dim(2);
  if (valid.size() != static_cast<std::size_t>(b) * static_cast<std::size_t>(l)) {
    throw ShapeError("mean_pool_valid mask length mismatch");
  }
  std::vector<int> counts(static_cast<std::size_t>(b), 0);
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < l; ++j) {
      if (valid[static_cast<std::size_t>(i) * l + j]) ++counts[static_cast<std::size_t>(i)];
    }
    if (counts[static_cast<std::size_t>(i)] == 0) {
      throw DataError("mean_pool_valid: row " + std::to_string(i) + " has no valid positions");
    }
  }
  Tensor out = Tensor::zeros({b, d});
  for (int i = 0; i < b; ++i) {
    double* orow = out.data.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < l; ++j) {
      if (!valid[static_cast<std::size_t>(i) * l + j]) continue;
      const double* xr = tx.data.data() + (static_cast<std::size_t>(i) * l + j) * d;
      for (int k = 0; k < d; ++k) orow[k] += xr[k];
    }
    for (int k = 0; k < d; ++k) orow[k] /= counts[static_cast<std::size_t>(i)];
  }
  VarId id = alloc(std::move(out), {x}, "mean_pool_valid");
  if (wants_grad(id)) {
    node(id).backward = [x, valid, b, l, d, counts = std::move(counts)](Tape& t, const Tensor& g) {
      if (!t.wants_grad(x)) return;
      Tensor& gx = t.grad_buffer(x);
      for (int i = 0; i < b; ++i) {
        const double* grow = g.data.data() + static_cast<std::size_t>(i) * d;
        const double inv = 1.0 / counts[static_cast<std::size_t>(i)];
        for (int j = 0; j < l; ++j) {
          if (!valid[static_cast<std::size_t>(i) * l + j]) continue;
          double* gxr = gx.data.data() + (static_cast<std::size_t>(i) * l + j) * d;
          for (int k = 0; k < d; ++k) gxr[k] += grow[k] * inv;
        }
      }
    };
  }
  return id;
}

VarId Tape::sum_all(VarId a) {
  const Tensor& ta = val(a);
  double s = 0.0;
  for (double x : ta.data) s += x;
  VarId id = alloc(Tensor::scalar(s), {a}, "sum_all");
  if (wants_grad(id)) {
    node(id).backward = [a](Tape& t, const Tensor& g) {
      if (!t.wants_grad(a)) return;
      Tensor& ga = t.grad_buffer(a);
      for (auto& x : ga.data) x += g.data[0];
    };
  }
  return id;
}

VarId Tape::mean_all(VarId a) {
  const Tensor& ta = val(a);
  if (ta.numel() == 0) throw ShapeError("mean_all of empty tensor");
  const double n = static_cast<double>(ta.numel());
  double s = 0.0;
  for (double x : ta.data) s += x;
  VarId id = alloc(Tensor::scalar(s / n), {a}, "mean_all");
  if (wants_grad(id)) {
    node(id).backward = [a, n](Tape& t, const Tensor& g) {
      if (!t.wants_grad(a)) return;
      Tensor& ga = t.grad_buffer(a);
      for (auto& x : ga.data) x += g.data[0] / n;
    };
  }
  return id;
}

}  // namespace lusifer
