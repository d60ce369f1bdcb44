#pragma once

#include <cmath>
#include <limits>
#include <span>

#include "lrnmt/tape.hpp"

namespace lrnmt {

enum class Activation { identity, tanh, relu, sigmoid };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_name(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation: " + s);
}

namespace detail {

// C (n,m) = A (n,k) * B (k,m); row-major, j-contiguous inner loops.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::int64_t n, std::int64_t k,
             std::int64_t m, bool accumulate) {
  for (std::int64_t i = 0; i < n; ++i) {
    T* ci = c + i * m;
    if (!accumulate)
      for (std::int64_t j = 0; j < m; ++j) ci[j] = T(0);
    const T* ai = a + i * k;
    for (std::int64_t l = 0; l < k; ++l) {
      T av = ai[l];
      if (av == T(0)) continue;
      const T* bl = b + l * m;
      for (std::int64_t j = 0; j < m; ++j) ci[j] += av * bl[j];
    }
  }
}

// C (n,m) = A (n,k) * B^T, with B stored (m,k).
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::int64_t n, std::int64_t k,
             std::int64_t m, bool accumulate) {
  for (std::int64_t i = 0; i < n; ++i) {
    const T* ai = a + i * k;
    T* ci = c + i * m;
    for (std::int64_t j = 0; j < m; ++j) {
      const T* bj = b + j * k;
      T acc = T(0);
      for (std::int64_t l = 0; l < k; ++l) acc += ai[l] * bj[l];
      if (accumulate)
        ci[j] += acc;
      else
        ci[j] = acc;
    }
  }
}

// C (k,m) = A^T * B, with A stored (n,k), B stored (n,m).
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::int64_t n, std::int64_t k,
             std::int64_t m, bool accumulate) {
  if (!accumulate)
    for (std::int64_t i = 0; i < k * m; ++i) c[i] = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const T* ai = a + i * k;
    const T* bi = b + i * m;
    for (std::int64_t l = 0; l < k; ++l) {
      T av = ai[l];
      if (av == T(0)) continue;
      T* cl = c + l * m;
      for (std::int64_t j = 0; j < m; ++j) cl[j] += av * bi[j];
    }
  }
}

template <typename T>
bool any_tracked(const Tape<T>& tape, std::initializer_list<const Tensor<T>*> ts) {
  if (!tape.recording()) return false;
  for (auto* t : ts)
    if (tape.tracked(*t)) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  std::int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor<T> out({n, m});
  detail::gemm_nn(a.data(), b.data(), out.data(), n, k, m, false);
  if (detail::any_tracked(tape, {&a, &b})) {
    int ia = tape.node_of(a), ib = tape.node_of(b);
    tape.record(out, {ia, ib}, [a, b, ia, ib, n, k, m](Tape<T>& t, const std::vector<T>& dout) {
      if (ia >= 0) detail::gemm_nt(dout.data(), b.data(), t.grad_buf(ia).data(), n, m, k, true);
      if (ib >= 0) detail::gemm_tn(a.data(), dout.data(), t.grad_buf(ib).data(), n, k, m, true);
    });
  }
  return out;
}

// a (n,k) x b^T with b stored (m,k) -> (n,m). Used for tied projections and
// attention scores without materializing a transpose.
template <typename T>
Tensor<T> matmul_nt(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw DimensionError("matmul_nt: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  std::int64_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  Tensor<T> out({n, m});
  detail::gemm_nt(a.data(), b.data(), out.data(), n, k, m, false);
  if (detail::any_tracked(tape, {&a, &b})) {
    int ia = tape.node_of(a), ib = tape.node_of(b);
    tape.record(out, {ia, ib}, [a, b, ia, ib, n, k, m](Tape<T>& t, const std::vector<T>& dout) {
      // dA = dC * B ; dB = dC^T * A
      if (ia >= 0) detail::gemm_nn(dout.data(), b.data(), t.grad_buf(ia).data(), n, m, k, true);
      if (ib >= 0) detail::gemm_tn(dout.data(), a.data(), t.grad_buf(ib).data(), n, m, k, true);
    });
  }
  return out;
}

// Batched products over the leading dimension.
template <typename T>
Tensor<T> bmm(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  std::int64_t g = a.dim(0), n = a.dim(1), k = a.dim(2), m = b.dim(2);
  Tensor<T> out({g, n, m});
  for (std::int64_t i = 0; i < g; ++i)
    detail::gemm_nn(a.data() + i * n * k, b.data() + i * k * m, out.data() + i * n * m, n, k, m, false);
  if (detail::any_tracked(tape, {&a, &b})) {
    int ia = tape.node_of(a), ib = tape.node_of(b);
    tape.record(out, {ia, ib}, [a, b, ia, ib, g, n, k, m](Tape<T>& t, const std::vector<T>& dout) {
      for (std::int64_t i = 0; i < g; ++i) {
        const T* dc = dout.data() + i * n * m;
        if (ia >= 0)
          detail::gemm_nt(dc, b.data() + i * k * m, t.grad_buf(ia).data() + i * n * k, n, m, k, true);
        if (ib >= 0)
          detail::gemm_tn(a.data() + i * n * k, dc, t.grad_buf(ib).data() + i * k * m, n, k, m, true);
      }
    });
  }
  return out;
}

// a (g,n,k) x b^T per group with b stored (g,m,k) -> (g,n,m).
template <typename T>
Tensor<T> bmm_nt(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    throw DimensionError("bmm_nt: incompatible shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  std::int64_t g = a.dim(0), n = a.dim(1), k = a.dim(2), m = b.dim(1);
  Tensor<T> out({g, n, m});
  for (std::int64_t i = 0; i < g; ++i)
    detail::gemm_nt(a.data() + i * n * k, b.data() + i * m * k, out.data() + i * n * m, n, k, m, false);
  if (detail::any_tracked(tape, {&a, &b})) {
    int ia = tape.node_of(a), ib = tape.node_of(b);
    tape.record(out, {ia, ib}, [a, b, ia, ib, g, n, k, m](Tape<T>& t, const std::vector<T>& dout) {
      for (std::int64_t i = 0; i < g; ++i) {
        const T* dc = dout.data() + i * n * m;
        if (ia >= 0)
          detail::gemm_nn(dc, b.data() + i * m * k, t.grad_buf(ia).data() + i * n * k, n, m, k, true);
        if (ib >= 0)
          detail::gemm_tn(dc, a.data() + i * n * k, t.grad_buf(ib).data() + i * m * k, n, m, k, true);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise and broadcasting
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out(i) = a(i) + b(i);
  if (detail::any_tracked(tape, {&a, &b})) {
    int ia = tape.node_of(a), ib = tape.node_of(b);
    tape.record(out, {ia, ib}, [ia, ib](Tape<T>& t, const std::vector<T>& dout) {
      for (int id : {ia, ib}) {
        if (id < 0) continue;
        auto& g = t.grad_buf(id);
        for (std::size_t i = 0; i < dout.size(); ++i) g[i] += dout[i];
      }
    });
  }
  return out;
}

// x (..., m) + bias (m), broadcast over all leading dimensions.
template <typename T>
Tensor<T> add_bias(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias) {
  std::int64_t m = x.dim(x.rank() - 1);
  if (bias.rank() != 1 || bias.dim(0) != m)
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match trailing dim of " + shape_str(x.shape()));
  std::int64_t rows = x.size() / m;
  Tensor<T> out(x.shape());
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < m; ++j) out(r * m + j) = x(r * m + j) + bias(j);
  if (detail::any_tracked(tape, {&x, &bias})) {
    int ix = tape.node_of(x), ib = tape.node_of(bias);
    tape.record(out, {ix, ib}, [ix, ib, rows, m](Tape<T>& t, const std::vector<T>& dout) {
      if (ix >= 0) {
        auto& g = t.grad_buf(ix);
        for (std::size_t i = 0; i < dout.size(); ++i) g[i] += dout[i];
      }
      if (ib >= 0) {
        auto& g = t.grad_buf(ib);
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t j = 0; j < m; ++j) g[static_cast<std::size_t>(j)] += dout[static_cast<std::size_t>(r * m + j)];
      }
    });
  }
  return out;
}

// x (B,S,d) + p (S,d), broadcast over the batch dimension.
template <typename T>
Tensor<T> add_seq(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& p) {
  if (x.rank() != 3 || p.rank() != 2 || x.dim(1) != p.dim(0) || x.dim(2) != p.dim(1))
    throw DimensionError("add_seq: shapes " + shape_str(x.shape()) + " vs " +
                         shape_str(p.shape()));
  std::int64_t bsz = x.dim(0), tail = p.size();
  Tensor<T> out(x.shape());
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t i = 0; i < tail; ++i) out(b * tail + i) = x(b * tail + i) + p(i);
  if (detail::any_tracked(tape, {&x, &p})) {
    int ix = tape.node_of(x), ip = tape.node_of(p);
    tape.record(out, {ix, ip}, [ix, ip, bsz, tail](Tape<T>& t, const std::vector<T>& dout) {
      if (ix >= 0) {
        auto& g = t.grad_buf(ix);
        for (std::size_t i = 0; i < dout.size(); ++i) g[i] += dout[i];
      }
      if (ip >= 0) {
        auto& g = t.grad_buf(ip);
        for (std::int64_t b = 0; b < bsz; ++b)
          for (std::int64_t i = 0; i < tail; ++i) g[static_cast<std::size_t>(i)] += dout[static_cast<std::size_t>(b * tail + i)];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out(i) = a(i) * b(i);
  if (detail::any_tracked(tape, {&a, &b})) {
    int ia = tape.node_of(a), ib = tape.node_of(b);
    tape.record(out, {ia, ib}, [a, b, ia, ib](Tape<T>& t, const std::vector<T>& dout) {
      if (ia >= 0) {
        auto& g = t.grad_buf(ia);
        for (std::size_t i = 0; i < dout.size(); ++i) g[i] += dout[i] * b(static_cast<std::int64_t>(i));
      }
      if (ib >= 0) {
        auto& g = t.grad_buf(ib);
        for (std::size_t i = 0; i < dout.size(); ++i) g[i] += dout[i] * a(static_cast<std::int64_t>(i));
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T c) {
  Tensor<T> out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out(i) = x(i) * c;
  if (detail::any_tracked(tape, {&x})) {
    int ix = tape.node_of(x);
    tape.record(out, {ix}, [ix, c](Tape<T>& t, const std::vector<T>& dout) {
      auto& g = t.grad_buf(ix);
      for (std::size_t i = 0; i < dout.size(); ++i) g[i] += dout[i] * c;
    });
  }
  return out;
}

template <typename T>
Tensor<T> apply_activation(Tape<T>& tape, const Tensor<T>& x, Activation act) {
  if (act == Activation::identity) return x;
  Tensor<T> out(x.shape());
  switch (act) {
    case Activation::tanh:
      for (std::int64_t i = 0; i < x.size(); ++i) out(i) = std::tanh(x(i));
      break;
    case Activation::relu:
      for (std::int64_t i = 0; i < x.size(); ++i) out(i) = x(i) > T(0) ? x(i) : T(0);
      break;
    case Activation::sigmoid:
      for (std::int64_t i = 0; i < x.size(); ++i) out(i) = T(1) / (T(1) + std::exp(-x(i)));
      break;
    default:
      break;
  }
  if (detail::any_tracked(tape, {&x})) {
    int ix = tape.node_of(x);
    Tensor<T> y = out;  // shallow
    Tensor<T> xin = x;
    tape.record(out, {ix}, [ix, y, xin, act](Tape<T>& t, const std::vector<T>& dout) {
      auto& g = t.grad_buf(ix);
      switch (act) {
        case Activation::tanh:
          for (std::size_t i = 0; i < dout.size(); ++i) {
            T v = y(static_cast<std::int64_t>(i));
            g[i] += dout[i] * (T(1) - v * v);
          }
          break;
        case Activation::relu:
          for (std::size_t i = 0; i < dout.size(); ++i)
            if (xin(static_cast<std::int64_t>(i)) > T(0)) g[i] += dout[i];
          break;
        case Activation::sigmoid:
          for (std::size_t i = 0; i < dout.size(); ++i) {
            T v = y(static_cast<std::int64_t>(i));
            g[i] += dout[i] * v * (T(1) - v);
          }
          break;
        default:
          break;
      }
    });
  }
  return out;
}

// out = w[r]*fresh[r,:] + (1-w[r])*carry[r,:], row weights are constants.
// Used to carry recurrent state through padded timesteps.
template <typename T>
Tensor<T> mask_mix(Tape<T>& tape, const Tensor<T>& fresh, const Tensor<T>& carry,
                   std::vector<T> w) {
  if (fresh.shape() != carry.shape() || fresh.rank() != 2 ||
      static_cast<std::int64_t>(w.size()) != fresh.dim(0))
    throw DimensionError("mask_mix: shapes " + shape_str(fresh.shape()) + " vs " +
                         shape_str(carry.shape()));
  std::int64_t n = fresh.dim(0), m = fresh.dim(1);
  Tensor<T> out(fresh.shape());
  for (std::int64_t r = 0; r < n; ++r) {
    T a = w[static_cast<std::size_t>(r)];
    for (std::int64_t j = 0; j < m; ++j)
      out(r, j) = a * fresh(r, j) + (T(1) - a) * carry(r, j);
  }
  if (detail::any_tracked(tape, {&fresh, &carry})) {
    int ia = tape.node_of(fresh), ib = tape.node_of(carry);
    tape.record(out, {ia, ib}, [ia, ib, w = std::move(w), n, m](Tape<T>& t, const std::vector<T>& dout) {
      if (ia >= 0) {
        auto& g = t.grad_buf(ia);
        for (std::int64_t r = 0; r < n; ++r)
          for (std::int64_t j = 0; j < m; ++j)
            g[static_cast<std::size_t>(r * m + j)] += dout[static_cast<std::size_t>(r * m + j)] * w[static_cast<std::size_t>(r)];
      }
      if (ib >= 0) {
        auto& g = t.grad_buf(ib);
        for (std::int64_t r = 0; r < n; ++r)
          for (std::int64_t j = 0; j < m; ++j)
            g[static_cast<std::size_t>(r * m + j)] += dout[static_cast<std::size_t>(r * m + j)] * (T(1) - w[static_cast<std::size_t>(r)]);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
  Tensor<T> out = Tensor<T>::from_vector(std::move(shape),
                                         std::vector<T>(x.data(), x.data() + x.size()));
  if (detail::any_tracked(tape, {&x})) {
    int ix = tape.node_of(x);
    tape.record(out, {ix}, [ix](Tape<T>& t, const std::vector<T>& dout) {
      auto& g = t.grad_buf(ix);
      for (std::size_t i = 0; i < dout.size(); ++i) g[i] += dout[i];
    });
  }
  return out;
}

// Generic axis permutation for rank <= 4.
template <typename T>
Tensor<T> permute(Tape<T>& tape, const Tensor<T>& x, const std::vector<int>& perm) {
  int r = x.rank();
  if (static_cast<int>(perm.size()) != r || r > 4)
    throw DimensionError("permute: bad permutation for " + shape_str(x.shape()));
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = x.dim(perm[static_cast<std::size_t>(i)]);
  auto strides = [](const Shape& s) {
    Shape st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
      st[static_cast<std::size_t>(i)] = st[static_cast<std::size_t>(i + 1)] * s[static_cast<std::size_t>(i + 1)];
    return st;
  };
  Shape in_strides = strides(x.shape());
  Shape out_strides = strides(out_shape);
  auto apply = [r, perm](const T* src, T* dst, const Shape& oshape, const Shape& ostrides,
                         const Shape& istrides, bool accumulate) {
    std::int64_t total = numel(oshape);
    for (std::int64_t o = 0; o < total; ++o) {
      std::int64_t rem = o, in = 0;
      for (int d = 0; d < r; ++d) {
        std::int64_t idx = rem / ostrides[static_cast<std::size_t>(d)];
        rem %= ostrides[static_cast<std::size_t>(d)];
        in += idx * istrides[static_cast<std::size_t>(perm[static_cast<std::size_t>(d)])];
      }
      if (accumulate)
        dst[in] += src[o];
      else
        dst[o] = src[in];
    }
  };
  Tensor<T> out(out_shape);
  apply(x.data(), out.data(), out_shape, out_strides, in_strides, false);
  if (detail::any_tracked(tape, {&x})) {
    int ix = tape.node_of(x);
    tape.record(out, {ix}, [ix, apply, out_shape, out_strides, in_strides](Tape<T>& t, const std::vector<T>& dout) {
      apply(dout.data(), t.grad_buf(ix).data(), out_shape, out_strides, in_strides, true);
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_cols(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw DimensionError("concat_cols: shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::int64_t n = a.dim(0), ma = a.dim(1), mb = b.dim(1);
  Tensor<T> out({n, ma + mb});
  for (std::int64_t i = 0; i < n; ++i) {
    std::memcpy(out.data() + i * (ma + mb), a.data() + i * ma, static_cast<std::size_t>(ma) * sizeof(T));
    std::memcpy(out.data() + i * (ma + mb) + ma, b.data() + i * mb, static_cast<std::size_t>(mb) * sizeof(T));
  }
  if (detail::any_tracked(tape, {&a, &b})) {
    int ia = tape.node_of(a), ib = tape.node_of(b);
    tape.record(out, {ia, ib}, [ia, ib, n, ma, mb](Tape<T>& t, const std::vector<T>& dout) {
      for (std::int64_t i = 0; i < n; ++i) {
        if (ia >= 0) {
          auto& g = t.grad_buf(ia);
          for (std::int64_t j = 0; j < ma; ++j) g[static_cast<std::size_t>(i * ma + j)] += dout[static_cast<std::size_t>(i * (ma + mb) + j)];
        }
        if (ib >= 0) {
          auto& g = t.grad_buf(ib);
          for (std::int64_t j = 0; j < mb; ++j) g[static_cast<std::size_t>(i * mb + j)] += dout[static_cast<std::size_t>(i * (ma + mb) + ma + j)];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(Tape<T>& tape, const Tensor<T>& x, std::int64_t start, std::int64_t len) {
  if (x.rank() != 2 || start < 0 || start + len > x.dim(1))
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of " + shape_str(x.shape()));
  std::int64_t n = x.dim(0), m = x.dim(1);
  Tensor<T> out({n, len});
  for (std::int64_t i = 0; i < n; ++i)
    std::memcpy(out.data() + i * len, x.data() + i * m + start, static_cast<std::size_t>(len) * sizeof(T));
  if (detail::any_tracked(tape, {&x})) {
    int ix = tape.node_of(x);
    tape.record(out, {ix}, [ix, n, m, start, len](Tape<T>& t, const std::vector<T>& dout) {
      auto& g = t.grad_buf(ix);
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < len; ++j)
          g[static_cast<std::size_t>(i * m + start + j)] += dout[static_cast<std::size_t>(i * len + j)];
    });
  }
  return out;
}

// Stack per-timestep rows (B,E) into (B,S,E).
template <typename T>
Tensor<T> stack_time(Tape<T>& tape, const std::vector<Tensor<T>>& steps) {
  if (steps.empty()) throw ContractError("stack_time: empty step list");
  std::int64_t bsz = steps[0].dim(0), e = steps[0].dim(1);
  std::int64_t s = static_cast<std::int64_t>(steps.size());
  Tensor<T> out({bsz, s, e});
  for (std::int64_t t = 0; t < s; ++t) {
    if (steps[static_cast<std::size_t>(t)].shape() != steps[0].shape())
      throw DimensionError("stack_time: ragged step shapes");
    for (std::int64_t b = 0; b < bsz; ++b)
      std::memcpy(out.data() + (b * s + t) * e, steps[static_cast<std::size_t>(t)].data() + b * e,
                  static_cast<std::size_t>(e) * sizeof(T));
  }
  bool tracked = false;
  std::vector<int> ids(static_cast<std::size_t>(s), -1);
  for (std::int64_t t = 0; t < s; ++t) {
    ids[static_cast<std::size_t>(t)] = tape.node_of(steps[static_cast<std::size_t>(t)]);
    tracked = tracked || ids[static_cast<std::size_t>(t)] >= 0;
  }
  if (tape.recording() && tracked) {
    tape.record(out, ids, [ids, bsz, s, e](Tape<T>& t, const std::vector<T>& dout) {
      for (std::int64_t ti = 0; ti < s; ++ti) {
        int id = ids[static_cast<std::size_t>(ti)];
        if (id < 0) continue;
        auto& g = t.grad_buf(id);
        for (std::int64_t b = 0; b < bsz; ++b)
          for (std::int64_t j = 0; j < e; ++j)
            g[static_cast<std::size_t>(b * e + j)] += dout[static_cast<std::size_t>((b * s + ti) * e + j)];
      }
    });
  }
  return out;
}

// Embedding-style row gather: out[i,:] = table[ids[i],:].
template <typename T>
Tensor<T> row_select(Tape<T>& tape, const Tensor<T>& table, std::span<const std::int32_t> ids) {
  if (table.rank() != 2)
    throw DimensionError("row_select: table must be rank-2, got " + shape_str(table.shape()));
  std::int64_t v = table.dim(0), d = table.dim(1);
  for (auto id : ids)
    if (id < 0 || id >= v)
      throw IndexError("row_select: id " + std::to_string(id) + " out of range [0, " +
                       std::to_string(v) + ")");
  std::int64_t n = static_cast<std::int64_t>(ids.size());
  Tensor<T> out({n, d});
  for (std::int64_t i = 0; i < n; ++i)
    std::memcpy(out.data() + i * d, table.data() + static_cast<std::int64_t>(ids[static_cast<std::size_t>(i)]) * d,
                static_cast<std::size_t>(d) * sizeof(T));
  if (detail::any_tracked(tape, {&table})) {
    int it = tape.node_of(table);
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    tape.record(out, {it}, [it, idv = std::move(idv), d](Tape<T>& t, const std::vector<T>& dout) {
      auto& g = t.grad_buf(it);
      for (std::size_t i = 0; i < idv.size(); ++i) {
        std::int64_t row = static_cast<std::int64_t>(idv[i]);
        for (std::int64_t j = 0; j < d; ++j)
          g[static_cast<std::size_t>(row * d + j)] += dout[i * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax family
// ---------------------------------------------------------------------------

// Softmax over the last dim of scores (g,q,k). An optional {0,1} mask of
// shape (B,q,k) or (B,1,k) excludes positions; g must equal B*heads. Fully
// masked rows produce all-zero outputs. The mask is a constant (no gradient).
template <typename T>
Tensor<T> masked_softmax(Tape<T>& tape, const Tensor<T>& scores, const Tensor<T>* mask,
                         std::int64_t heads = 1) {
  if (scores.rank() != 3)
    throw DimensionError("masked_softmax: expected rank-3 scores, got " + shape_str(scores.shape()));
  std::int64_t g = scores.dim(0), q = scores.dim(1), k = scores.dim(2);
  if (mask) {
    if (mask->rank() != 3 || mask->dim(2) != k || g % mask->dim(0) != 0 ||
        (mask->dim(1) != q && mask->dim(1) != 1))
      throw DimensionError("masked_softmax: mask " + shape_str(mask->shape()) +
                           " incompatible with scores " + shape_str(scores.shape()));
    if (g != mask->dim(0) * heads)
      throw DimensionError("masked_softmax: heads/batch mismatch");
  }
  Tensor<T> out(scores.shape());
  std::int64_t mq = mask ? mask->dim(1) : 0;
  for (std::int64_t gi = 0; gi < g; ++gi) {
    std::int64_t b = mask ? gi / heads : 0;
    for (std::int64_t qi = 0; qi < q; ++qi) {
      const T* row = scores.data() + (gi * q + qi) * k;
      T* orow = out.data() + (gi * q + qi) * k;
      const T* mrow = mask ? mask->data() + (b * mq + (mq == 1 ? 0 : qi)) * k : nullptr;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t j = 0; j < k; ++j)
        if (!mrow || mrow[j] > T(0.5))
          if (row[j] > mx) mx = row[j];
      if (mx == -std::numeric_limits<T>::infinity()) {
        for (std::int64_t j = 0; j < k; ++j) orow[j] = T(0);
        continue;
      }
      T sum = T(0);
      for (std::int64_t j = 0; j < k; ++j) {
        if (!mrow || mrow[j] > T(0.5)) {
          orow[j] = std::exp(row[j] - mx);
          sum += orow[j];
        } else {
          orow[j] = T(0);
        }
      }
      for (std::int64_t j = 0; j < k; ++j) orow[j] /= sum;
    }
  }
  if (detail::any_tracked(tape, {&scores})) {
    int is = tape.node_of(scores);
    Tensor<T> y = out;
    tape.record(out, {is}, [is, y, g, q, k](Tape<T>& t, const std::vector<T>& dout) {
      auto& gr = t.grad_buf(is);
      for (std::int64_t r = 0; r < g * q; ++r) {
        const T* yr = y.data() + r * k;
        const T* dr = dout.data() + r * k;
        T dot = T(0);
        for (std::int64_t j = 0; j < k; ++j) dot += dr[j] * yr[j];
        for (std::int64_t j = 0; j < k; ++j)
          gr[static_cast<std::size_t>(r * k + j)] += yr[j] * (dr[j] - dot);
      }
    });
  }
  return out;
}

// Weighted sum of per-row cross-entropies: sum_i w[i] * (-log softmax(z_i)[y_i]).
// Returns a scalar tensor. Rows with w == 0 are skipped entirely.
template <typename T>
Tensor<T> cross_entropy_sum(Tape<T>& tape, const Tensor<T>& logits,
                            std::span<const std::int32_t> targets,
                            std::type_identity_t<std::span<const T>> weights) {
  if (logits.rank() != 2)
    throw DimensionError("cross_entropy_sum: expected rank-2 logits, got " + shape_str(logits.shape()));
  std::int64_t n = logits.dim(0), v = logits.dim(1);
  if (static_cast<std::int64_t>(targets.size()) != n || static_cast<std::int64_t>(weights.size()) != n)
    throw DimensionError("cross_entropy_sum: targets/weights length mismatch with " +
                         shape_str(logits.shape()));
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    T w = weights[static_cast<std::size_t>(i)];
    if (w == T(0)) continue;
    std::int32_t y = targets[static_cast<std::size_t>(i)];
    if (y < 0 || y >= v) throw IndexError("cross_entropy_sum: target id " + std::to_string(y) + " out of range");
    const T* row = logits.data() + i * v;
    T mx = row[0];
    for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    double lse = static_cast<double>(mx) + std::log(sum);
    total += static_cast<double>(w) * (lse - static_cast<double>(row[y]));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total));
  if (detail::any_tracked(tape, {&logits})) {
    int il = tape.node_of(logits);
    std::vector<std::int32_t> tv(targets.begin(), targets.end());
    std::vector<T> wv(weights.begin(), weights.end());
    Tensor<T> z = logits;
    tape.record(out, {il}, [il, z, tv = std::move(tv), wv = std::move(wv), n, v](Tape<T>& t, const std::vector<T>& dout) {
      auto& g = t.grad_buf(il);
      T go = dout[0];
      for (std::int64_t i = 0; i < n; ++i) {
        T w = wv[static_cast<std::size_t>(i)];
        if (w == T(0)) continue;
        const T* row = z.data() + i * v;
        T mx = row[0];
        for (std::int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
        for (std::int64_t j = 0; j < v; ++j) {
          T p = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / sum);
          T delta = (tv[static_cast<std::size_t>(i)] == j) ? T(1) : T(0);
          g[static_cast<std::size_t>(i * v + j)] += go * w * (p - delta);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum_all(Tape<T>& tape, const Tensor<T>& x) {
  double s = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) s += static_cast<double>(x(i));
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s));
  if (detail::any_tracked(tape, {&x})) {
    int ix = tape.node_of(x);
    tape.record(out, {ix}, [ix](Tape<T>& t, const std::vector<T>& dout) {
      auto& g = t.grad_buf(ix);
      for (auto& v : g) v += dout[0];
    });
  }
  return out;
}

// Layer normalization over the trailing dimension.
template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5)) {
  std::int64_t m = x.dim(x.rank() - 1);
  if (gamma.size() != m || beta.size() != m)
    throw DimensionError("layer_norm: gamma/beta must be length " + std::to_string(m));
  std::int64_t rows = x.size() / m;
  Tensor<T> out(x.shape());
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  std::vector<T> xhat(static_cast<std::size_t>(x.size()));
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * m;
    T mean = T(0);
    for (std::int64_t j = 0; j < m; ++j) mean += xr[j];
    mean /= static_cast<T>(m);
    T var = T(0);
    for (std::int64_t j = 0; j < m; ++j) {
      T d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(m);
    T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (std::int64_t j = 0; j < m; ++j) {
      T h = (xr[j] - mean) * is;
      xhat[static_cast<std::size_t>(r * m + j)] = h;
      out(r * m + j) = h * gamma(j) + beta(j);
    }
  }
  if (detail::any_tracked(tape, {&x, &gamma, &beta})) {
    int ix = tape.node_of(x), ig = tape.node_of(gamma), ib = tape.node_of(beta);
    Tensor<T> gam = gamma;
    tape.record(out, {ix, ig, ib},
                [ix, ig, ib, gam, inv_std = std::move(inv_std), xhat = std::move(xhat), rows, m](
                    Tape<T>& t, const std::vector<T>& dout) {
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* dr = dout.data() + r * m;
        const T* hr = xhat.data() + r * m;
        if (ig >= 0) {
          auto& g = t.grad_buf(ig);
          for (std::int64_t j = 0; j < m; ++j) g[static_cast<std::size_t>(j)] += dr[j] * hr[j];
        }
        if (ib >= 0) {
          auto& g = t.grad_buf(ib);
          for (std::int64_t j = 0; j < m; ++j) g[static_cast<std::size_t>(j)] += dr[j];
        }
        if (ix >= 0) {
          auto& g = t.grad_buf(ix);
          T mean_g = T(0), mean_gh = T(0);
          for (std::int64_t j = 0; j < m; ++j) {
            T gj = dr[j] * gam(j);
            mean_g += gj;
            mean_gh += gj * hr[j];
          }
          mean_g /= static_cast<T>(m);
          mean_gh /= static_cast<T>(m);
          T is = inv_std[static_cast<std::size_t>(r)];
          for (std::int64_t j = 0; j < m; ++j) {
            T gj = dr[j] * gam(j);
            g[static_cast<std::size_t>(r * m + j)] += (gj - mean_g - hr[j] * mean_gh) * is;
          }
        }
      }
    });
  }
  return out;
}

}  // namespace lrnmt
