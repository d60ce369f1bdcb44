#pragma once

#include <iostream>
#include <optional>

#include "lrnmt/ops.hpp"

namespace lrnmt {

// Functional role of a parameter; drives factorization scheme selection and
// spectrum-report grouping.
enum class LayerGroup { embed_projection, attention, feed_forward, recurrent, other };

inline const char* layer_group_name(LayerGroup g) {
  switch (g) {
    case LayerGroup::embed_projection: return "embed_projection";
    case LayerGroup::attention: return "attention";
    case LayerGroup::feed_forward: return "feed_forward";
    case LayerGroup::recurrent: return "recurrent";
    case LayerGroup::other: return "other";
  }
  return "?";
}

inline LayerGroup layer_group_from_name(const std::string& s) {
  if (s == "embed_projection") return LayerGroup::embed_projection;
  if (s == "attention") return LayerGroup::attention;
  if (s == "feed_forward") return LayerGroup::feed_forward;
  if (s == "recurrent") return LayerGroup::recurrent;
  if (s == "other") return LayerGroup::other;
  throw ConfigError("unknown layer group: " + s);
}

template <typename T>
struct ParamRef {
  std::string name;
  LayerGroup group;
  bool is_weight_matrix;  // rank-2 weight: prunable and spectrum-analyzed
  Tensor<T>* tensor;
};

using WarningSink = std::vector<std::string>*;

inline void emit_warning(WarningSink sink, std::string msg) {
  if (sink)
    sink->push_back(std::move(msg));
  else
    std::cerr << "warning: " << msg << "\n";
}

// Breaking an (n,m) matrix into (n,p)(p,m) factors saves parameters iff
// p*(n+m) < n*m. Returns a warning when it does not, or when p exceeds the
// min(n,m)/2 convention.
inline std::optional<std::string> factorization_advice(std::int64_t n, std::int64_t p,
                                                       std::int64_t m, const std::string& label) {
  if (p * (n + m) >= n * m)
    return label + ": inner size " + std::to_string(p) + " gives no compression for (" +
           std::to_string(n) + ", " + std::to_string(m) + ") (needs p < nm/(n+m) = " +
           std::to_string(static_cast<double>(n * m) / static_cast<double>(n + m)) + ")";
  if (2 * p > std::min(n, m))
    return label + ": inner size " + std::to_string(p) + " exceeds min(n,m)/2 = " +
           std::to_string(std::min(n, m) / 2);
  return std::nullopt;
}

// --- initialization -------------------------------------------------------
//
// Dense matrices use fan-based uniform init: Var(W) = 2/(n+m). A factor pair
// (n,p)(p,m) uses Var(W1) = Var(W2) = sqrt(Var_dense / p), which makes
// Var(x W1 W2) = n * p * Var1 * Var2 * Var(x) = n * Var_dense * Var(x), the
// dense output variance. Equivalently each factor's uniform limit carries a
// (Var_dense/p)^(1/4) scale. Verified empirically in the layer tests.

template <typename T>
void fill_uniform(Tensor<T>& w, Rng& rng, double limit) {
  for (std::int64_t i = 0; i < w.size(); ++i)
    w(i) = static_cast<T>(rng.uniform(-limit, limit));
}

inline double dense_init_limit(std::int64_t fan_in, std::int64_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

inline double factor_init_limit(std::int64_t n, std::int64_t p, std::int64_t m) {
  double var_dense = 2.0 / static_cast<double>(n + m);
  double var_factor = std::sqrt(var_dense / static_cast<double>(p));
  return std::sqrt(3.0 * var_factor);
}

inline double embed_init_limit(std::int64_t d) { return std::sqrt(3.0 / static_cast<double>(d)); }

inline double embed_factor_init_limit(std::int64_t p, std::int64_t d) {
  double var_factor = std::sqrt(1.0 / static_cast<double>(p * d));
  return std::sqrt(3.0 * var_factor);
}

// --- linear slot -----------------------------------------------------------

// A weight-matrix position that holds either a dense (n,m) matrix or an
// in-place factor pair (n,p)(p,m), with one bias and one activation applied
// after the (second) product.
template <typename T>
class Linear {
 public:
  Linear() = default;

  static Linear dense(std::int64_t in, std::int64_t out, Activation act, bool with_bias,
                      LayerGroup group, Rng& rng) {
    Linear l;
    l.n_ = in;
    l.m_ = out;
    l.act_ = act;
    l.group_ = group;
    l.w_ = Tensor<T>({in, out});
    fill_uniform(l.w_, rng, dense_init_limit(in, out));
    if (with_bias) l.bias_ = Tensor<T>({out});
    return l;
  }

  static Linear factorized(std::int64_t in, std::int64_t inner, std::int64_t out, Activation act,
                           bool with_bias, LayerGroup group, Rng& rng, const std::string& label,
                           WarningSink warnings) {
    if (inner < 1 || inner > std::min(in, out))
      throw ConfigError(label + ": inner size " + std::to_string(inner) +
                        " exceeds min(n,m) = " + std::to_string(std::min(in, out)) +
                        " for matrix (" + std::to_string(in) + ", " + std::to_string(out) + ")");
    if (auto advice = factorization_advice(in, inner, out, label)) emit_warning(warnings, *advice);
    Linear l;
    l.n_ = in;
    l.m_ = out;
    l.p_ = inner;
    l.act_ = act;
    l.group_ = group;
    l.w1_ = Tensor<T>({in, inner});
    l.w2_ = Tensor<T>({inner, out});
    double limit = factor_init_limit(in, inner, out);
    fill_uniform(l.w1_, rng, limit);
    fill_uniform(l.w2_, rng, limit);
    if (with_bias) l.bias_ = Tensor<T>({out});
    return l;
  }

  // x (N, in) -> (N, out)
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x) const {
    if (x.rank() != 2 || x.dim(1) != n_)
      throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match in size " +
                           std::to_string(n_));
    Tensor<T> y = is_factorized() ? matmul(tape, matmul(tape, x, w1_), w2_) : matmul(tape, x, w_);
    if (bias_.defined()) y = add_bias(tape, y, bias_);
    return apply_activation(tape, y, act_);
  }

  bool is_factorized() const { return p_ > 0; }
  std::int64_t in_size() const { return n_; }
  std::int64_t out_size() const { return m_; }
  std::int64_t inner_size() const { return p_; }
  Activation activation() const { return act_; }
  LayerGroup group() const { return group_; }
  bool has_bias() const { return bias_.defined(); }

  std::int64_t weight_param_count() const {
    return is_factorized() ? p_ * (n_ + m_) : n_ * m_;
  }
  std::int64_t bias_param_count() const { return bias_.defined() ? m_ : 0; }

  Tensor<T>& dense_weight() {
    if (is_factorized()) throw ContractError("linear: no dense weight on a factorized slot");
    return w_;
  }
  const Tensor<T>& dense_weight() const {
    return const_cast<Linear*>(this)->dense_weight();
  }
  Tensor<T>& bias() { return bias_; }

  // Swaps the dense matrix for externally computed factors (SVD truncation).
  // Bias and activation stay in place.
  void set_factors(Tensor<T> w1, Tensor<T> w2) {
    if (w1.rank() != 2 || w2.rank() != 2 || w1.dim(1) != w2.dim(0) || w1.dim(0) != n_ ||
        w2.dim(1) != m_)
      throw DimensionError("linear: factor shapes " + shape_str(w1.shape()) + ", " +
                           shape_str(w2.shape()) + " do not fit (" + std::to_string(n_) + ", " +
                           std::to_string(m_) + ")");
    p_ = w1.dim(1);
    w1_ = std::move(w1);
    w2_ = std::move(w2);
    w_ = Tensor<T>();
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    if (is_factorized()) {
      out.push_back({prefix + ".W1", group_, true, &w1_});
      out.push_back({prefix + ".W2", group_, true, &w2_});
    } else {
      out.push_back({prefix + ".W", group_, true, &w_});
    }
    if (bias_.defined()) out.push_back({prefix + ".b", group_, false, &bias_});
  }

 private:
  std::int64_t n_ = 0, m_ = 0, p_ = 0;  // p == 0 means dense
  Activation act_ = Activation::identity;
  LayerGroup group_ = LayerGroup::other;
  Tensor<T> w_, w1_, w2_, bias_;
};

// --- embedding slot ---------------------------------------------------------

// Token embedding table, dense (V,d) or factorized (V,p)(p,d). No bias and no
// activation in either form. Also produces tied output logits against the
// same (possibly factorized) table without materializing V x d.
template <typename T>
class Embedding {
 public:
  Embedding() = default;

  static Embedding dense(std::int64_t vocab, std::int64_t dim, Rng& rng) {
    Embedding e;
    e.v_ = vocab;
    e.d_ = dim;
    e.e_ = Tensor<T>({vocab, dim});
    fill_uniform(e.e_, rng, embed_init_limit(dim));
    return e;
  }

  static Embedding factorized(std::int64_t vocab, std::int64_t inner, std::int64_t dim, Rng& rng,
                              const std::string& label, WarningSink warnings) {
    if (inner < 1 || inner > std::min(vocab, dim))
      throw ConfigError(label + ": inner size " + std::to_string(inner) +
                        " exceeds min(V,d) = " + std::to_string(std::min(vocab, dim)));
    if (auto advice = factorization_advice(vocab, inner, dim, label)) emit_warning(warnings, *advice);
    Embedding e;
    e.v_ = vocab;
    e.d_ = dim;
    e.p_ = inner;
    e.e1_ = Tensor<T>({vocab, inner});
    e.e2_ = Tensor<T>({inner, dim});
    double limit = embed_factor_init_limit(inner, dim);
    fill_uniform(e.e1_, rng, limit);
    fill_uniform(e.e2_, rng, limit);
    return e;
  }

  // ids -> (N, d); factorized path row-selects E1 then projects through E2.
  Tensor<T> lookup(Tape<T>& tape, std::span<const std::int32_t> ids) const {
    if (is_factorized()) return matmul(tape, row_select(tape, e1_, ids), e2_);
    return row_select(tape, e_, ids);
  }

  // h (N, d) -> logits (N, V) against the transposed table; the factorized
  // form evaluates (h E2^T) E1^T.
  Tensor<T> tied_logits(Tape<T>& tape, const Tensor<T>& h) const {
    if (is_factorized()) return matmul_nt(tape, matmul_nt(tape, h, e2_), e1_);
    return matmul_nt(tape, h, e_);
  }

  bool is_factorized() const { return p_ > 0; }
  std::int64_t vocab_size() const { return v_; }
  std::int64_t dim() const { return d_; }
  std::int64_t inner_size() const { return p_; }
  std::int64_t weight_param_count() const { return is_factorized() ? p_ * (v_ + d_) : v_ * d_; }

  Tensor<T>& dense_table() {
    if (is_factorized()) throw ContractError("embedding: no dense table on a factorized slot");
    return e_;
  }

  void set_factors(Tensor<T> e1, Tensor<T> e2) {
    if (e1.rank() != 2 || e2.rank() != 2 || e1.dim(1) != e2.dim(0) || e1.dim(0) != v_ ||
        e2.dim(1) != d_)
      throw DimensionError("embedding: factor shapes do not fit (" + std::to_string(v_) + ", " +
                           std::to_string(d_) + ")");
    p_ = e1.dim(1);
    e1_ = std::move(e1);
    e2_ = std::move(e2);
    e_ = Tensor<T>();
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    if (is_factorized()) {
      out.push_back({prefix + ".E1", LayerGroup::embed_projection, true, &e1_});
      out.push_back({prefix + ".E2", LayerGroup::embed_projection, true, &e2_});
    } else {
      out.push_back({prefix + ".E", LayerGroup::embed_projection, true, &e_});
    }
  }

 private:
  std::int64_t v_ = 0, d_ = 0, p_ = 0;
  Tensor<T> e_, e1_, e2_;
};

// --- layer norm -------------------------------------------------------------

template <typename T>
class LayerNormLayer {
 public:
  LayerNormLayer() = default;
  explicit LayerNormLayer(std::int64_t dim) : gain_(Tensor<T>::full({dim}, T(1))), bias_({dim}) {}

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x) const {
    return layer_norm(tape, x, gain_, bias_);
  }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    out.push_back({prefix + ".gain", LayerGroup::other, false, &gain_});
    out.push_back({prefix + ".bias", LayerGroup::other, false, &bias_});
  }

 private:
  Tensor<T> gain_, bias_;
};

// --- feed-forward block ------------------------------------------------------

template <typename T>
class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(Linear<T> lin1, Linear<T> lin2) : lin1_(std::move(lin1)), lin2_(std::move(lin2)) {}

  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x) const {
    return lin2_.forward(tape, lin1_.forward(tape, x));
  }

  Linear<T>& lin1() { return lin1_; }
  Linear<T>& lin2() { return lin2_; }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    lin1_.collect_params(prefix + ".lin1", out);
    lin2_.collect_params(prefix + ".lin2", out);
  }

 private:
  Linear<T> lin1_, lin2_;
};

// --- multi-head attention ----------------------------------------------------

// Scaled dot-product attention with h heads. The q/k/v/o projections act on
// the full model/attention dimensions; factorization (when configured)
// applies to those full matrices before head splitting.
template <typename T>
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(Linear<T> wq, Linear<T> wk, Linear<T> wv, Linear<T> wo, int heads)
      : wq_(std::move(wq)), wk_(std::move(wk)), wv_(std::move(wv)), wo_(std::move(wo)),
        heads_(heads) {
    if (wq_.out_size() % heads_ != 0)
      throw ConfigError("attention dim " + std::to_string(wq_.out_size()) +
                        " not divisible by heads " + std::to_string(heads_));
  }

  // query (B,Sq,d), memory (B,Sk,d); mask (B,1,Sk) or (B,Sq,Sk) of {0,1}.
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& query, const Tensor<T>& memory,
                    const Tensor<T>* mask) const {
    std::int64_t b = query.dim(0), sq = query.dim(1), sk = memory.dim(1);
    std::int64_t da = wq_.out_size(), dk = da / heads_;
    auto project = [&](const Linear<T>& w, const Tensor<T>& x, std::int64_t s) {
      Tensor<T> flat = w.forward(tape, reshape(tape, x, {b * s, x.dim(2)}));
      Tensor<T> split = reshape(tape, flat, {b, s, heads_, dk});
      return reshape(tape, permute(tape, split, {0, 2, 1, 3}), {b * heads_, s, dk});
    };
    Tensor<T> q = project(wq_, query, sq);
    Tensor<T> k = project(wk_, memory, sk);
    Tensor<T> v = project(wv_, memory, sk);
    Tensor<T> scores = scale(tape, bmm_nt(tape, q, k), static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk))));
    Tensor<T> attn = masked_softmax(tape, scores, mask, heads_);
    Tensor<T> ctx = bmm(tape, attn, v);
    Tensor<T> merged = reshape(tape, permute(tape, reshape(tape, ctx, {b, heads_, sq, dk}), {0, 2, 1, 3}),
                               {b * sq, da});
    return reshape(tape, wo_.forward(tape, merged), {b, sq, wo_.out_size()});
  }

  Linear<T>& wq() { return wq_; }
  Linear<T>& wk() { return wk_; }
  Linear<T>& wv() { return wv_; }
  Linear<T>& wo() { return wo_; }
  int heads() const { return heads_; }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    wq_.collect_params(prefix + ".wq", out);
    wk_.collect_params(prefix + ".wk", out);
    wv_.collect_params(prefix + ".wv", out);
    wo_.collect_params(prefix + ".wo", out);
  }

 private:
  Linear<T> wq_, wk_, wv_, wo_;
  int heads_ = 1;
};

// --- LSTM cell ----------------------------------------------------------------

// Standard LSTM cell with fused gate matrices: gates = x Wx + h Wh + b, gate
// order (input, forget, cell, output). Forget-gate bias starts at 1.
template <typename T>
class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(std::int64_t in, std::int64_t hidden, Rng& rng) : in_(in), hidden_(hidden) {
    wx_ = Linear<T>::dense(in, 4 * hidden, Activation::identity, true, LayerGroup::recurrent, rng);
    wh_ = Linear<T>::dense(hidden, 4 * hidden, Activation::identity, false, LayerGroup::recurrent, rng);
    for (std::int64_t j = hidden; j < 2 * hidden; ++j) wx_.bias()(j) = T(1);
  }

  struct State {
    Tensor<T> h, c;
  };

  State initial_state(std::int64_t batch) const {
    return {Tensor<T>({batch, hidden_}), Tensor<T>({batch, hidden_})};
  }

  State step(Tape<T>& tape, const Tensor<T>& x, const State& prev) const {
    Tensor<T> z = add(tape, wx_.forward(tape, x), wh_.forward(tape, prev.h));
    Tensor<T> i = apply_activation(tape, slice_cols(tape, z, 0, hidden_), Activation::sigmoid);
    Tensor<T> f = apply_activation(tape, slice_cols(tape, z, hidden_, hidden_), Activation::sigmoid);
    Tensor<T> g = apply_activation(tape, slice_cols(tape, z, 2 * hidden_, hidden_), Activation::tanh);
    Tensor<T> o = apply_activation(tape, slice_cols(tape, z, 3 * hidden_, hidden_), Activation::sigmoid);
    Tensor<T> c = add(tape, mul(tape, f, prev.c), mul(tape, i, g));
    Tensor<T> h = mul(tape, o, apply_activation(tape, c, Activation::tanh));
    return {h, c};
  }

  std::int64_t in_size() const { return in_; }
  std::int64_t hidden_size() const { return hidden_; }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    wx_.collect_params(prefix + ".wx", out);
    wh_.collect_params(prefix + ".wh", out);
  }

 private:
  std::int64_t in_ = 0, hidden_ = 0;
  Linear<T> wx_, wh_;
};

// --- Luong-style global attention ----------------------------------------------

// General bilinear score: score(h, s) = h Wa s^T, softmax over unmasked
// source positions, then h~ = tanh(Wc [ctx; h]). The output dimension of Wc
// is the attentional-hidden size (the embedding size when the projection is
// tied).
template <typename T>
class LuongAttention {
 public:
  LuongAttention() = default;
  LuongAttention(std::int64_t dec_dim, std::int64_t enc_dim, std::int64_t out_dim, Rng& rng) {
    wa_ = Linear<T>::dense(dec_dim, enc_dim, Activation::identity, false, LayerGroup::attention, rng);
    wc_ = Linear<T>::dense(enc_dim + dec_dim, out_dim, Activation::tanh, true, LayerGroup::attention, rng);
  }

  // h (B, dec), enc (B, S, enc), src_mask (B,1,S) -> (B, out)
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& h, const Tensor<T>& enc,
                    const Tensor<T>* src_mask) const {
    std::int64_t b = h.dim(0), e = enc.dim(2);
    Tensor<T> q = reshape(tape, wa_.forward(tape, h), {b, 1, e});
    Tensor<T> weights = masked_softmax(tape, bmm_nt(tape, q, enc), src_mask, 1);
    Tensor<T> ctx = reshape(tape, bmm(tape, weights, enc), {b, e});
    return wc_.forward(tape, concat_cols(tape, ctx, h));
  }

  Linear<T>& wa() { return wa_; }
  Linear<T>& wc() { return wc_; }

  void collect_params(const std::string& prefix, std::vector<ParamRef<T>>& out) {
    wa_.collect_params(prefix + ".wa", out);
    wc_.collect_params(prefix + ".wc", out);
  }

 private:
  Linear<T> wa_, wc_;
};

}  // namespace lrnmt
