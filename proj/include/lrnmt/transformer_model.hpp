#pragma once

#include "lrnmt/model.hpp"

namespace lrnmt {

// Pre-norm transformer encoder-decoder with sinusoidal positions. Embedding
// and projection, feed-forward, and attention matrices are factorizable
// slots; layer norms and biases are not.
template <typename T>
class TransformerModel : public SeqModel<T> {
 public:
  TransformerModel(const ModelConfig& cfg, const FactorizationScheme& scheme, std::uint64_t seed)
      : cfg_(cfg), scheme_(scheme) {
    scheme_.validate();
    Rng rng(seed);
    WarningSink sink = &warnings_;
    std::int64_t d = cfg.embedding_dim, da = cfg.attention_dim, ff = cfg.ff_dim;

    src_embed_ = make_embedding(cfg.src_vocab, d, "src_embed", rng, sink);
    tgt_embed_ = make_embedding(cfg.tgt_vocab, d, "tgt_embed", rng, sink);

    auto make_lin = [&](std::int64_t n, std::int64_t m, Activation act, LayerGroup g,
                        const std::string& label, bool with_bias = true) {
      if (scheme_.selects(g))
        return Linear<T>::factorized(n, scheme_.inner_for(g, n, m), m, act, with_bias, g, rng,
                                     label, sink);
      return Linear<T>::dense(n, m, act, with_bias, g, rng);
    };
    // the key projection carries no bias: softmax is invariant to the
    // per-query constant shift a key bias induces, so it would be a dead
    // parameter
    auto make_attn = [&](const std::string& label) {
      const auto AT = LayerGroup::attention;
      return MultiHeadAttention<T>(make_lin(d, da, Activation::identity, AT, label + ".wq"),
                                   make_lin(d, da, Activation::identity, AT, label + ".wk", false),
                                   make_lin(d, da, Activation::identity, AT, label + ".wv"),
                                   make_lin(da, d, Activation::identity, AT, label + ".wo"),
                                   cfg.heads);
    };
    auto make_ffn = [&](const std::string& label) {
      const auto FF = LayerGroup::feed_forward;
      return FeedForward<T>(make_lin(d, ff, Activation::relu, FF, label + ".lin1"),
                            make_lin(ff, d, Activation::identity, FF, label + ".lin2"));
    };

    for (int i = 0; i < cfg.layers; ++i) {
      std::string p = "encoder.l" + std::to_string(i);
      enc_.push_back({LayerNormLayer<T>(d), make_attn(p + ".self"), LayerNormLayer<T>(d),
                      make_ffn(p + ".ff")});
    }
    enc_final_ = LayerNormLayer<T>(d);
    for (int i = 0; i < cfg.layers; ++i) {
      std::string p = "decoder.l" + std::to_string(i);
      dec_.push_back({LayerNormLayer<T>(d), make_attn(p + ".self"), LayerNormLayer<T>(d),
                      make_attn(p + ".cross"), LayerNormLayer<T>(d), make_ffn(p + ".ff")});
    }
    dec_final_ = LayerNormLayer<T>(d);

    if (!cfg.tie_embeddings)
      proj_ = make_lin(d, cfg.tgt_vocab, Activation::identity, LayerGroup::embed_projection,
                       "proj");
    else
      proj_bias_ = Tensor<T>({cfg.tgt_vocab});

    build_positions(kMaxPositions);
  }

  const ModelConfig& config() const override { return cfg_; }
  const FactorizationScheme& scheme() const override { return scheme_; }
  void set_scheme(FactorizationScheme scheme) override { scheme_ = std::move(scheme); }
  const std::vector<std::string>& build_warnings() const override { return warnings_; }

  std::vector<ParamRef<T>> params() override {
    std::vector<ParamRef<T>> out;
    src_embed_.collect_params("src_embed", out);
    tgt_embed_.collect_params("tgt_embed", out);
    for (int i = 0; i < cfg_.layers; ++i) {
      std::string p = "encoder.l" + std::to_string(i);
      auto& l = enc_[static_cast<std::size_t>(i)];
      l.ln1.collect_params(p + ".ln1", out);
      l.self.collect_params(p + ".self", out);
      l.ln2.collect_params(p + ".ln2", out);
      l.ff.collect_params(p + ".ff", out);
    }
    enc_final_.collect_params("encoder.final_ln", out);
    for (int i = 0; i < cfg_.layers; ++i) {
      std::string p = "decoder.l" + std::to_string(i);
      auto& l = dec_[static_cast<std::size_t>(i)];
      l.ln1.collect_params(p + ".ln1", out);
      l.self.collect_params(p + ".self", out);
      l.ln2.collect_params(p + ".ln2", out);
      l.cross.collect_params(p + ".cross", out);
      l.ln3.collect_params(p + ".ln3", out);
      l.ff.collect_params(p + ".ff", out);
    }
    dec_final_.collect_params("decoder.final_ln", out);
    if (!cfg_.tie_embeddings) {
      proj_.collect_params("proj", out);
    } else {
      out.push_back({"proj.b", LayerGroup::embed_projection, false, &proj_bias_});
    }
    return out;
  }

  std::vector<SlotRef<T>> factorizable_slots() override {
    std::vector<SlotRef<T>> out;
    out.push_back({"src_embed", LayerGroup::embed_projection, &src_embed_});
    out.push_back({"tgt_embed", LayerGroup::embed_projection, &tgt_embed_});
    auto add_attn = [&](const std::string& p, MultiHeadAttention<T>& a) {
      out.push_back({p + ".wq", LayerGroup::attention, &a.wq()});
      out.push_back({p + ".wk", LayerGroup::attention, &a.wk()});
      out.push_back({p + ".wv", LayerGroup::attention, &a.wv()});
      out.push_back({p + ".wo", LayerGroup::attention, &a.wo()});
    };
    auto add_ffn = [&](const std::string& p, FeedForward<T>& f) {
      out.push_back({p + ".lin1", LayerGroup::feed_forward, &f.lin1()});
      out.push_back({p + ".lin2", LayerGroup::feed_forward, &f.lin2()});
    };
    for (int i = 0; i < cfg_.layers; ++i) {
      std::string p = "encoder.l" + std::to_string(i);
      add_attn(p + ".self", enc_[static_cast<std::size_t>(i)].self);
      add_ffn(p + ".ff", enc_[static_cast<std::size_t>(i)].ff);
    }
    for (int i = 0; i < cfg_.layers; ++i) {
      std::string p = "decoder.l" + std::to_string(i);
      add_attn(p + ".self", dec_[static_cast<std::size_t>(i)].self);
      add_attn(p + ".cross", dec_[static_cast<std::size_t>(i)].cross);
      add_ffn(p + ".ff", dec_[static_cast<std::size_t>(i)].ff);
    }
    if (!cfg_.tie_embeddings) out.push_back({"proj", LayerGroup::embed_projection, &proj_});
    return out;
  }

  LossInfo<T> forward_loss(Tape<T>& tape, const Batch& batch) const override {
    if (batch.size == 0) throw ContractError("forward_loss: empty batch");
    std::int64_t tokens = batch.token_count();
    if (tokens == 0) throw ContractError("forward_loss: batch has no unmasked target tokens");

    Tensor<T> src_mask = mask_tensor(batch.src_mask, batch.size, batch.src_len);
    Tensor<T> enc = encode_batch(tape, batch.src, batch.size, batch.src_len, &src_mask);

    Tensor<T> self_mask = causal_mask(batch.tgt_mask, batch.size, batch.tgt_len);
    Tensor<T> dec = decode_states(tape, batch.tgt_in, batch.size, batch.tgt_len, enc, &self_mask,
                                  &src_mask);
    Tensor<T> logits = output_logits(tape, reshape(tape, dec, {batch.size * batch.tgt_len,
                                                               cfg_.embedding_dim}));
    std::vector<T> weights(batch.tgt_mask.begin(), batch.tgt_mask.end());
    Tensor<T> total = cross_entropy_sum(tape, logits, batch.tgt_out, weights);
    return {scale(tape, total, static_cast<T>(1.0 / static_cast<double>(tokens))), tokens};
  }

  std::unique_ptr<DecodeContext<T>> begin_decode(std::span<const std::int32_t> src) const override {
    return std::make_unique<Context>(this, src);
  }

 private:
  static constexpr std::int64_t kMaxPositions = 1024;

  struct EncLayer {
    LayerNormLayer<T> ln1;
    MultiHeadAttention<T> self;
    LayerNormLayer<T> ln2;
    FeedForward<T> ff;
  };
  struct DecLayer {
    LayerNormLayer<T> ln1;
    MultiHeadAttention<T> self;
    LayerNormLayer<T> ln2;
    MultiHeadAttention<T> cross;
    LayerNormLayer<T> ln3;
    FeedForward<T> ff;
  };

  Embedding<T> make_embedding(std::int64_t vocab, std::int64_t d, const std::string& label,
                              Rng& rng, WarningSink sink) {
    if (scheme_.selects(LayerGroup::embed_projection))
      return Embedding<T>::factorized(
          vocab, scheme_.inner_for(LayerGroup::embed_projection, vocab, d), d, rng, label, sink);
    return Embedding<T>::dense(vocab, d, rng);
  }

  void build_positions(std::int64_t max_len) {
    std::int64_t d = cfg_.embedding_dim;
    pos_ = Tensor<T>({max_len, d});
    for (std::int64_t t = 0; t < max_len; ++t)
      for (std::int64_t i = 0; i < d; ++i) {
        double angle = static_cast<double>(t) /
                       std::pow(10000.0, static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
        pos_(t, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
      }
  }

  Tensor<T> mask_tensor(const std::vector<float>& mask, std::int64_t b, std::int64_t s) const {
    Tensor<T> m({b, 1, s});
    for (std::int64_t i = 0; i < b * s; ++i) m(i) = static_cast<T>(mask[static_cast<std::size_t>(i)]);
    return m;
  }

  // causal AND key-padding mask, (B, T, T)
  Tensor<T> causal_mask(const std::vector<float>& tgt_mask, std::int64_t b, std::int64_t t) const {
    Tensor<T> m({b, t, t});
    for (std::int64_t bi = 0; bi < b; ++bi)
      for (std::int64_t q = 0; q < t; ++q)
        for (std::int64_t k = 0; k <= q; ++k)
          m(bi * t * t + q * t + k) =
              static_cast<T>(tgt_mask[static_cast<std::size_t>(bi * t + k)]);
    return m;
  }

  Tensor<T> embed_sequence(Tape<T>& tape, const Embedding<T>& emb,
                           const std::vector<std::int32_t>& ids, std::int64_t b,
                           std::int64_t s) const {
    if (s > kMaxPositions)
      throw ContractError("sequence length " + std::to_string(s) + " exceeds position table");
    Tensor<T> flat = emb.lookup(tape, ids);
    Tensor<T> x = reshape(tape, scale(tape, flat, static_cast<T>(std::sqrt(static_cast<double>(cfg_.embedding_dim)))),
                          {b, s, cfg_.embedding_dim});
    Tensor<T> pos_slice({s, cfg_.embedding_dim});
    std::copy(pos_.data(), pos_.data() + s * cfg_.embedding_dim, pos_slice.data());
    return add_seq(tape, x, pos_slice);
  }

  Tensor<T> encode_batch(Tape<T>& tape, const std::vector<std::int32_t>& src_ids, std::int64_t b,
                         std::int64_t s, const Tensor<T>* src_mask) const {
    Tensor<T> x = embed_sequence(tape, src_embed_, src_ids, b, s);
    for (const auto& l : enc_) {
      Tensor<T> n1 = l.ln1.forward(tape, x);
      x = add(tape, x, l.self.forward(tape, n1, n1, src_mask));
      Tensor<T> normed = l.ln2.forward(tape, x);
      Tensor<T> h = l.ff.forward(tape, reshape(tape, normed, {b * s, cfg_.embedding_dim}));
      x = add(tape, x, reshape(tape, h, {b, s, cfg_.embedding_dim}));
    }
    return enc_final_.forward(tape, x);
  }

  Tensor<T> decode_states(Tape<T>& tape, const std::vector<std::int32_t>& tgt_ids, std::int64_t b,
                          std::int64_t t, const Tensor<T>& enc, const Tensor<T>* self_mask,
                          const Tensor<T>* cross_mask) const {
    Tensor<T> x = embed_sequence(tape, tgt_embed_, tgt_ids, b, t);
    for (const auto& l : dec_) {
      Tensor<T> n1 = l.ln1.forward(tape, x);
      x = add(tape, x, l.self.forward(tape, n1, n1, self_mask));
      x = add(tape, x, l.cross.forward(tape, l.ln2.forward(tape, x), enc, cross_mask));
      Tensor<T> n3 = l.ln3.forward(tape, x);
      Tensor<T> h = l.ff.forward(tape, reshape(tape, n3, {b * t, cfg_.embedding_dim}));
      x = add(tape, x, reshape(tape, h, {b, t, cfg_.embedding_dim}));
    }
    return dec_final_.forward(tape, x);
  }

  Tensor<T> output_logits(Tape<T>& tape, const Tensor<T>& h) const {
    if (!cfg_.tie_embeddings) return proj_.forward(tape, h);
    return add_bias(tape, tgt_embed_.tied_logits(tape, h), proj_bias_);
  }

  class Context : public DecodeContext<T> {
   public:
    Context(const TransformerModel* model, std::span<const std::int32_t> src)
        : model_(model), prefix_{Vocab::bos_id} {
      Tape<T> tape = Tape<T>::no_grad();
      std::int64_t s = std::max<std::int64_t>(1, static_cast<std::int64_t>(src.size()));
      std::vector<std::int32_t> ids(src.begin(), src.end());
      std::vector<float> mask(static_cast<std::size_t>(s), 1.0f);
      if (ids.empty()) {
        ids.push_back(Vocab::pad_id);
        mask[0] = 0.0f;
      }
      src_mask_ = std::make_shared<Tensor<T>>(model->mask_tensor(mask, 1, s));
      enc_ = std::make_shared<Tensor<T>>(model->encode_batch(tape, ids, 1, s, src_mask_.get()));
    }

    std::unique_ptr<DecodeContext<T>> clone() const override {
      return std::unique_ptr<DecodeContext<T>>(new Context(*this));
    }

    const std::vector<double>& next_logprobs() override {
      if (!cache_valid_) {
        Tape<T> tape = Tape<T>::no_grad();
        std::int64_t t = static_cast<std::int64_t>(prefix_.size());
        std::vector<float> mask(static_cast<std::size_t>(t), 1.0f);
        Tensor<T> self_mask = model_->causal_mask(mask, 1, t);
        Tensor<T> dec = model_->decode_states(tape, prefix_, 1, t, *enc_, &self_mask,
                                              src_mask_.get());
        Tensor<T> last({1, model_->cfg_.embedding_dim});
        std::copy(dec.data() + (t - 1) * model_->cfg_.embedding_dim,
                  dec.data() + t * model_->cfg_.embedding_dim, last.data());
        Tensor<T> logits = model_->output_logits(tape, last);
        cache_ = log_softmax_row(logits.data(), logits.dim(1));
        cache_valid_ = true;
      }
      return cache_;
    }

    void push(std::int32_t token) override {
      prefix_.push_back(token);
      cache_valid_ = false;
    }

   private:
    const TransformerModel* model_;
    std::shared_ptr<Tensor<T>> enc_, src_mask_;
    std::vector<std::int32_t> prefix_;
    std::vector<double> cache_;
    bool cache_valid_ = false;
  };

  ModelConfig cfg_;
  FactorizationScheme scheme_;
  std::vector<std::string> warnings_;
  Embedding<T> src_embed_, tgt_embed_;
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  LayerNormLayer<T> enc_final_, dec_final_;
  Linear<T> proj_;
  Tensor<T> proj_bias_;  // tied case only
  Tensor<T> pos_;
};

}  // namespace lrnmt
