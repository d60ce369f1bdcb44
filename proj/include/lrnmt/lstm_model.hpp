#pragma once

#include "lrnmt/model.hpp"

namespace lrnmt {

// Bidirectional-encoder LSTM with a stacked decoder, Luong-style global
// attention (general score) and input feeding. The attentional hidden state
// has the embedding size so the decoder embedding can tie with the output
// projection; it is concatenated to the next step's input (input feeding).
// Per-layer final encoder states (forward and backward halves concatenated)
// initialize the matching decoder layer.
template <typename T>
class LstmModel : public SeqModel<T> {
 public:
  LstmModel(const ModelConfig& cfg, const FactorizationScheme& scheme, std::uint64_t seed)
      : cfg_(cfg), scheme_(scheme) {
    scheme_.validate();
    for (LayerGroup g : scheme_.groups)
      if (g != LayerGroup::embed_projection)
        throw ConfigError("lstm models factorize only the embed_projection group, got " +
                          std::string(layer_group_name(g)));
    if (cfg.hidden_dim % 2 != 0)
      throw ConfigError("lstm hidden_dim must be even (split across encoder directions)");
    Rng rng(seed);
    WarningSink sink = &warnings_;
    std::int64_t e = cfg.embedding_dim, hd = cfg.hidden_dim, he = cfg.hidden_dim / 2;

    src_embed_ = make_embedding(cfg.src_vocab, e, "src_embed", rng, sink);
    tgt_embed_ = make_embedding(cfg.tgt_vocab, e, "tgt_embed", rng, sink);

    for (int i = 0; i < cfg.layers; ++i) {
      std::int64_t in = i == 0 ? e : 2 * he;
      enc_fw_.emplace_back(in, he, rng);
      enc_bw_.emplace_back(in, he, rng);
    }
    for (int i = 0; i < cfg.layers; ++i) {
      std::int64_t in = i == 0 ? 2 * e : hd;  // embedding + input-fed attentional state
      dec_.emplace_back(in, hd, rng);
    }
    attn_ = LuongAttention<T>(hd, 2 * he, e, rng);

    if (!cfg.tie_embeddings) {
      if (scheme_.selects(LayerGroup::embed_projection))
        proj_ = Linear<T>::factorized(e, scheme_.inner_for(LayerGroup::embed_projection, e, cfg.tgt_vocab),
                                      cfg.tgt_vocab, Activation::identity, true,
                                      LayerGroup::embed_projection, rng, "proj", sink);
      else
        proj_ = Linear<T>::dense(e, cfg.tgt_vocab, Activation::identity, true,
                                 LayerGroup::embed_projection, rng);
    } else {
      proj_bias_ = Tensor<T>({cfg.tgt_vocab});
    }
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
      enc_fw_[static_cast<std::size_t>(i)].collect_params(p + ".fw", out);
      enc_bw_[static_cast<std::size_t>(i)].collect_params(p + ".bw", out);
    }
    for (int i = 0; i < cfg_.layers; ++i)
      dec_[static_cast<std::size_t>(i)].collect_params("decoder.l" + std::to_string(i), out);
    attn_.collect_params("attn", out);
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
    if (!cfg_.tie_embeddings) out.push_back({"proj", LayerGroup::embed_projection, &proj_});
    return out;
  }

  LossInfo<T> forward_loss(Tape<T>& tape, const Batch& batch) const override {
    if (batch.size == 0) throw ContractError("forward_loss: empty batch");
    std::int64_t tokens = batch.token_count();
    if (tokens == 0) throw ContractError("forward_loss: batch has no unmasked target tokens");
    std::int64_t b = batch.size;

    Encoded enc = encode_batch(tape, batch.src, batch.src_mask, b, batch.src_len);

    std::vector<typename LstmCell<T>::State> states = enc.decoder_init;
    Tensor<T> attn_state({b, cfg_.embedding_dim});
    std::vector<Tensor<T>> outputs;
    for (std::int64_t t = 0; t < batch.tgt_len; ++t) {
      std::vector<std::int32_t> ids(static_cast<std::size_t>(b));
      for (std::int64_t i = 0; i < b; ++i)
        ids[static_cast<std::size_t>(i)] = batch.tgt_in[static_cast<std::size_t>(i * batch.tgt_len + t)];
      attn_state = decoder_step(tape, ids, states, attn_state, enc.states, &enc.src_mask);
      outputs.push_back(attn_state);
    }
    Tensor<T> stacked = stack_time(tape, outputs);
    Tensor<T> logits = output_logits(tape, reshape(tape, stacked, {b * batch.tgt_len,
                                                                   cfg_.embedding_dim}));
    std::vector<T> weights(batch.tgt_mask.begin(), batch.tgt_mask.end());
    Tensor<T> total = cross_entropy_sum(tape, logits, batch.tgt_out, weights);
    return {scale(tape, total, static_cast<T>(1.0 / static_cast<double>(tokens))), tokens};
  }

  std::unique_ptr<DecodeContext<T>> begin_decode(std::span<const std::int32_t> src) const override {
    return std::make_unique<Context>(this, src);
  }

 private:
  struct Encoded {
    Tensor<T> states;    // (B, S, 2*he)
    Tensor<T> src_mask;  // (B, 1, S)
    std::vector<typename LstmCell<T>::State> decoder_init;
  };

  Embedding<T> make_embedding(std::int64_t vocab, std::int64_t d, const std::string& label,
                              Rng& rng, WarningSink sink) {
    if (scheme_.selects(LayerGroup::embed_projection))
      return Embedding<T>::factorized(
          vocab, scheme_.inner_for(LayerGroup::embed_projection, vocab, d), d, rng, label, sink);
    return Embedding<T>::dense(vocab, d, rng);
  }

  // Runs one direction of one encoder layer over per-step inputs, carrying
  // state through padded steps. Returns per-step hidden states; final state
  // (at each row's last real token) lands in `final_out`.
  std::vector<Tensor<T>> run_direction(Tape<T>& tape, const LstmCell<T>& cell,
                                       const std::vector<Tensor<T>>& xs,
                                       const std::vector<std::vector<T>>& step_masks, bool backward,
                                       typename LstmCell<T>::State& final_out) const {
    std::int64_t b = xs[0].dim(0), s = static_cast<std::int64_t>(xs.size());
    auto state = cell.initial_state(b);
    std::vector<Tensor<T>> hs(static_cast<std::size_t>(s));
    for (std::int64_t step = 0; step < s; ++step) {
      std::int64_t t = backward ? s - 1 - step : step;
      auto fresh = cell.step(tape, xs[static_cast<std::size_t>(t)], state);
      state.h = mask_mix(tape, fresh.h, state.h, step_masks[static_cast<std::size_t>(t)]);
      state.c = mask_mix(tape, fresh.c, state.c, step_masks[static_cast<std::size_t>(t)]);
      hs[static_cast<std::size_t>(t)] = state.h;
    }
    final_out = state;
    return hs;
  }

  Encoded encode_batch(Tape<T>& tape, const std::vector<std::int32_t>& src_ids,
                       const std::vector<float>& src_mask, std::int64_t b, std::int64_t s) const {
    std::vector<std::vector<T>> step_masks(static_cast<std::size_t>(s),
                                           std::vector<T>(static_cast<std::size_t>(b)));
    for (std::int64_t t = 0; t < s; ++t)
      for (std::int64_t i = 0; i < b; ++i)
        step_masks[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] =
            static_cast<T>(src_mask[static_cast<std::size_t>(i * s + t)]);

    std::vector<Tensor<T>> xs(static_cast<std::size_t>(s));
    for (std::int64_t t = 0; t < s; ++t) {
      std::vector<std::int32_t> ids(static_cast<std::size_t>(b));
      for (std::int64_t i = 0; i < b; ++i)
        ids[static_cast<std::size_t>(i)] = src_ids[static_cast<std::size_t>(i * s + t)];
      xs[static_cast<std::size_t>(t)] = src_embed_.lookup(tape, ids);
    }

    Encoded out;
    out.decoder_init.resize(static_cast<std::size_t>(cfg_.layers));
    for (int layer = 0; layer < cfg_.layers; ++layer) {
      typename LstmCell<T>::State fw_final, bw_final;
      auto fw = run_direction(tape, enc_fw_[static_cast<std::size_t>(layer)], xs, step_masks,
                              false, fw_final);
      auto bw = run_direction(tape, enc_bw_[static_cast<std::size_t>(layer)], xs, step_masks,
                              true, bw_final);
      for (std::int64_t t = 0; t < s; ++t)
        xs[static_cast<std::size_t>(t)] = concat_cols(tape, fw[static_cast<std::size_t>(t)],
                                                      bw[static_cast<std::size_t>(t)]);
      out.decoder_init[static_cast<std::size_t>(layer)] = {
          concat_cols(tape, fw_final.h, bw_final.h), concat_cols(tape, fw_final.c, bw_final.c)};
    }
    out.states = stack_time(tape, xs);
    Tensor<T> m({b, 1, s});
    for (std::int64_t i = 0; i < b * s; ++i) m(i) = static_cast<T>(src_mask[static_cast<std::size_t>(i)]);
    out.src_mask = m;
    return out;
  }

  // One decoder step: embed the token, concatenate the input-fed attentional
  // state, run the stack, attend, and return the new attentional state.
  Tensor<T> decoder_step(Tape<T>& tape, const std::vector<std::int32_t>& ids,
                         std::vector<typename LstmCell<T>::State>& states,
                         const Tensor<T>& attn_state, const Tensor<T>& enc_states,
                         const Tensor<T>* src_mask) const {
    Tensor<T> x = concat_cols(tape, tgt_embed_.lookup(tape, ids), attn_state);
    for (int layer = 0; layer < cfg_.layers; ++layer) {
      auto& st = states[static_cast<std::size_t>(layer)];
      st = dec_[static_cast<std::size_t>(layer)].step(tape, x, st);
      x = st.h;
    }
    return attn_.forward(tape, x, enc_states, src_mask);
  }

  Tensor<T> output_logits(Tape<T>& tape, const Tensor<T>& h) const {
    if (!cfg_.tie_embeddings) return proj_.forward(tape, h);
    return add_bias(tape, tgt_embed_.tied_logits(tape, h), proj_bias_);
  }

  class Context : public DecodeContext<T> {
   public:
    Context(const LstmModel* model, std::span<const std::int32_t> src) : model_(model) {
      Tape<T> tape = Tape<T>::no_grad();
      std::int64_t s = std::max<std::int64_t>(1, static_cast<std::int64_t>(src.size()));
      std::vector<std::int32_t> ids(src.begin(), src.end());
      std::vector<float> mask(static_cast<std::size_t>(s), 1.0f);
      if (ids.empty()) {
        ids.push_back(Vocab::pad_id);
        mask[0] = 0.0f;
      }
      enc_ = std::make_shared<Encoded>(model->encode_batch(tape, ids, mask, 1, s));
      states_ = enc_->decoder_init;
      attn_state_ = Tensor<T>({1, model->cfg_.embedding_dim});
      advance(Vocab::bos_id);
    }

    std::unique_ptr<DecodeContext<T>> clone() const override {
      auto c = std::unique_ptr<Context>(new Context(*this));
      // deep-copy mutable recurrent state; encoded source stays shared
      for (auto& s : c->states_) s = {s.h.clone(), s.c.clone()};
      c->attn_state_ = c->attn_state_.clone();
      return c;
    }

    const std::vector<double>& next_logprobs() override { return cache_; }

    void push(std::int32_t token) override { advance(token); }

   private:
    void advance(std::int32_t token) {
      Tape<T> tape = Tape<T>::no_grad();
      attn_state_ = model_->decoder_step(tape, {token}, states_, attn_state_, enc_->states,
                                         &enc_->src_mask);
      Tensor<T> logits = model_->output_logits(tape, attn_state_);
      cache_ = log_softmax_row(logits.data(), logits.dim(1));
    }

    const LstmModel* model_;
    std::shared_ptr<Encoded> enc_;
    std::vector<typename LstmCell<T>::State> states_;
    Tensor<T> attn_state_;
    std::vector<double> cache_;
  };

  ModelConfig cfg_;
  FactorizationScheme scheme_;
  std::vector<std::string> warnings_;
  Embedding<T> src_embed_, tgt_embed_;
  std::vector<LstmCell<T>> enc_fw_, enc_bw_;
  std::vector<LstmCell<T>> dec_;
  LuongAttention<T> attn_;
  Linear<T> proj_;
  Tensor<T> proj_bias_;  // tied case only
};

}  // namespace lrnmt
