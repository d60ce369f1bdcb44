#pragma once

#include <map>
#include <set>

#include "lrnmt/config.hpp"
#include "lrnmt/layers.hpp"

namespace lrnmt {

enum class ModelFamily { lstm, transformer };

inline const char* family_name(ModelFamily f) {
  return f == ModelFamily::lstm ? "lstm" : "transformer";
}

inline ModelFamily family_from_name(const std::string& s) {
  if (s == "lstm") return ModelFamily::lstm;
  if (s == "transformer") return ModelFamily::transformer;
  throw ConfigError("unknown model family: " + s);
}

struct ModelConfig {
  ModelFamily family = ModelFamily::transformer;
  int layers = 2;
  std::int64_t embedding_dim = 64;
  std::int64_t hidden_dim = 64;     // LSTM decoder size; encoder runs hidden_dim/2 per direction
  std::int64_t ff_dim = 128;        // transformer feed-forward size
  std::int64_t attention_dim = 64;  // transformer attention size
  int heads = 4;
  std::int64_t src_vocab = 64;
  std::int64_t tgt_vocab = 64;
  bool tie_embeddings = false;
  int total_batch = 32;  // reference effective batch size for this preset
  std::string preset = "custom";

  void to_doc(KvDoc& doc, const std::string& prefix = "model.") const {
    doc.set(prefix + "family", family_name(family));
    doc.set_int(prefix + "layers", layers);
    doc.set_int(prefix + "embedding_dim", embedding_dim);
    doc.set_int(prefix + "hidden_dim", hidden_dim);
    doc.set_int(prefix + "ff_dim", ff_dim);
    doc.set_int(prefix + "attention_dim", attention_dim);
    doc.set_int(prefix + "heads", heads);
    doc.set_int(prefix + "src_vocab", src_vocab);
    doc.set_int(prefix + "tgt_vocab", tgt_vocab);
    doc.set_bool(prefix + "tie_embeddings", tie_embeddings);
    doc.set_int(prefix + "total_batch", total_batch);
    doc.set(prefix + "preset", preset);
  }

  static ModelConfig from_doc(const KvDoc& doc, const std::string& prefix = "model.") {
    ModelConfig c;
    c.family = family_from_name(doc.get(prefix + "family"));
    c.layers = static_cast<int>(doc.get_int(prefix + "layers"));
    c.embedding_dim = doc.get_int(prefix + "embedding_dim");
    c.hidden_dim = doc.get_int(prefix + "hidden_dim");
    c.ff_dim = doc.get_int(prefix + "ff_dim");
    c.attention_dim = doc.get_int(prefix + "attention_dim");
    c.heads = static_cast<int>(doc.get_int(prefix + "heads"));
    c.src_vocab = doc.get_int(prefix + "src_vocab");
    c.tgt_vocab = doc.get_int(prefix + "tgt_vocab");
    c.tie_embeddings = doc.get_bool(prefix + "tie_embeddings");
    c.total_batch = static_cast<int>(doc.get_int_or(prefix + "total_batch", 32));
    c.preset = doc.get_or(prefix + "preset", "custom");
    return c;
  }
};

// Named presets. The paper-scale presets exist for parameter accounting and
// spectrum work; the toy presets are the trainable desk-scale defaults.
inline ModelConfig preset_config(const std::string& name) {
  ModelConfig c;
  c.preset = name;
  if (name == "lstm-iwslt") {
    c.family = ModelFamily::lstm;
    c.layers = 3;
    c.embedding_dim = 256;
    c.hidden_dim = 512;
    c.src_vocab = 30000;
    c.tgt_vocab = 46000;
    c.tie_embeddings = true;
    c.total_batch = 64;
  } else if (name == "transformer-de" || name == "transformer-pt" || name == "transformer-tr") {
    c.family = ModelFamily::transformer;
    c.embedding_dim = 512;
    c.attention_dim = 512;
    c.heads = 8;
    c.src_vocab = 15000;
    c.tgt_vocab = 15000;
    c.tie_embeddings = false;
    if (name == "transformer-de") {
      c.layers = 3;
      c.ff_dim = 1024;
      c.total_batch = 128;
    } else if (name == "transformer-pt") {
      c.layers = 4;
      c.ff_dim = 512;
      c.total_batch = 96;
    } else {
      c.layers = 5;
      c.ff_dim = 512;
      c.total_batch = 96;
    }
  } else if (name == "toy-lstm") {
    c.family = ModelFamily::lstm;
    c.layers = 2;
    c.embedding_dim = 32;
    c.hidden_dim = 64;
    c.src_vocab = 64;
    c.tgt_vocab = 64;
    c.tie_embeddings = true;
    c.total_batch = 32;
  } else if (name == "toy-transformer") {
    c.family = ModelFamily::transformer;
    c.layers = 2;
    c.embedding_dim = 64;
    c.hidden_dim = 64;
    c.ff_dim = 128;
    c.attention_dim = 64;
    c.heads = 4;
    c.src_vocab = 64;
    c.tgt_vocab = 64;
    c.tie_embeddings = false;
    c.total_batch = 32;
  } else {
    throw ConfigError("unknown preset: " + name +
                      " (expected lstm-iwslt, transformer-de, transformer-pt, transformer-tr, "
                      "toy-lstm, toy-transformer)");
  }
  return c;
}

// ---------------------------------------------------------------------------
// factorization scheme
// ---------------------------------------------------------------------------

enum class SchemeMode { none, in_training, post_training };

inline const char* scheme_mode_name(SchemeMode m) {
  switch (m) {
    case SchemeMode::none: return "none";
    case SchemeMode::in_training: return "in_training";
    case SchemeMode::post_training: return "post_training";
  }
  return "?";
}

inline SchemeMode scheme_mode_from_name(const std::string& s) {
  if (s == "none") return SchemeMode::none;
  if (s == "in_training") return SchemeMode::in_training;
  if (s == "post_training") return SchemeMode::post_training;
  throw ConfigError("unknown scheme mode: " + s);
}

struct FactorizationScheme {
  SchemeMode mode = SchemeMode::none;
  std::set<LayerGroup> groups;              // which layer groups factorize
  std::int64_t inner_size = 0;              // in-training inner size p
  std::map<LayerGroup, std::int64_t> rank_map;  // post-training; 0 = full rank per matrix

  static FactorizationScheme none() { return {}; }

  static FactorizationScheme in_training(std::set<LayerGroup> groups, std::int64_t inner) {
    FactorizationScheme s;
    s.mode = SchemeMode::in_training;
    s.groups = std::move(groups);
    s.inner_size = inner;
    return s;
  }

  static FactorizationScheme post_training(std::map<LayerGroup, std::int64_t> ranks) {
    FactorizationScheme s;
    s.mode = SchemeMode::post_training;
    for (const auto& [g, r] : ranks) s.groups.insert(g);
    s.rank_map = std::move(ranks);
    return s;
  }

  bool selects(LayerGroup g) const { return mode != SchemeMode::none && groups.count(g) > 0; }

  std::int64_t inner_for(LayerGroup g, std::int64_t n, std::int64_t m) const {
    if (mode == SchemeMode::in_training) return inner_size;
    auto it = rank_map.find(g);
    std::int64_t r = it == rank_map.end() ? 0 : it->second;
    return r == 0 ? std::min(n, m) : r;
  }

  // Group sets follow the nesting embed < +feed_forward < +attention.
  void validate() const {
    if (mode == SchemeMode::none) {
      if (!groups.empty()) throw ConfigError("scheme none cannot select layer groups");
      return;
    }
    for (LayerGroup g : groups)
      if (g != LayerGroup::embed_projection && g != LayerGroup::feed_forward &&
          g != LayerGroup::attention)
        throw ConfigError(std::string("group ") + layer_group_name(g) + " is not factorizable");
    if (mode == SchemeMode::in_training) {
      if (groups.empty()) throw ConfigError("in-training scheme selects no layer groups");
      if (!groups.count(LayerGroup::embed_projection))
        throw ConfigError("factorized layer groups must nest: embed_projection, then "
                          "+feed_forward, then +attention");
      if (groups.count(LayerGroup::attention) && !groups.count(LayerGroup::feed_forward))
        throw ConfigError("factorized layer groups must nest: attention requires feed_forward");
      if (inner_size < 1) throw ConfigError("in-training scheme requires a positive inner size");
    }
  }

  void to_doc(KvDoc& doc, const std::string& prefix = "scheme.") const {
    doc.set(prefix + "mode", scheme_mode_name(mode));
    std::string gs;
    for (LayerGroup g : groups) {
      if (!gs.empty()) gs += ",";
      gs += layer_group_name(g);
    }
    doc.set(prefix + "groups", gs);
    doc.set_int(prefix + "inner_size", inner_size);
    for (const auto& [g, r] : rank_map) doc.set_int(prefix + "rank." + layer_group_name(g), r);
  }

  static FactorizationScheme from_doc(const KvDoc& doc, const std::string& prefix = "scheme.") {
    FactorizationScheme s;
    s.mode = scheme_mode_from_name(doc.get_or(prefix + "mode", "none"));
    std::string gs = doc.get_or(prefix + "groups", "");
    std::size_t pos = 0;
    while (pos < gs.size()) {
      std::size_t comma = gs.find(',', pos);
      if (comma == std::string::npos) comma = gs.size();
      std::string part = gs.substr(pos, comma - pos);
      if (!part.empty()) s.groups.insert(layer_group_from_name(part));
      pos = comma + 1;
    }
    s.inner_size = doc.get_int_or(prefix + "inner_size", 0);
    for (const auto& key : doc.keys_with_prefix(prefix + "rank.")) {
      LayerGroup g = layer_group_from_name(key.substr(prefix.size() + 5));
      s.rank_map[g] = doc.get_int(key);
    }
    return s;
  }
};

// Comma list of group names, with common shorthands.
inline std::set<LayerGroup> parse_group_list(const std::string& text) {
  std::set<LayerGroup> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    std::string part = text.substr(pos, comma - pos);
    if (part == "embed" || part == "embed_projection")
      out.insert(LayerGroup::embed_projection);
    else if (part == "ff" || part == "feed_forward" || part == "feed-forward")
      out.insert(LayerGroup::feed_forward);
    else if (part == "attn" || part == "attention")
      out.insert(LayerGroup::attention);
    else if (!part.empty())
      throw ConfigError("unknown layer group: " + part);
    pos = comma + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// parameter accounting
// ---------------------------------------------------------------------------

// Flat description of every stored parameter of a dense (scheme-none) model.
// Builders construct exactly these tensors under exactly these names; the
// audit test in the model suite locks the two together.
struct ParamSpec {
  std::string name;
  LayerGroup group;
  Shape shape;
  bool factorizable;
};

inline std::vector<ParamSpec> enumerate_params(const ModelConfig& cfg) {
  std::vector<ParamSpec> out;
  auto mat = [&](std::string name, LayerGroup g, std::int64_t n, std::int64_t m, bool fact) {
    out.push_back({std::move(name), g, {n, m}, fact});
  };
  auto vec = [&](std::string name, LayerGroup g, std::int64_t n) {
    out.push_back({std::move(name), g, {n}, false});
  };
  const auto EP = LayerGroup::embed_projection;
  const auto AT = LayerGroup::attention;
  const auto FF = LayerGroup::feed_forward;
  const auto RC = LayerGroup::recurrent;
  const auto OT = LayerGroup::other;

  if (cfg.family == ModelFamily::lstm) {
    std::int64_t e = cfg.embedding_dim;
    std::int64_t hd = cfg.hidden_dim;       // decoder size
    std::int64_t he = cfg.hidden_dim / 2;   // encoder size per direction
    mat("src_embed.E", EP, cfg.src_vocab, e, true);
    mat("tgt_embed.E", EP, cfg.tgt_vocab, e, true);
    for (int i = 0; i < cfg.layers; ++i) {
      std::int64_t in = i == 0 ? e : 2 * he;
      for (const char* dir : {"fw", "bw"}) {
        std::string p = "encoder.l" + std::to_string(i) + "." + dir;
        mat(p + ".wx.W", RC, in, 4 * he, false);
        vec(p + ".wx.b", RC, 4 * he);
        mat(p + ".wh.W", RC, he, 4 * he, false);
      }
    }
    for (int i = 0; i < cfg.layers; ++i) {
      std::int64_t in = i == 0 ? 2 * e : hd;  // embedding + input-fed attentional state
      std::string p = "decoder.l" + std::to_string(i);
      mat(p + ".wx.W", RC, in, 4 * hd, false);
      vec(p + ".wx.b", RC, 4 * hd);
      mat(p + ".wh.W", RC, hd, 4 * hd, false);
    }
    mat("attn.wa.W", AT, hd, 2 * he, false);
    mat("attn.wc.W", AT, 2 * he + hd, e, false);
    vec("attn.wc.b", AT, e);
    if (!cfg.tie_embeddings) mat("proj.W", EP, e, cfg.tgt_vocab, true);
    vec("proj.b", EP, cfg.tgt_vocab);
  } else {
    std::int64_t d = cfg.embedding_dim, da = cfg.attention_dim, ff = cfg.ff_dim;
    mat("src_embed.E", EP, cfg.src_vocab, d, true);
    mat("tgt_embed.E", EP, cfg.tgt_vocab, d, true);
    auto attention = [&](const std::string& p) {
      mat(p + ".wq.W", AT, d, da, true);
      vec(p + ".wq.b", AT, da);
      mat(p + ".wk.W", AT, d, da, true);  // no key bias (softmax shift invariance)
      mat(p + ".wv.W", AT, d, da, true);
      vec(p + ".wv.b", AT, da);
      mat(p + ".wo.W", AT, da, d, true);
      vec(p + ".wo.b", AT, d);
    };
    auto norm = [&](const std::string& p) {
      vec(p + ".gain", OT, d);
      vec(p + ".bias", OT, d);
    };
    auto ffn = [&](const std::string& p) {
      mat(p + ".lin1.W", FF, d, ff, true);
      vec(p + ".lin1.b", FF, ff);
      mat(p + ".lin2.W", FF, ff, d, true);
      vec(p + ".lin2.b", FF, d);
    };
    for (int i = 0; i < cfg.layers; ++i) {
      std::string p = "encoder.l" + std::to_string(i);
      norm(p + ".ln1");
      attention(p + ".self");
      norm(p + ".ln2");
      ffn(p + ".ff");
    }
    norm("encoder.final_ln");
    for (int i = 0; i < cfg.layers; ++i) {
      std::string p = "decoder.l" + std::to_string(i);
      norm(p + ".ln1");
      attention(p + ".self");
      norm(p + ".ln2");
      attention(p + ".cross");
      norm(p + ".ln3");
      ffn(p + ".ff");
    }
    norm("decoder.final_ln");
    if (!cfg.tie_embeddings) mat("proj.W", EP, d, cfg.tgt_vocab, true);
    vec("proj.b", EP, cfg.tgt_vocab);
  }
  return out;
}

// Total stored parameters under a scheme. In-training and post-training
// schemes replace each factorizable matrix (n,m) in a selected group by
// p*(n+m) factor entries; everything else is untouched. Exact integer
// arithmetic.
inline std::int64_t param_count_with_scheme(const ModelConfig& cfg,
                                            const FactorizationScheme& scheme) {
  scheme.validate();
  std::int64_t total = 0;
  for (const ParamSpec& spec : enumerate_params(cfg)) {
    if (spec.shape.size() == 2 && spec.factorizable && scheme.selects(spec.group)) {
      std::int64_t n = spec.shape[0], m = spec.shape[1];
      std::int64_t p = scheme.inner_for(spec.group, n, m);
      if (p < 1 || p > std::min(n, m))
        throw ConfigError("inner size " + std::to_string(p) + " exceeds min(n,m) = " +
                          std::to_string(std::min(n, m)) + " for matrix " + spec.name);
      total += p * (n + m);
    } else {
      total += numel(spec.shape);
    }
  }
  return total;
}

// 100 * (1 - params(scheme) / params(none)).
inline double size_reduction(const ModelConfig& cfg, const FactorizationScheme& scheme) {
  std::int64_t base = param_count_with_scheme(cfg, FactorizationScheme::none());
  std::int64_t compressed = param_count_with_scheme(cfg, scheme);
  return 100.0 * (1.0 - static_cast<double>(compressed) / static_cast<double>(base));
}

}  // namespace lrnmt
