#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "lrnmt/bpe.hpp"
#include "lrnmt/data.hpp"

using namespace lrnmt;

TEST_CASE("vocab: build, reserved ids, frequency order") {
  Vocab v = Vocab::build({"a a b"}, 10);
  CHECK(v.size() == 6);  // 4 reserved + a + b
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);
  CHECK(v.id("<pad>") == Vocab::pad_id);
  CHECK(v.id("missing") == Vocab::unk_id);
  CHECK(v.token(Vocab::eos_id) == "<eos>");
}

TEST_CASE("vocab: capacity smaller than distinct tokens maps the rarest to unk") {
  Vocab v = Vocab::build({"x x x y y z"}, 6);  // room for 2 real tokens
  CHECK(v.size() == 6);
  CHECK(v.id("x") == 4);
  CHECK(v.id("y") == 5);
  CHECK(v.id("z") == Vocab::unk_id);
}

TEST_CASE("vocab: frequency ties break lexicographically") {
  Vocab v = Vocab::build({"m k m k z"}, 7);
  CHECK(v.id("k") == 4);  // k before m at equal frequency
  CHECK(v.id("m") == 5);
  CHECK(v.id("z") == 6);
}

TEST_CASE("vocab: empty corpus is a contract error") {
  CHECK_THROWS_AS(Vocab::build({}, 10), ContractError);
  CHECK_THROWS_AS(Vocab::build({"", "  "}, 10), ContractError);
}

TEST_CASE("vocab: encode/decode round trip and persistence") {
  Vocab v = Vocab::build({"the cat sat", "the mat"}, 100);
  auto ids = v.encode("the cat sat on the mat");
  CHECK(ids.size() == 6);
  CHECK(ids[3] == Vocab::unk_id);  // "on" unseen
  CHECK(v.decode(v.encode("the cat sat")) == "the cat sat");

  std::string path = std::filesystem::temp_directory_path() / "lrnmt_vocab_test.txt";
  v.save(path);
  Vocab loaded = Vocab::load(path);
  CHECK(loaded.size() == v.size());
  CHECK(loaded.id("cat") == v.id("cat"));
}

TEST_CASE("bpe: zero merges tokenizes to characters with the word-end marker") {
  BpeModel model = BpeModel::learn({"ab"}, 0);
  auto toks = model.encode("ab");
  REQUIRE(toks.size() == 2);
  CHECK(toks[0] == "a");
  CHECK(toks[1] == "b</w>");
  CHECK(BpeModel::decode(toks) == "ab");
}

TEST_CASE("bpe: first learned merge is the most frequent pair (independent oracle)") {
  std::vector<std::string> corpus{"low lower low lowest", "low lower"};
  // oracle: count adjacent symbol pairs over char-split words directly
  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto& line : corpus)
    for (const auto& word : Vocab::split_whitespace(line)) {
      auto sym = BpeModel::word_to_symbols(word);
      for (std::size_t i = 0; i + 1 < sym.size(); ++i)
        ++counts[{sym[i], sym[i + 1]}];
    }
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;

  BpeModel model = BpeModel::learn(corpus, 1);
  REQUIRE(model.merges().size() == 1);
  CHECK(model.merges()[0] == best->first);
}

TEST_CASE("bpe: decode(encode(s)) is identity on random whitespace-normalized strings") {
  Rng rng(77);
  const std::string alphabet = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::vector<std::string> corpus;
  for (int i = 0; i < 50; ++i) {
    std::string line;
    int words = 1 + static_cast<int>(rng.uniform_int(6));
    for (int w = 0; w < words; ++w) {
      if (w) line += ' ';
      int len = 1 + static_cast<int>(rng.uniform_int(8));
      for (int c = 0; c < len; ++c)
        line += alphabet[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(alphabet.size())))];
    }
    corpus.push_back(line);
  }
  BpeModel model = BpeModel::learn(corpus, 40);
  for (int i = 0; i < 1000; ++i) {
    std::string line;
    int words = 1 + static_cast<int>(rng.uniform_int(5));
    for (int w = 0; w < words; ++w) {
      if (w) line += ' ';
      int len = 1 + static_cast<int>(rng.uniform_int(10));
      for (int c = 0; c < len; ++c)
        line += alphabet[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(alphabet.size())))];
    }
    CHECK(BpeModel::decode(model.encode(line)) == line);
  }
}

TEST_CASE("bpe: persistence round trip") {
  BpeModel model = BpeModel::learn({"banana bandana"}, 5);
  std::string path = std::filesystem::temp_directory_path() / "lrnmt_bpe_test.txt";
  model.save(path);
  BpeModel loaded = BpeModel::load(path);
  CHECK(loaded.merges() == model.merges());
  CHECK(loaded.encode("banana") == model.encode("banana"));
}

TEST_CASE("synthetic tasks: copy, reverse, determinism") {
  Corpus copy = synthetic_task(SyntheticKind::copy, 20, 1, 8, 50, 42);
  for (const auto& [s, t] : copy) CHECK(s == t);

  Corpus rev = synthetic_task(SyntheticKind::reverse, 20, 3, 3, 20, 42);
  for (const auto& [s, t] : rev) {
    auto st = Vocab::split_whitespace(s);
    auto tt = Vocab::split_whitespace(t);
    std::reverse(st.begin(), st.end());
    CHECK(st == tt);
  }
  // spot value: "1 2 3" reverses to "3 2 1"
  std::vector<std::int32_t> dummy;
  Corpus one{{"1 2 3", ""}};
  auto toks = Vocab::split_whitespace(one[0].first);
  std::reverse(toks.begin(), toks.end());
  CHECK(toks == std::vector<std::string>{"3", "2", "1"});

  Corpus again = synthetic_task(SyntheticKind::copy, 20, 1, 8, 50, 42);
  CHECK(again == copy);
  Corpus other = synthetic_task(SyntheticKind::copy, 20, 1, 8, 50, 43);
  CHECK(other != copy);
  CHECK_THROWS_AS(synthetic_task(SyntheticKind::copy, 1, 1, 8, 5, 1), ContractError);
}

TEST_CASE("batching: effective batch 8 x 16 = 128 and epoch coverage") {
  Corpus corpus = synthetic_task(SyntheticKind::reverse, 30, 1, 12, 700, 5);
  Vocab v = Vocab::build([&] {
    std::vector<std::string> lines;
    for (auto& [s, t] : corpus) lines.push_back(s);
    return lines;
  }(), 100);
  auto encoded = encode_corpus(corpus, v, v);

  BatchPlan plan;
  plan.min_sentences = 16;
  plan.max_sentences = 16;
  plan.accumulation = 8;
  plan.seed = 3;
  CHECK(plan.effective_batch() == 128);

  auto groups = make_batches(encoded, plan, 0);
  // full groups hold exactly 8 mini-batches of 16 sentences
  CHECK(groups[0].size() == 8);
  std::int64_t first_group = 0;
  for (const auto& b : groups[0]) first_group += b.size;
  CHECK(first_group == 128);

  // multiset of emitted sentences equals the corpus
  std::map<std::vector<std::int32_t>, int> seen, expect;
  std::int64_t emitted = 0;
  for (const auto& g : groups)
    for (const auto& b : g) {
      emitted += b.size;
      for (std::int64_t i = 0; i < b.size; ++i) {
        std::vector<std::int32_t> key;
        for (std::int64_t j = 0; j < b.src_len; ++j)
          if (b.src_mask[static_cast<std::size_t>(i * b.src_len + j)] > 0.5f)
            key.push_back(b.src[static_cast<std::size_t>(i * b.src_len + j)]);
        ++seen[key];
      }
    }
  for (const auto& p : encoded) ++expect[p.src];
  CHECK(emitted == static_cast<std::int64_t>(encoded.size()));
  CHECK(seen == expect);
}

TEST_CASE("batching: mini-batch sizes stay inside the plan range") {
  Corpus corpus = synthetic_task(SyntheticKind::copy, 10, 1, 6, 300, 8);
  Vocab v = Vocab::build({"1 2 3 4 5 6 7 8 9 10"}, 64);
  auto encoded = encode_corpus(corpus, v, v);
  BatchPlan plan;
  plan.min_sentences = 12;
  plan.max_sentences = 16;
  plan.accumulation = 2;
  plan.seed = 9;
  auto groups = make_batches(encoded, plan, 1);
  std::int64_t total = 0;
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    for (std::size_t bi = 0; bi < groups[gi].size(); ++bi) {
      const Batch& b = groups[gi][bi];
      total += b.size;
      bool last = gi + 1 == groups.size() && bi + 1 == groups[gi].size();
      if (!last) {
        CHECK(b.size >= plan.min_sentences);
        CHECK(b.size <= plan.max_sentences);
      }
    }
  CHECK(total == static_cast<std::int64_t>(encoded.size()));
}

TEST_CASE("batching: padding sits exactly where the mask is off") {
  std::vector<TokenizedPair> pairs{{{5, 6, 7}, {8}}, {{9}, {10, 11}}};
  Batch b = make_batch(pairs);
  CHECK(b.src_len == 3);
  CHECK(b.tgt_len == 3);  // max target + eos
  for (std::int64_t i = 0; i < b.size; ++i) {
    for (std::int64_t j = 0; j < b.src_len; ++j) {
      bool masked = b.src_mask[static_cast<std::size_t>(i * b.src_len + j)] < 0.5f;
      CHECK(masked == (b.src[static_cast<std::size_t>(i * b.src_len + j)] == Vocab::pad_id));
    }
    for (std::int64_t j = 0; j < b.tgt_len; ++j) {
      bool masked = b.tgt_mask[static_cast<std::size_t>(i * b.tgt_len + j)] < 0.5f;
      bool padded = b.tgt_out[static_cast<std::size_t>(i * b.tgt_len + j)] == Vocab::pad_id;
      CHECK(masked == padded);
    }
    CHECK(b.tgt_in[static_cast<std::size_t>(i * b.tgt_len)] == Vocab::bos_id);
  }
  CHECK(b.token_count() == 2 + 3);  // (1 + eos) + (2 + eos)
  CHECK_THROWS_AS(make_batch({}), ContractError);
}

TEST_CASE("parallel corpus io round trip and mismatch detection") {
  namespace fs = std::filesystem;
  std::string src = fs::temp_directory_path() / "lrnmt_data_a.src";
  std::string tgt = fs::temp_directory_path() / "lrnmt_data_a.tgt";
  Corpus corpus{{"1 2", "2 1"}, {"3", "3"}};
  save_parallel(corpus, src, tgt);
  CHECK(load_parallel(src, tgt) == corpus);

  std::string bad = fs::temp_directory_path() / "lrnmt_data_bad.tgt";
  save_parallel({{"x", "y"}}, bad + ".src", bad);
  CHECK_THROWS_AS(load_parallel(src, bad), IoError);
}
