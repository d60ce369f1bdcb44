#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lrnmt/trainer.hpp"

using namespace lrnmt;

namespace {

namespace fs = std::filesystem;

ModelConfig overfit_config(ModelFamily family) {
  ModelConfig cfg;
  cfg.family = family;
  cfg.layers = 1;
  cfg.heads = 2;
  if (family == ModelFamily::transformer) {
    cfg.embedding_dim = 16;
    cfg.ff_dim = 32;
    cfg.attention_dim = 16;
  } else {
    cfg.embedding_dim = 8;
    cfg.hidden_dim = 16;
    cfg.tie_embeddings = true;
  }
  cfg.src_vocab = 12;
  cfg.tgt_vocab = 12;
  return cfg;
}

std::vector<TokenizedPair> single_pair() {
  return {{{4, 5, 6, 7}, {7, 6, 5, 4}}};
}

}  // namespace

TEST_CASE("lr schedule: crossover, monotonicity, spot value") {
  double at_warmup = warmup_inv_sqrt_lr(4000, 512, 4000);
  double rising = warmup_inv_sqrt_lr(3999, 512, 4000);
  double falling = warmup_inv_sqrt_lr(4001, 512, 4000);
  // both branches meet at the warmup step
  CHECK(at_warmup == doctest::Approx(std::pow(512.0, -0.5) * std::pow(4000.0, -0.5)).epsilon(1e-12));
  CHECK(at_warmup == doctest::Approx(6.988e-4).epsilon(1e-3));
  CHECK(rising < at_warmup);
  CHECK(falling < at_warmup);
  for (std::int64_t s = 1; s < 200; ++s)
    CHECK(warmup_inv_sqrt_lr(s, 64, 200) < warmup_inv_sqrt_lr(s + 1, 64, 200));
  for (std::int64_t s = 200; s < 400; ++s)
    CHECK(warmup_inv_sqrt_lr(s, 64, 200) > warmup_inv_sqrt_lr(s + 1, 64, 200));
  CHECK_THROWS_AS(warmup_inv_sqrt_lr(0, 512, 4000), ContractError);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Rng rng(1);
  Tensor<float> w = Tensor<float>::uniform({4, 4}, rng, -1, 1);
  Tensor<float> copy = w.clone();
  std::vector<ParamRef<float>> params{{"w", LayerGroup::other, true, &w}};
  Adam<float> opt{AdamOptions{}};
  opt.zero_grad(params);
  opt.step(params, 0.01);
  CHECK(w.same_values(copy));
}

TEST_CASE("adam: first-step magnitude is lr after bias correction") {
  Tensor<double> w = Tensor<double>::scalar(1.0);
  std::vector<ParamRef<double>> params{{"w", LayerGroup::other, true, &w}};
  Adam<double> opt{AdamOptions{}};
  opt.zero_grad(params);
  w.grad()[0] = 0.37;  // any nonzero gradient
  double lr = 0.01;
  opt.step(params, lr);
  // m-hat = g, v-hat = g^2, so the update is lr * g / (|g| + eps) ~= lr * sign(g)
  CHECK(1.0 - w(0) == doctest::Approx(lr).epsilon(1e-6));
}

TEST_CASE("train_step: accumulating identical mini-batches equals one batch") {
  ModelConfig cfg = overfit_config(ModelFamily::transformer);
  Batch b = make_batch(single_pair());

  auto run = [&](int copies) {
    auto model = build_model<float>(cfg, FactorizationScheme::none(), 99);
    Adam<float> opt{AdamOptions{}};
    std::vector<Batch> group(static_cast<std::size_t>(copies), b);
    double loss = train_step(*model, group, opt, 0.01);
    return std::make_pair(loss, std::move(model));
  };
  auto [loss1, m1] = run(1);
  auto [loss3, m3] = run(3);
  CHECK(loss1 == doctest::Approx(loss3).epsilon(1e-6));
  auto p1 = m1->params();
  auto p3 = m3->params();
  for (std::size_t i = 0; i < p1.size(); ++i)
    for (std::int64_t j = 0; j < p1[i].tensor->size(); ++j)
      CHECK(std::abs((*p1[i].tensor)(j) - (*p3[i].tensor)(j)) <= 1e-6);
}

TEST_CASE("train_step: empty group is a contract error") {
  ModelConfig cfg = overfit_config(ModelFamily::transformer);
  auto model = build_model<float>(cfg, FactorizationScheme::none(), 1);
  Adam<float> opt{AdamOptions{}};
  CHECK_THROWS_AS(train_step(*model, {}, opt, 0.01), ContractError);
}

TEST_CASE("training aborts with the step number on a non-finite loss") {
  ModelConfig cfg = overfit_config(ModelFamily::transformer);
  auto model = build_model<float>(cfg, FactorizationScheme::none(), 1);
  for (auto& p : model->params())
    if (p.name == "proj.W")
      (*p.tensor)(0) = std::numeric_limits<float>::infinity();
  Adam<float> opt{AdamOptions{}};
  TrainOptions opts;
  opts.steps = 3;
  opts.plan.min_sentences = 1;
  opts.plan.max_sentences = 1;
  opts.plan.accumulation = 1;
  try {
    train_model(*model, single_pair(), {}, opt, opts);
    FAIL("expected abort");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("step 1") != std::string::npos);
  }
}

TEST_CASE("overfit: 500 single-sentence steps reach loss < 0.1 on all four combos") {
  for (ModelFamily family : {ModelFamily::transformer, ModelFamily::lstm}) {
    for (bool factorized : {false, true}) {
      ModelConfig cfg = overfit_config(family);
      FactorizationScheme scheme =
          factorized ? FactorizationScheme::in_training({LayerGroup::embed_projection},
                                                        cfg.embedding_dim / 2)
                     : FactorizationScheme::none();
      auto model = build_model<float>(cfg, scheme, 7);
      AdamOptions aopts;
      if (family == ModelFamily::lstm) aopts.beta2 = 0.999;
      Adam<float> opt{aopts};
      TrainOptions opts;
      opts.steps = 500;
      opts.plan.min_sentences = 1;
      opts.plan.max_sentences = 1;
      opts.plan.accumulation = 1;
      opts.plan.seed = 5;
      opts.warmup = 50;
      opts.lstm_lr = 0.003;
      opts.validate_every = 1000;  // keep the loop quiet
      TrainResult result = train_model(*model, single_pair(), {}, opt, opts);
      INFO(family_name(family) << (factorized ? " factorized" : " dense"));
      CHECK(result.final_train_loss < 0.1);
    }
  }
}

TEST_CASE("determinism: same seed gives identical losses and parameters") {
  ModelConfig cfg = overfit_config(ModelFamily::transformer);
  Corpus corpus = synthetic_task(SyntheticKind::reverse, 8, 1, 5, 60, 11);
  std::vector<std::string> lines;
  for (auto& [s, t] : corpus) lines.push_back(s);
  Vocab v = Vocab::build(lines, 20);
  cfg.src_vocab = v.size();
  cfg.tgt_vocab = v.size();
  auto encoded = encode_corpus(corpus, v, v);

  auto run = [&]() {
    auto model = build_model<float>(cfg, FactorizationScheme::none(), 123);
    Adam<float> opt{AdamOptions{}};
    TrainOptions opts;
    opts.steps = 20;
    opts.plan.min_sentences = 4;
    opts.plan.max_sentences = 6;
    opts.plan.accumulation = 2;
    opts.plan.seed = 123;
    opts.validate_every = 5;
    TrainResult r = train_model(*model, encoded, {}, opt, opts);
    std::vector<float> flat;
    for (auto& p : model->params())
      flat.insert(flat.end(), p.tensor->data(), p.tensor->data() + p.tensor->size());
    return std::make_pair(r, flat);
  };
  auto [r1, w1] = run();
  auto [r2, w2] = run();
  REQUIRE(r1.metrics.size() == r2.metrics.size());
  for (std::size_t i = 0; i < r1.metrics.size(); ++i) {
    CHECK(r1.metrics[i].train_loss == r2.metrics[i].train_loss);  // exact
    CHECK(r1.metrics[i].step == r2.metrics[i].step);
  }
  CHECK(w1 == w2);
}

TEST_CASE("checkpoint: save/load round trip is forward-bit-identical") {
  ModelConfig cfg = overfit_config(ModelFamily::lstm);
  auto model = build_model<float>(
      cfg, FactorizationScheme::in_training({LayerGroup::embed_projection}, 4), 3);
  Adam<float> opt{AdamOptions{}};
  Batch b = make_batch(single_pair());
  train_step(*model, std::vector<Batch>{b}, opt, 0.01, 5.0);

  std::string path = fs::temp_directory_path() / "lrnmt_ckpt_test.ckpt";
  save_checkpoint(*model, &opt, 1, path);
  auto loaded = load_checkpoint<float>(path);
  CHECK(loaded.step == 1);
  CHECK(loaded.has_optimizer);
  CHECK(loaded.optimizer.step_count() == opt.step_count());

  auto pa = model->params();
  auto pb = loaded.model->params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].tensor->same_values(*pb[i].tensor));

  Tape<float> t = Tape<float>::no_grad();
  float la = model->forward_loss(t, b).mean_loss(0);
  float lb = loaded.model->forward_loss(t, b).mean_loss(0);
  CHECK(la == lb);  // bit-identical at equal precision

  // another optimizer step after reload matches continuing the original
  train_step(*model, std::vector<Batch>{b}, opt, 0.01, 5.0);
  train_step(*loaded.model, std::vector<Batch>{b}, loaded.optimizer, 0.01, 5.0);
  auto qa = model->params();
  auto qb = loaded.model->params();
  for (std::size_t i = 0; i < qa.size(); ++i) CHECK(qa[i].tensor->same_values(*qb[i].tensor));
}

TEST_CASE("checkpoint: header enumerates every parameter name") {
  ModelConfig cfg = overfit_config(ModelFamily::transformer);
  auto model = build_model<float>(cfg, FactorizationScheme::none(), 3);
  std::string path = fs::temp_directory_path() / "lrnmt_ckpt_header.ckpt";
  save_checkpoint(*model, static_cast<Adam<float>*>(nullptr), 0, path);
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (auto& p : model->params())
    CHECK(text.find("tensor " + p.name + " ") != std::string::npos);
}

TEST_CASE("checkpoint: distinct errors for corrupt, truncated, missing, mismatched") {
  ModelConfig cfg = overfit_config(ModelFamily::transformer);
  auto model = build_model<float>(cfg, FactorizationScheme::none(), 3);
  std::string path = fs::temp_directory_path() / "lrnmt_ckpt_err.ckpt";
  save_checkpoint(*model, static_cast<Adam<float>*>(nullptr), 0, path);
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  auto write_bytes = [](const std::string& p, const std::string& data) {
    std::ofstream out(p, std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  };

  // bad magic
  std::string corrupt = bytes;
  corrupt[0] = 'X';
  write_bytes(path + ".bad", corrupt);
  CHECK_THROWS_AS(load_checkpoint<float>(path + ".bad"), CheckpointFormatError);

  // truncated payload
  write_bytes(path + ".trunc", bytes.substr(0, bytes.size() - 64));
  CHECK_THROWS_AS(load_checkpoint<float>(path + ".trunc"), CheckpointIntegrityError);

  // renamed tensor -> the model's tensor is missing
  std::string missing = bytes;
  auto pos = missing.find("tensor src_embed.E ");
  REQUIRE(pos != std::string::npos);
  missing.replace(pos, 19, "tensor src_embed.X ");
  write_bytes(path + ".miss", missing);
  CHECK_THROWS_AS(load_checkpoint<float>(path + ".miss"), CheckpointMissingTensorError);

  // config edited so shapes disagree
  std::string mismatched = bytes;
  pos = mismatched.find("model.embedding_dim = 16");
  REQUIRE(pos != std::string::npos);
  mismatched.replace(pos, 24, "model.embedding_dim = 32");
  write_bytes(path + ".shape", mismatched);
  CHECK_THROWS_AS(load_checkpoint<float>(path + ".shape"), CheckpointShapeError);

  // wrong precision request
  CHECK_THROWS_AS(load_checkpoint<double>(path), CheckpointFormatError);
}

TEST_CASE("gradient clipping caps the global norm") {
  Tensor<double> a = Tensor<double>::from_vector({2}, {3.0, 4.0});
  a.ensure_grad();
  a.grad() = {30.0, 40.0};  // norm 50
  std::vector<ParamRef<double>> params{{"a", LayerGroup::other, true, &a}};
  double before = clip_global_norm(params, 5.0);
  CHECK(before == doctest::Approx(50.0));
  CHECK(a.grad()[0] == doctest::Approx(3.0));
  CHECK(a.grad()[1] == doctest::Approx(4.0));
}
