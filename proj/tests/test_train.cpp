#include <vts/train.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace vts;
using Catch::Approx;

namespace {

RunConfig trainer_cfg() {
  RunConfig cfg = desk_preset();
  cfg.model.video_frames = 16;
  cfg.model.mel_frames = 64;
  cfg.model.video_dim = 8;
  cfg.model.te_conv_layers = 2;
  cfg.model.te_conv_width = 6;
  cfg.model.te_lstm_layers = 1;
  cfg.model.te_lstm_hidden = 4;
  cfg.model.gu_layers = 2;
  cfg.model.gu_width = 6;
  cfg.model.ae_lstm_layers = 1;
  cfg.model.ae_lstm_hidden = 4;
  cfg.model.be_lstm_layers = 1;
  cfg.model.be_lstm_hidden = 4;
  cfg.model.background_dim = 3;
  cfg.model.dec_convt_width = 8;
  cfg.model.dec_blocks = 1;
  cfg.model.dec_hidden = 6;
  cfg.model.dec_conv_kernel = 3;
  cfg.model.dec_conv_width = 6;
  cfg.model.ad_convt_width = 6;
  cfg.model.ad_conv_width = 5;
  cfg.model.mwd_channels1 = 3;
  cfg.model.mwd_channels2 = 4;
  cfg.train.batch_size = 3;
  cfg.train.epochs = 4;
  cfg.train.warmup_steps = 2;
  cfg.train.ckpt_every = 2;
  cfg.train.seed = 42;
  return cfg;
}

data::LoadedCorpus in_memory_corpus(const RunConfig& cfg, int n, std::uint64_t seed) {
  data::LoadedCorpus c;
  c.samples = data::make_corpus(cfg, n, seed);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.by_id[c.samples[i].id] = i;
    ids.push_back(c.samples[i].id);
  }
  c.splits = data::make_splits(ids, seed, 1, 1);
  return c;
}

std::uint64_t params_hash(ad::ParamStore<float>& store) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto& [name, p] : store) {
    h = fnv1a64(name.data(), name.size(), h);
    h = fnv1a64(p.value().data(), p.value().numel() * sizeof(float), h);
  }
  return h;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "vts_train_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("learning-rate schedule emits the documented values", "[train][schedule]") {
  TrainConfig t;
  t.lr = 2e-3;
  t.warmup_steps = 100;
  t.decay_frac = 0.5;
  const std::size_t total = 1000;

  // warmup ramp: documented value at step s < warmup is lr*(s+1)/warmup
  REQUIRE(train::lr_at(0, total, t) == Approx(2e-3 / 100.0));
  REQUIRE(train::lr_at(99, total, t) == Approx(2e-3));
  // plateau at and after warmup, before decay
  REQUIRE(train::lr_at(100, total, t) == Approx(2e-3));
  REQUIRE(train::lr_at(200, total, t) == Approx(2e-3));
  REQUIRE(train::lr_at(499, total, t) == Approx(2e-3));
  // linear decay over the final half, reaching zero at the end
  REQUIRE(train::lr_at(500, total, t) == Approx(2e-3));
  REQUIRE(train::lr_at(750, total, t) == Approx(1e-3));
  REQUIRE(train::lr_at(999, total, t) == Approx(2e-3 / 500.0));
}

TEST_CASE("adamw single-step closed form", "[train][optimizer]") {
  ad::ParamStore<float> store;
  store.create("p", Tensor<float>({1}, 1.0f));
  store.at("p").grad()[0] = 1.0f;
  train::AdamW<float> opt(0.5, 0.999, 1e-8, 0.0);
  opt.step(store, 0.1);
  // bias-corrected first step moves by exactly lr (up to epsilon)
  REQUIRE(store.at("p").value()[0] == Approx(0.9).margin(1e-6));

  SECTION("decoupled weight decay shrinks parameters regardless of gradient") {
    ad::ParamStore<float> s2;
    s2.create("p", Tensor<float>({1}, 2.0f));
    s2.at("p").grad()[0] = 0.0f;
    train::AdamW<float> o2(0.5, 0.999, 1e-8, 0.1);
    o2.step(s2, 0.5);
    REQUIRE(s2.at("p").value()[0] == Approx(2.0 - 0.5 * 0.1 * 2.0));
  }
}

TEST_CASE("same seed gives identical metrics and parameters", "[train][determinism]") {
  const RunConfig cfg = trainer_cfg();
  const auto corpus = in_memory_corpus(cfg, 6, 5);
  train::Trainer a(cfg, &corpus), b(cfg, &corpus);
  for (int step = 0; step < 3; ++step) {
    const auto ma = a.train_step({0, 1, 2});
    const auto mb = b.train_step({0, 1, 2});
    REQUIRE(ma.l_g_total == mb.l_g_total);
    REQUIRE(ma.l_dt == mb.l_dt);
    REQUIRE(ma.l_dm == mb.l_dm);
  }
  REQUIRE(params_hash(a.generator_params()) == params_hash(b.generator_params()));
  REQUIRE(params_hash(a.discriminator_params()) == params_hash(b.discriminator_params()));
}

TEST_CASE("half-steps touch only their own parameter set", "[train][decoupling]") {
  const RunConfig cfg = trainer_cfg();
  const auto corpus = in_memory_corpus(cfg, 6, 6);
  train::Trainer t(cfg, &corpus);
  const std::uint64_t g_before = params_hash(t.generator_params());
  const std::uint64_t d_before = params_hash(t.discriminator_params());
  std::uint64_t g_mid = 0, d_mid = 0;
  t.train_step({0, 1}, [&] {
    g_mid = params_hash(t.generator_params());
    d_mid = params_hash(t.discriminator_params());
  });
  const std::uint64_t g_after = params_hash(t.generator_params());
  const std::uint64_t d_after = params_hash(t.discriminator_params());
  REQUIRE(g_mid == g_before);   // discriminator update left the generator alone
  REQUIRE(d_mid != d_before);   // discriminator actually moved
  REQUIRE(g_after != g_mid);    // generator moved in its own phase
  REQUIRE(d_after == d_mid);    // generator update left the discriminator alone
}

TEST_CASE("zero adversarial weight decouples the generator from the discriminators",
          "[train][decoupling]") {
  RunConfig cfg = trainer_cfg();
  cfg.train.lambda_adv = 0.0;
  const auto corpus = in_memory_corpus(cfg, 6, 7);
  train::Trainer t1(cfg, &corpus), t2(cfg, &corpus);
  // perturb one discriminator weight in t2; with lambda_adv = 0 the generator
  // update must be unaffected
  t2.discriminator_params().at("ad.mel.w").value()[0] += 0.5f;
  t1.train_step({0, 1, 2});
  t2.train_step({0, 1, 2});
  REQUIRE(params_hash(t1.generator_params()) == params_hash(t2.generator_params()));
}

TEST_CASE("every parameter receives a gradient early in training", "[train][coverage]") {
  const RunConfig cfg = trainer_cfg();
  const auto corpus = in_memory_corpus(cfg, 6, 8);
  train::Trainer t(cfg, &corpus);
  t.enable_grad_tracking();
  for (int step = 0; step < 4; ++step) t.train_step({0, 1, 2, 3});
  std::size_t untouched = 0;
  for (const auto& [name, p] : t.generator_params())
    if (!t.grad_touched().count(name) || !t.grad_touched().at(name)) {
      ++untouched;
      UNSCOPED_INFO("no gradient reached " << name);
    }
  for (const auto& [name, p] : t.discriminator_params())
    if (!t.grad_touched().count(name) || !t.grad_touched().at(name)) {
      ++untouched;
      UNSCOPED_INFO("no gradient reached " << name);
    }
  REQUIRE(untouched == 0);
}

TEST_CASE("non-finite losses abort with a diagnostic", "[train][errors]") {
  const RunConfig cfg = trainer_cfg();
  const auto corpus = in_memory_corpus(cfg, 6, 9);
  train::Trainer t(cfg, &corpus);
  t.generator_params().at("dec.out.b").value()[0] = std::nanf("");
  REQUIRE_THROWS_MATCHES(t.train_step({0, 1}), NumericError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("s0000")));
}

TEST_CASE("checkpoints round-trip and refuse wrong versions", "[train][checkpoint]") {
  const RunConfig cfg = trainer_cfg();
  const auto corpus = in_memory_corpus(cfg, 6, 10);
  train::Trainer t(cfg, &corpus);
  t.train_step({0, 1, 2});
  const auto dir = temp_dir("ckpt");
  const std::string path = (dir / "test.vsck").string();
  t.save(path);

  const auto ck = train::load_checkpoint(path);
  REQUIRE(config_hash(ck.cfg) == config_hash(cfg));
  REQUIRE(ck.trainer.at("global_step").get<std::size_t>() == 1);
  REQUIRE(ck.tensors.count("g/dec.out.w") == 1);
  REQUIRE(ck.tensors.count("d/ad.mel.w") == 1);
  REQUIRE(ck.tensors.count("optg_m/dec.out.w") == 1);

  SECTION("restoring into a different config is refused") {
    RunConfig other = cfg;
    other.train.lr *= 2;
    train::Trainer t2(other, &corpus);
    REQUIRE_THROWS_AS(t2.restore(ck), ConfigError);
  }

  SECTION("a wrong format version is refused with an explicit message") {
    std::string bytes = slurp(path);
    bytes[4] = 9;
    const std::string bad = (dir / "bad.vsck").string();
    std::ofstream(bad, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE_THROWS_MATCHES(train::load_checkpoint(bad), FormatError,
                           Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("version")));
  }
}

TEST_CASE("resumed training continues the uninterrupted run exactly", "[train][resume]") {
  const RunConfig cfg = trainer_cfg();  // 4 epochs, checkpoint every 2
  const auto corpus = in_memory_corpus(cfg, 6, 11);

  const auto dir_a = temp_dir("straight");
  train::Trainer a(cfg, &corpus);
  a.fit(dir_a.string());

  const auto dir_b = temp_dir("resumed");
  const auto ck = train::load_checkpoint((dir_a / "ckpt_epoch_00002.vsck").string());
  train::Trainer b(ck.cfg, &corpus);
  b.restore(ck);
  REQUIRE(b.epoch() == 2);
  b.fit(dir_b.string());

  // the resumed metrics rows must equal the tail of the straight run
  const std::string full = slurp((dir_a / "metrics.csv").string());
  const std::string tail = slurp((dir_b / "metrics.csv").string());
  REQUIRE(!tail.empty());
  REQUIRE(full.size() > tail.size());
  REQUIRE(full.substr(full.size() - tail.size()) == tail);

  // and the final checkpoints must be byte-identical
  REQUIRE(slurp((dir_a / "last.vsck").string()) == slurp((dir_b / "last.vsck").string()));
}

TEST_CASE("training runs are reproducible end to end", "[train][determinism]") {
  const RunConfig cfg = trainer_cfg();
  const auto corpus = in_memory_corpus(cfg, 6, 12);
  const auto dir_a = temp_dir("runA");
  const auto dir_b = temp_dir("runB");
  train::Trainer a(cfg, &corpus), b(cfg, &corpus);
  a.fit(dir_a.string());
  b.fit(dir_b.string());
  REQUIRE(slurp((dir_a / "metrics.csv").string()) == slurp((dir_b / "metrics.csv").string()));
  REQUIRE(slurp((dir_a / "metrics.csv").string()).starts_with(train::metrics_csv_header()));
}

TEST_CASE("inference accepts arbitrary reference lengths and silence", "[train][infer]") {
  const RunConfig cfg = trainer_cfg();
  const auto corpus = in_memory_corpus(cfg, 4, 13);
  train::Trainer t(cfg, &corpus);
  const auto& s = corpus.samples[0];

  SECTION("output length follows the video; reference length is free") {
    Tensor<float> short_ref({40, 80}, -3.0f);
    const auto out = train::infer(cfg, t.generator_params(), s.video, short_ref, 1);
    REQUIRE(out.dim(0) == 4 * s.video.dim(0));
    REQUIRE(out.dim(1) == 80);
    REQUIRE(out.all_finite());
  }
  SECTION("silence reference stays finite") {
    const auto out = train::infer(cfg, t.generator_params(), s.video, dsp::silence_mel(cfg.model), 1);
    REQUIRE(out.all_finite());
  }
}
