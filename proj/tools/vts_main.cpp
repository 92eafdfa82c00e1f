// vts: timbre-controlled video-to-sound pipeline.
//
// Subcommands: synth-data (build a synthetic paired corpus), train (fit the
// generator/discriminators), infer (render a mel -- and optionally audio --
// from video features plus a reference audio), eval (objective metrics over
// a corpus split, with code-ablation switches).
//
// Exit codes: 0 ok, 2 config error, 3 data/format error, 4 numeric
// divergence. VS_SEED overrides the configured seed.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <vts/config.hpp>
#include <vts/data.hpp>
#include <vts/dsp.hpp>
#include <vts/mel_invert.hpp>
#include <vts/metrics.hpp>
#include <vts/model.hpp>
#include <vts/plot.hpp>
#include <vts/tensor_file.hpp>
#include <vts/train.hpp>
#include <vts/wav.hpp>

namespace fs = std::filesystem;
using namespace vts;

namespace {

void apply_env_seed(RunConfig& cfg) {
  if (const char* s = std::getenv("VS_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s, &end, 10);
    if (!end || *end != '\0') throw ConfigError("VS_SEED must be a nonnegative integer, got '" + std::string(s) + "'");
    cfg.train.seed = v;
  }
}

void write_config_record(const std::string& out_dir, const RunConfig& cfg) {
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "config.txt");
  f << "# config_hash = " << config_hash(cfg) << "\n" << config_canonical_text(cfg);
}

std::uint64_t file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open file for hashing: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

ad::ParamStore<float> generator_from_checkpoint(const train::CheckpointData& ck) {
  Rng rng(derive_seed(ck.cfg.train.seed, 0x1217));
  auto gen = model::init_generator_params<float>(ck.cfg.model, rng);
  for (auto& [name, p] : gen) {
    const auto it = ck.tensors.find("g/" + name);
    if (it == ck.tensors.end()) throw FormatError("checkpoint is missing generator tensor g/" + name);
    if (it->second.shape() != p.value().shape())
      throw FormatError("checkpoint tensor g/" + name + " has an unexpected shape");
    p.value() = it->second;
  }
  return gen;
}

/// Mel of an arbitrary-length reference recording: the frame horizon follows
/// the file duration instead of the configured clip length.
Tensor<float> reference_mel(const Waveform& w, const ModelConfig& m) {
  ModelConfig ref_cfg = m;
  const auto frames = static_cast<int>((w.samples.size() + static_cast<std::size_t>(m.hop_size) - 1) /
                                       static_cast<std::size_t>(m.hop_size));
  ref_cfg.mel_frames = std::max({frames, m.rs_k_min, 8});
  return dsp::extract_mel(w, ref_cfg);
}

model::CodeMask mask_for_ablation(const std::string& ablate) {
  model::CodeMask mask;
  if (ablate == "no-temporal")
    mask.temporal = false;
  else if (ablate == "no-timbre")
    mask.timbre = false;
  else if (ablate == "no-background")
    mask.background = false;
  else if (!ablate.empty() && ablate != "identity-R")
    throw ConfigError("unknown --ablate value: " + ablate +
                      " (expected no-temporal, no-timbre, no-background or identity-R)");
  return mask;
}

// ---------------------------------------------------------------------------

int cmd_synth_data(const std::string& out, int n, std::uint64_t seed, const std::string& preset,
                   int val_count, int test_count) {
  RunConfig cfg = make_preset(preset);
  cfg.train.seed = seed;
  apply_env_seed(cfg);

  const auto corpus = data::make_corpus(cfg, n, cfg.train.seed);
  data::SplitManifest splits;
  bool have_splits = false;
  if (n > 0) {
    int vc = val_count > 0 ? val_count : cfg.data.val_count;
    int tc = test_count > 0 ? test_count : cfg.data.test_count;
    if (n < vc + tc + 1) {
      vc = std::max(1, n / 5);
      tc = std::max(1, n / 5);
    }
    if (n >= vc + tc + 1) {
      std::vector<std::string> ids;
      for (const auto& s : corpus) ids.push_back(s.id);
      splits = data::make_splits(ids, cfg.train.seed, vc, tc);
      have_splits = true;
    }
  }
  data::write_corpus(out, corpus, cfg, cfg.train.seed, have_splits ? &splits : nullptr);
  write_config_record(out, cfg);
  std::printf("wrote %d samples to %s (config %s)\n", n, out.c_str(), config_hash(cfg).c_str());
  if (have_splits)
    std::printf("splits: %zu train / %zu val / %zu test\n", splits.train.size(), splits.val.size(),
                splits.test.size());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir, const std::string& out,
              const std::string& resume) {
  RunConfig cfg = load_config_file(config_path);
  apply_env_seed(cfg);
  const auto corpus = data::load_corpus(data_dir, cfg.model.upsample_factor());
  if (corpus.samples.empty()) throw DataError("training corpus is empty: " + data_dir);
  if (corpus.splits.train.empty()) throw DataError("corpus has no train split: " + data_dir);

  train::Trainer trainer(cfg, &corpus);
  if (!resume.empty()) {
    const auto ck = train::load_checkpoint(resume);
    trainer.restore(ck);
    std::printf("resumed from %s at epoch %d, step %zu\n", resume.c_str(), trainer.epoch(),
                trainer.global_step());
  }
  write_config_record(out, cfg);
  trainer.fit(out, [](int epoch, double val) {
    std::printf("epoch %d  val_l_mel %.6g\n", epoch, val);
    std::fflush(stdout);
  });
  std::printf("done: %zu steps, best val %.6g, checkpoints in %s\n", trainer.global_step(),
              trainer.best_val(), out.c_str());
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& video_path, const std::string& ref_audio,
              const std::string& out, bool want_wav, std::int64_t seed_flag, const std::string& ablate) {
  const auto ck = train::load_checkpoint(ckpt);
  RunConfig cfg = ck.cfg;
  if (seed_flag >= 0) cfg.train.seed = static_cast<std::uint64_t>(seed_flag);
  apply_env_seed(cfg);

  const auto video = read_tensor<float>(video_path);
  if (video.rank() != 2) throw DataError("video features must be a rank-2 tensor: " + video_path);
  const Waveform ref = read_wav(ref_audio);
  const Tensor<float> ref_mel = reference_mel(ref, cfg.model);

  const auto gen = generator_from_checkpoint(ck);
  const model::CodeMask mask = mask_for_ablation(ablate);
  const Tensor<float> mel =
      train::infer(cfg, gen, video, ref_mel, cfg.train.seed, mask, ablate == "identity-R");

  fs::create_directories(out);
  write_tensor((fs::path(out) / "mel.vstf").string(), mel);
  plot::mel_comparison_png((fs::path(out) / "compare.png").string(), {&ref_mel, &mel});
  if (want_wav) {
    const Waveform w = dsp::mel_to_waveform(mel, cfg.model, 32, cfg.train.seed);
    write_wav((fs::path(out) / "generated.wav").string(), w);
  }
  nlohmann::json run;
  run["config_hash"] = config_hash(cfg);
  run["checkpoint"] = ckpt;
  run["checkpoint_hash"] = hex64(file_hash(ckpt));
  run["seed"] = cfg.train.seed;
  run["frames"] = mel.dim(0);
  std::ofstream(fs::path(out) / "run.json") << run.dump(2) << "\n";
  std::printf("wrote %zux%zu mel to %s\n", mel.dim(0), mel.dim(1), out.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split,
             const std::string& report, const std::string& ablate, bool force, int tol) {
  const auto ck = train::load_checkpoint(ckpt);
  RunConfig cfg = ck.cfg;
  apply_env_seed(cfg);
  const auto corpus = data::load_corpus(data_dir, cfg.model.upsample_factor());

  // refuse mismatched corpora unless forced
  std::ifstream mf(fs::path(data_dir) / "manifest.json");
  nlohmann::json manifest = nlohmann::json::parse(mf, nullptr, true);
  const std::string data_hash = manifest.value("config_hash", "");
  if (!force && data_hash != config_hash(cfg))
    throw ConfigError("checkpoint config hash " + config_hash(cfg) + " does not match corpus config hash " +
                      data_hash + " (use --force to evaluate anyway)");

  const auto& ids = corpus.split(split);
  if (ids.empty()) throw DataError("split '" + split + "' is empty");

  const auto gen = generator_from_checkpoint(ck);
  const model::CodeMask mask = mask_for_ablation(ablate);
  const bool identity_r = ablate == "identity-R";

  double mcd_acc = 0, sim_acc = 0, offset_acc = 0;
  std::size_t events_total = 0, hits_total = 0, matched = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& s = corpus.at(ids[i]);
    const Tensor<float> m_hat = train::infer(cfg, gen, s.video, s.mel,
                                             derive_seed(cfg.train.seed, 0xe7a1, i), mask, identity_r);
    mcd_acc += metrics::mcd(s.mel, m_hat);
    sim_acc += metrics::timbre_similarity(m_hat, s.mel);
    std::vector<int> truth;
    for (int f : s.event_frames) truth.push_back(cfg.model.upsample_factor() * f);
    const auto score = metrics::onset_alignment(m_hat, truth, tol);
    events_total += truth.size();
    const auto hits = static_cast<std::size_t>(std::lround(score.hit_rate * static_cast<double>(truth.size())));
    hits_total += hits;
    if (hits > 0) {
      offset_acc += score.mean_offset * static_cast<double>(hits);
      matched += hits;
    }
  }
  const double n = static_cast<double>(ids.size());
  nlohmann::json rep;
  rep["mcd"] = mcd_acc / n;
  rep["timbre_sim"] = sim_acc / n;
  rep["onset_hit_rate"] = events_total ? static_cast<double>(hits_total) / static_cast<double>(events_total) : 1.0;
  rep["mean_offset"] = matched ? offset_acc / static_cast<double>(matched) : 0.0;
  rep["onset_tolerance"] = tol;
  rep["config_hash"] = config_hash(cfg);
  rep["checkpoint_hash"] = hex64(file_hash(ckpt));
  rep["split"] = split;
  rep["n_samples"] = ids.size();
  rep["ablate"] = ablate;
  if (!report.empty()) {
    std::ofstream rf(report);
    rf << rep.dump(2) << "\n";
  }
  std::printf("%s\n", rep.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"timbre-controlled video-to-sound pipeline"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic paired corpus with ground truth");
  std::string s_out{"corpus"}, s_preset{"desk"};
  int s_n = 16, s_val = 0, s_test = 0;
  std::uint64_t s_seed = 1234;
  synth->add_option("--out", s_out, "output directory")->required();
  synth->add_option("--n", s_n, "number of samples")->required();
  synth->add_option("--seed", s_seed, "corpus seed");
  synth->add_option("--preset", s_preset, "config preset: desk or paper");
  synth->add_option("--val", s_val, "validation split size (default from preset)");
  synth->add_option("--test", s_test, "test split size (default from preset)");

  auto* tr = app.add_subcommand("train", "train on a corpus");
  std::string t_config, t_data, t_out{"run"}, t_resume;
  tr->add_option("--config", t_config, "config file (key = value)")->required();
  tr->add_option("--data", t_data, "corpus directory")->required();
  tr->add_option("--out", t_out, "output directory")->required();
  tr->add_option("--resume", t_resume, "checkpoint to resume from");

  auto* inf = app.add_subcommand("infer", "generate a mel from video features and a reference audio");
  std::string i_ckpt, i_video, i_ref, i_out{"infer_out"}, i_ablate;
  bool i_wav = false;
  std::int64_t i_seed = -1;
  inf->add_option("--ckpt", i_ckpt, "checkpoint file")->required();
  inf->add_option("--video-features", i_video, "video feature tensor (VSTF)")->required();
  inf->add_option("--reference-audio", i_ref, "reference WAV (PCM16 mono)")->required();
  inf->add_option("--out", i_out, "output directory")->required();
  inf->add_flag("--wav", i_wav, "also render audio via phase reconstruction");
  inf->add_option("--seed", i_seed, "seed override");
  inf->add_option("--ablate", i_ablate, "no-temporal | no-timbre | no-background | identity-R");

  auto* ev = app.add_subcommand("eval", "objective metrics over a corpus split");
  std::string e_ckpt, e_data, e_split{"test"}, e_report, e_ablate;
  bool e_force = false;
  int e_tol = 3;
  ev->add_option("--ckpt", e_ckpt, "checkpoint file")->required();
  ev->add_option("--data", e_data, "corpus directory")->required();
  ev->add_option("--split", e_split, "train | val | test");
  ev->add_option("--report", e_report, "report JSON path");
  ev->add_option("--ablate", e_ablate, "no-temporal | no-timbre | no-background | identity-R");
  ev->add_flag("--force", e_force, "evaluate despite a config hash mismatch");
  ev->add_option("--tol", e_tol, "onset tolerance in mel frames");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth_data(s_out, s_n, s_seed, s_preset, s_val, s_test);
    if (tr->parsed()) return cmd_train(t_config, t_data, t_out, t_resume);
    if (inf->parsed()) return cmd_infer(i_ckpt, i_video, i_ref, i_out, i_wav, i_seed, i_ablate);
    if (ev->parsed()) return cmd_eval(e_ckpt, e_data, e_split, e_report, e_ablate, e_force, e_tol);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric divergence: %s\n", e.what());
    return 4;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
