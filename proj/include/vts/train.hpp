#pragma once

// Alternating adversarial training: one discriminator update on
// real/generated/shifted triples (generated mels detached), then one
// generator update on the weighted reconstruction + adversarial objective.
// All randomness is derived from (seed, step) so runs are bit-reproducible
// and resume continues the exact stream.

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "vts/config.hpp"
#include "vts/data.hpp"
#include "vts/losses.hpp"
#include "vts/model.hpp"
#include "vts/tensor_file.hpp"

namespace vts::train {

using ad::ParamStore;
using ad::Var;

// ---------------------------------------------------------------------------
// learning-rate schedule
// ---------------------------------------------------------------------------

/// Linear warmup to the base rate, hold, then linear decay to zero over the
/// final `decay_frac` of total steps:
///   step < warmup:                 lr = base * (step+1) / warmup
///   step >= (1-decay_frac)*total:  lr = base * (total-step) / (decay_frac*total)
///   otherwise:                     lr = base
inline double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& t) {
  const auto warmup = static_cast<std::size_t>(t.warmup_steps);
  if (warmup > 0 && step < warmup) return t.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  if (t.decay_frac > 0 && total_steps > 0) {
    const auto decay_start = static_cast<std::size_t>(static_cast<double>(total_steps) * (1.0 - t.decay_frac));
    if (step >= decay_start && total_steps > decay_start)
      return t.lr * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - decay_start);
  }
  return t.lr;
}

// ---------------------------------------------------------------------------
// AdamW with decoupled weight decay
// ---------------------------------------------------------------------------

template <class T>
class AdamW {
 public:
  AdamW() = default;
  AdamW(double beta1, double beta2, double eps, double weight_decay)
      : beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

  void step(ParamStore<T>& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      Tensor<T>& m = moment(m_, name, p.value());
      Tensor<T>& v = moment(v_, name, p.value());
      Tensor<T>& val = p.value();
      const Tensor<T>& g = p.grad();
      for (std::size_t i = 0; i < val.numel(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * gi;
        const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double update = (mi / bc1) / (std::sqrt(vi / bc2) + eps_) + wd_ * static_cast<double>(val[i]);
        val[i] = static_cast<T>(static_cast<double>(val[i]) - lr * update);
      }
    }
  }

  std::size_t steps() const { return t_; }
  void set_steps(std::size_t t) { t_ = t; }
  std::map<std::string, Tensor<T>>& first_moments() { return m_; }
  std::map<std::string, Tensor<T>>& second_moments() { return v_; }

 private:
  static Tensor<T>& moment(std::map<std::string, Tensor<T>>& store, const std::string& name,
                           const Tensor<T>& like) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, Tensor<T>(like.shape(), T(0))).first;
    return it->second;
  }

  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, wd_ = 0.0;
  std::size_t t_ = 0;
  std::map<std::string, Tensor<T>> m_, v_;
};

// ---------------------------------------------------------------------------
// checkpoint container
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointData {
  RunConfig cfg;
  std::map<std::string, Tensor<float>> tensors;
  nlohmann::json trainer;  // counters, best validation, optimizer step counts
};

inline void save_checkpoint(const std::string& path, const RunConfig& cfg,
                            const std::map<std::string, Tensor<float>>& tensors,
                            const nlohmann::json& trainer) {
  std::string blobs;
  nlohmann::json index;
  for (const auto& [name, t] : tensors) {
    const std::string bytes = tensor_to_bytes(t);
    index[name] = {{"offset", blobs.size()}, {"bytes", bytes.size()}};
    blobs += bytes;
  }
  nlohmann::json head;
  head["format_version"] = kCheckpointVersion;
  head["config"] = config_canonical_text(cfg);
  head["config_hash"] = config_hash(cfg);
  head["trainer"] = trainer;
  head["tensors"] = index;
  const std::string head_s = head.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write("VSCK", 4);
  const std::uint32_t ver = kCheckpointVersion;
  f.write(reinterpret_cast<const char*>(&ver), 4);
  const std::uint64_t len = head_s.size();
  f.write(reinterpret_cast<const char*>(&len), 8);
  f.write(head_s.data(), static_cast<std::streamsize>(head_s.size()));
  f.write(blobs.data(), static_cast<std::streamsize>(blobs.size()));
}

inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || bytes.compare(0, 4, "VSCK") != 0)
    throw FormatError("not a checkpoint file (bad magic, expected 'VSCK'): " + path, 0);
  std::uint32_t ver;
  std::memcpy(&ver, bytes.data() + 4, 4);
  if (ver != kCheckpointVersion)
    throw FormatError("checkpoint format version " + std::to_string(ver) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + "); refusing to resume",
                      4);
  std::uint64_t head_len;
  std::memcpy(&head_len, bytes.data() + 8, 8);
  if (16 + head_len > bytes.size()) throw FormatError("truncated checkpoint header", 8);
  nlohmann::json head = nlohmann::json::parse(bytes.substr(16, head_len));

  CheckpointData out;
  out.cfg = parse_config_text(head.at("config").get<std::string>());
  out.trainer = head.value("trainer", nlohmann::json::object());
  const std::size_t blob_base = 16 + head_len;
  for (const auto& [name, entry] : head.at("tensors").items()) {
    const auto off = entry.at("offset").get<std::size_t>();
    const auto n = entry.at("bytes").get<std::size_t>();
    if (blob_base + off + n > bytes.size()) throw FormatError("tensor blob out of range: " + name);
    out.tensors[name] = tensor_from_bytes<float>(bytes.data() + blob_base + off, n, blob_base + off);
  }
  return out;
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

struct StepMetrics {
  double l_mel = 0, l_adv = 0, l_dt = 0, l_dm = 0, l_g_total = 0;
  bool finite() const {
    return std::isfinite(l_mel) && std::isfinite(l_adv) && std::isfinite(l_dt) && std::isfinite(l_dm) &&
           std::isfinite(l_g_total);
  }
};

inline std::string metrics_csv_header() { return "step,l_mel,l_adv,l_dt,l_dm,l_g_total"; }

inline std::string metrics_csv_row(std::size_t step, const StepMetrics& sm) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%zu,%.9g,%.9g,%.9g,%.9g,%.9g", step, sm.l_mel, sm.l_adv, sm.l_dt,
                sm.l_dm, sm.l_g_total);
  return buf;
}

class Trainer {
 public:
  using T = float;

  Trainer(const RunConfig& cfg, const data::LoadedCorpus* corpus)
      : cfg_(cfg),
        corpus_(corpus),
        opt_g_(cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps, cfg.train.weight_decay),
        opt_d_(cfg.train.beta1, cfg.train.beta2, cfg.train.adam_eps, cfg.train.weight_decay) {
    Rng init_rng(derive_seed(cfg.train.seed, 0x1217));
    gen_ = model::init_generator_params<T>(cfg.model, init_rng);
    disc_ = model::init_discriminator_params<T>(cfg.model, init_rng);
  }

  ParamStore<T>& generator_params() { return gen_; }
  ParamStore<T>& discriminator_params() { return disc_; }
  std::size_t global_step() const { return global_step_; }
  int epoch() const { return epoch_; }
  double best_val() const { return best_val_; }

  void enable_grad_tracking() { track_grads_ = true; }
  const std::map<std::string, bool>& grad_touched() const { return grad_touched_; }

  /// One alternating update on a batch of sample indices into the corpus.
  /// `between_phases` (when set) runs after the discriminator update and
  /// before the generator update.
  StepMetrics train_step(const std::vector<std::size_t>& batch,
                         const std::function<void()>& between_phases = {}) {
    const auto& m = cfg_.model;
    const std::size_t b = batch.size();
    if (b == 0) throw DataError("train_step: empty batch");

    std::vector<Tensor<float>> videos, mels;
    std::string batch_ids;
    for (std::size_t idx : batch) {
      const auto& s = corpus_->samples.at(idx);
      videos.push_back(s.video);
      mels.push_back(s.mel);
      batch_ids += (batch_ids.empty() ? "" : ",") + s.id;
    }
    const Tensor<T> video = model::stack_batch(videos);
    const Tensor<T> mel = model::stack_batch(mels);

    Rng step_rng(derive_seed(cfg_.train.seed, 0x57e9, global_step_));
    model::ResamplePolicy policy{dsp::ResampleSpec::from_config(m, 0), &step_rng,
                                 cfg_.train.resample_identity};

    // generator forward (training mode: both mel inputs are the target)
    Var<T> m_hat = model::generate(m, gen_, video, mel, mel, policy, true, step_rng);

    // shifted real (or generated) negatives, one independent shift per sample
    const Tensor<T>& shift_src = cfg_.train.shift_negative == "generated" ? m_hat.value() : mel;
    Tensor<T> shifted(mel.shape());
    for (std::size_t i = 0; i < b; ++i) {
      Tensor<T> one({mel.dim(1), mel.dim(2)});
      std::copy(shift_src.data() + i * one.numel(), shift_src.data() + (i + 1) * one.numel(), one.data());
      const Tensor<T> sh = dsp::time_shift(one, step_rng.next_u64());
      std::copy(sh.data(), sh.data() + one.numel(), shifted.data() + i * one.numel());
    }

    StepMetrics sm;

    // --- discriminator phase (generated mel detached) ---
    disc_.zero_grad();
    {
      const Var<T> m_fake = m_hat.detach();
      const Var<T> m_real = Var<T>::constant(mel);
      const Var<T> m_shift = Var<T>::constant(shifted);
      const Var<T> s_real = model::alignment_score(m, disc_, m_real, video);
      const Var<T> s_fake = model::alignment_score(m, disc_, m_fake, video);
      const Var<T> s_shift = model::alignment_score(m, disc_, m_shift, video);
      const Var<T> l_dt = loss::alignment_disc_loss(s_real, s_fake, s_shift);
      const auto r_scores = model::mel_window_scores(m, disc_, m_real, step_rng);
      const auto f_scores = model::mel_window_scores(m, disc_, m_fake, step_rng);
      const Var<T> l_dm = loss::mel_disc_loss(r_scores, f_scores);
      const Var<T> d_total = ad::add(l_dt, l_dm);
      ad::backward(d_total);
      sm.l_dt = static_cast<double>(l_dt.scalar());
      sm.l_dm = static_cast<double>(l_dm.scalar());
      note_grads(disc_);
      opt_d_.step(disc_, lr());
    }

    if (between_phases) between_phases();

    // --- generator phase (discriminators re-scored with updated weights) ---
    gen_.zero_grad();
    disc_.zero_grad();
    {
      const Var<T> s_fake = model::alignment_score(m, disc_, m_hat, video);
      const auto f_scores = model::mel_window_scores(m, disc_, m_hat, step_rng);
      const Var<T> l_adv = loss::adv_generator_loss(s_fake, f_scores);
      const Var<T> l_mel = loss::mel_l1(m_hat, Var<T>::constant(mel));
      loss::LossWeights w{cfg_.train.lambda_mel, cfg_.train.lambda_adv};
      const Var<T> l_g = loss::generator_total(l_mel, l_adv, w);
      ad::backward(l_g);
      sm.l_mel = static_cast<double>(l_mel.scalar());
      sm.l_adv = static_cast<double>(l_adv.scalar());
      sm.l_g_total = static_cast<double>(l_g.scalar());
      note_grads(gen_);
      opt_g_.step(gen_, lr());
    }

    if (!sm.finite())
      throw NumericError("non-finite loss at step " + std::to_string(global_step_) + " on batch [" +
                         batch_ids + "]");
    ++global_step_;
    return sm;
  }

  /// Mean training-objective reconstruction L1 over a split, with a
  /// deterministic per-epoch randomness stream.
  double validate(const std::vector<std::string>& ids) {
    if (ids.empty()) return 0.0;
    double acc = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& s = corpus_->at(ids[i]);
      Rng val_rng(derive_seed(cfg_.train.seed, 0x7a1, static_cast<std::uint64_t>(epoch_), i));
      model::ResamplePolicy policy{dsp::ResampleSpec::from_config(cfg_.model, 0), &val_rng,
                                   cfg_.train.resample_identity};
      const Tensor<T> video = model::to_batch(s.video);
      const Tensor<T> mel = model::to_batch(s.mel);
      const Var<T> m_hat = model::generate(cfg_.model, gen_, video, mel, mel, policy, false, val_rng);
      acc += static_cast<double>(loss::mel_l1(m_hat, Var<T>::constant(mel)).scalar());
    }
    return acc / static_cast<double>(ids.size());
  }

  /// Epoch loop over the shuffled train split with per-step CSV logging,
  /// periodic validation and checkpoints. Continues from the restored epoch
  /// when resuming.
  void fit(const std::string& out_dir, const std::function<void(int, double)>& on_epoch = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto& ids = corpus_->splits.train;
    if (ids.empty()) throw DataError("fit: empty train split");
    const std::size_t spe = steps_per_epoch();
    const std::size_t total_steps = spe * static_cast<std::size_t>(cfg_.train.epochs);
    total_steps_ = total_steps;

    const std::string csv_path = out_dir + "/metrics.csv";
    const bool fresh = epoch_ == 0;
    std::ofstream csv(csv_path, fresh ? std::ios::out : std::ios::app);
    if (fresh) csv << metrics_csv_header() << "\n";
    std::ofstream val_csv(out_dir + "/val.csv", fresh ? std::ios::out : std::ios::app);
    if (fresh) val_csv << "epoch,val_l_mel\n";

    for (; epoch_ < cfg_.train.epochs; ++epoch_) {
      std::vector<std::size_t> order;
      for (const auto& id : ids) order.push_back(corpus_->by_id.at(id));
      Rng shuffle_rng(derive_seed(cfg_.train.seed, 0x5f1e, static_cast<std::uint64_t>(epoch_)));
      shuffle_rng.shuffle(order);

      for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg_.train.batch_size)) {
        const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg_.train.batch_size));
        const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(at),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
        const StepMetrics sm = train_step(batch);
        csv << metrics_csv_row(global_step_ - 1, sm) << "\n";
      }

      if (cfg_.train.val_every > 0 && (epoch_ + 1) % cfg_.train.val_every == 0) {
        const double v = validate(corpus_->splits.val);
        char vbuf[64];
        std::snprintf(vbuf, sizeof(vbuf), "%d,%.9g", epoch_, v);
        val_csv << vbuf << "\n";
        if (!corpus_->splits.val.empty() && v < best_val_) {
          best_val_ = v;
          save(out_dir + "/best.vsck");
        }
        if (on_epoch) on_epoch(epoch_, v);
      }
      if (cfg_.train.ckpt_every > 0 && (epoch_ + 1) % cfg_.train.ckpt_every == 0) {
        char name[64];
        std::snprintf(name, sizeof(name), "/ckpt_epoch_%05d.vsck", epoch_ + 1);
        save(out_dir + name);
      }
      csv.flush();
      val_csv.flush();
    }
    save(out_dir + "/last.vsck");
  }

  std::size_t steps_per_epoch() const {
    const auto n = corpus_->splits.train.size();
    const auto bsz = static_cast<std::size_t>(cfg_.train.batch_size);
    return (n + bsz - 1) / bsz;
  }

  std::size_t total_steps() const {
    return total_steps_ ? total_steps_ : steps_per_epoch() * static_cast<std::size_t>(cfg_.train.epochs);
  }

  void save(const std::string& path) const {
    std::map<std::string, Tensor<float>> tensors;
    for (const auto& [name, p] : gen_) tensors["g/" + name] = p.value();
    for (const auto& [name, p] : disc_) tensors["d/" + name] = p.value();
    for (auto& [name, t] : const_cast<AdamW<T>&>(opt_g_).first_moments()) tensors["optg_m/" + name] = t;
    for (auto& [name, t] : const_cast<AdamW<T>&>(opt_g_).second_moments()) tensors["optg_v/" + name] = t;
    for (auto& [name, t] : const_cast<AdamW<T>&>(opt_d_).first_moments()) tensors["optd_m/" + name] = t;
    for (auto& [name, t] : const_cast<AdamW<T>&>(opt_d_).second_moments()) tensors["optd_v/" + name] = t;
    nlohmann::json trainer;
    trainer["epoch"] = epoch_;
    trainer["global_step"] = global_step_;
    trainer["best_val"] = best_val_;
    trainer["opt_g_steps"] = opt_g_.steps();
    trainer["opt_d_steps"] = opt_d_.steps();
    save_checkpoint(path, cfg_, tensors, trainer);
  }

  /// Restore parameters, optimizer state and counters; the checkpoint's
  /// config must hash-match the trainer's (callers build the trainer from
  /// the checkpoint config when unsure).
  void restore(const CheckpointData& ck) {
    if (config_hash(ck.cfg) != config_hash(cfg_))
      throw ConfigError("checkpoint config hash " + config_hash(ck.cfg) +
                        " does not match the run config " + config_hash(cfg_));
    auto copy_into = [&](ParamStore<T>& store, const std::string& prefix) {
      for (auto& [name, p] : store) {
        const auto it = ck.tensors.find(prefix + name);
        if (it == ck.tensors.end()) throw FormatError("checkpoint is missing tensor " + prefix + name);
        if (it->second.shape() != p.value().shape())
          throw FormatError("checkpoint tensor " + prefix + name + " has shape mismatch");
        p.value() = it->second;
      }
    };
    copy_into(gen_, "g/");
    copy_into(disc_, "d/");
    auto copy_moments = [&](std::map<std::string, Tensor<float>>& dst, const std::string& prefix) {
      dst.clear();
      for (const auto& [name, t] : ck.tensors)
        if (name.starts_with(prefix)) dst[name.substr(prefix.size())] = t;
    };
    copy_moments(opt_g_.first_moments(), "optg_m/");
    copy_moments(opt_g_.second_moments(), "optg_v/");
    copy_moments(opt_d_.first_moments(), "optd_m/");
    copy_moments(opt_d_.second_moments(), "optd_v/");
    epoch_ = ck.trainer.value("epoch", 0);
    global_step_ = ck.trainer.value("global_step", std::size_t{0});
    best_val_ = ck.trainer.value("best_val", 1e30);
    opt_g_.set_steps(ck.trainer.value("opt_g_steps", std::size_t{0}));
    opt_d_.set_steps(ck.trainer.value("opt_d_steps", std::size_t{0}));
    ++epoch_;  // the stored epoch finished; continue with the next one
  }

 private:
  double lr() const { return lr_at(global_step_, total_steps(), cfg_.train); }

  void note_grads(ParamStore<T>& store) {
    if (!track_grads_) return;
    for (auto& [name, p] : store) {
      bool& flag = grad_touched_[name];
      if (flag) continue;
      const auto& g = p.grad();
      for (std::size_t i = 0; i < g.numel(); ++i)
        if (g[i] != T(0)) {
          flag = true;
          break;
        }
    }
  }

  RunConfig cfg_;
  const data::LoadedCorpus* corpus_;
  ParamStore<T> gen_, disc_;
  AdamW<T> opt_g_, opt_d_;
  std::size_t global_step_ = 0;
  std::size_t total_steps_ = 0;
  int epoch_ = 0;
  double best_val_ = 1e30;
  bool track_grads_ = false;
  std::map<std::string, bool> grad_touched_;
};

// ---------------------------------------------------------------------------
// inference
// ---------------------------------------------------------------------------

/// Run the generator in inference mode: video features drive the timing,
/// the reference mel supplies the timbre, and the background input is the
/// silence mel. Output length is 4x the video length; the reference length
/// is free.
inline Tensor<float> infer(const RunConfig& cfg, const ParamStore<float>& gen, const Tensor<float>& video_2d,
                           const Tensor<float>& mel_ref_2d, std::uint64_t seed,
                           const model::CodeMask& mask = {}, bool identity_resample_override = false) {
  const auto& m = cfg.model;
  const Tensor<float> video = model::to_batch(video_2d);
  const Tensor<float> mel_ref = model::to_batch(mel_ref_2d);
  const Tensor<float> silence = model::to_batch(dsp::silence_mel(m));
  Rng rng(derive_seed(seed, 0x1f3a));
  model::ResamplePolicy policy{dsp::ResampleSpec::from_config(m, 0), &rng,
                               cfg.train.resample_identity || identity_resample_override};
  const Var<float> out = model::generate(m, gen, video, mel_ref, silence, policy, false, rng, mask);
  Tensor<float> mel({out.value().dim(1), out.value().dim(2)});
  std::copy(out.value().data(), out.value().data() + mel.numel(), mel.data());
  return mel;
}

}  // namespace vts::train
