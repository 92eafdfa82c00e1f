#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "vts/common.hpp"

namespace vts {

// Every architectural knob of the generator and the two discriminators plus
// the signal-processing constants. Two presets are provided: "paper" (full
// scale) and "desk" (small dims for CPU experiments; keeps the 4x
// mel/video timebase ratio and the 80-bin mel axis).
struct ModelConfig {
  // audio / mel extraction
  int sample_rate = 22050;
  int frame_size = 1024;
  int hop_size = 256;
  int n_mels = 80;
  double mel_floor = 1e-5;   // linear-domain clamp before the log
  int mel_frames = 860;      // fixed output frame count (truncate/pad policy)
  double mel_norm_mean = -5.0;  // fixed affine used inside the networks
  double mel_norm_std = 4.0;

  // video features
  double video_fps = 21.5;
  int video_frames = 215;
  int video_dim = 2048;

  // temporal encoder: conv stack -> bidirectional recurrence -> bottleneck
  int te_conv_layers = 8;
  int te_conv_kernel = 5;
  int te_conv_width = 512;
  int te_lstm_layers = 2;
  int te_lstm_hidden = 256;
  int temporal_dim = 8;

  // gated conv units (acoustic encoder) + recurrent reducer
  int gu_layers = 5;
  int gu_width = 512;
  int gu_in_kernel1 = 5;
  int gu_in_kernel2 = 7;
  int gu_out_kernel = 3;
  int gu_skip_kernel = 5;
  int gu_norm_groups = 8;
  bool gu_use_norm = true;   // gate normalizations; tests disable for algebra checks
  int ae_lstm_layers = 2;
  int ae_lstm_hidden = 256;  // timbre code dim = 2 * hidden (both directions)

  // background encoder
  int be_lstm_layers = 2;
  int be_lstm_hidden = 128;
  int background_dim = 32;

  // mel decoder: transposed-conv upsampler -> attention/conv blocks -> linear
  int dec_convt_kernel = 4;
  int dec_convt_stride = 2;
  int dec_convt_width = 1024;
  int dec_blocks = 4;
  int dec_hidden = 512;
  int dec_heads = 2;
  int dec_conv_kernel = 9;
  int dec_conv_width = 512;
  double dec_dropout = 0.1;

  // alignment discriminator (mel conditioned on upsampled video features)
  int ad_convt_kernel = 4;
  int ad_convt_stride = 2;
  int ad_convt_width = 1024;
  int ad_conv_layers = 4;
  int ad_conv_kernel = 4;
  int ad_conv_width = 512;

  // multi-window mel discriminator: 3 sub-discriminators over window lengths
  // {T, T/2, T/4}, each a 3-layer 2-D conv stack
  int mwd_channels1 = 32;
  int mwd_channels2 = 64;
  int mwd_kernel = 5;

  double leaky_slope = 0.01;

  // random resampling transform
  int rs_k_min = 2;
  int rs_k_max = 8;
  double rs_stretch_lo = 0.5;
  double rs_stretch_hi = 1.5;

  int timbre_dim() const { return 2 * ae_lstm_hidden; }
  int upsample_factor() const { return dec_convt_stride * dec_convt_stride; }
};

struct TrainConfig {
  int batch_size = 48;
  int epochs = 500;
  double lr = 2e-4;
  int warmup_steps = 100;
  double decay_frac = 0.5;  // linear decay to 0 over the final fraction of steps
  double weight_decay = 0.01;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1234;
  double lambda_mel = 10000.0;
  double lambda_adv = 1.0;
  // which mel the shift negative is built from: "real" or "generated"
  std::string shift_negative = "real";
  bool resample_identity = false;  // pin the resampling transform to identity
  int ckpt_every = 10;             // epochs
  int val_every = 1;               // epochs
};

struct DataConfig {
  int val_count = 32;
  int test_count = 32;
  // synthetic corpus generation
  int events_min = 2;
  int events_max = 5;
  int event_min_gap = 6;       // video frames
  double noise_floor = 0.003;  // linear amplitude of the background noise
  double feature_noise = 0.01;
};

struct RunConfig {
  std::string preset = "paper";
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
};

inline RunConfig paper_preset() { return RunConfig{}; }

inline RunConfig desk_preset() {
  RunConfig c;
  c.preset = "desk";
  auto& m = c.model;
  m.mel_frames = 216;
  m.video_frames = 54;
  m.video_dim = 64;
  m.te_conv_width = 32;
  m.te_lstm_hidden = 32;
  m.gu_width = 24;
  m.ae_lstm_hidden = 32;
  m.be_lstm_hidden = 16;
  m.background_dim = 8;
  m.dec_convt_width = 64;
  m.dec_blocks = 2;
  m.dec_hidden = 32;
  m.dec_conv_width = 32;
  m.ad_convt_width = 64;
  m.ad_conv_width = 32;
  m.mwd_channels1 = 6;
  m.mwd_channels2 = 12;
  auto& t = c.train;
  t.batch_size = 8;
  t.epochs = 50;
  t.lr = 2e-3;
  t.ckpt_every = 10;
  return c;
}

inline RunConfig make_preset(const std::string& name) {
  if (name == "paper") return paper_preset();
  if (name == "desk") return desk_preset();
  throw ConfigError("unknown preset: " + name + " (expected desk or paper)");
}

// ---------------------------------------------------------------------------
// Field registry: one visitor drives parsing, serialization and hashing.
// ---------------------------------------------------------------------------

template <class F>
void visit_config_fields(RunConfig& c, F&& f) {
  auto& m = c.model;
  auto& t = c.train;
  auto& d = c.data;
  f("model.sample_rate", m.sample_rate);
  f("model.frame_size", m.frame_size);
  f("model.hop_size", m.hop_size);
  f("model.n_mels", m.n_mels);
  f("model.mel_floor", m.mel_floor);
  f("model.mel_frames", m.mel_frames);
  f("model.mel_norm_mean", m.mel_norm_mean);
  f("model.mel_norm_std", m.mel_norm_std);
  f("model.video_fps", m.video_fps);
  f("model.video_frames", m.video_frames);
  f("model.video_dim", m.video_dim);
  f("model.te_conv_layers", m.te_conv_layers);
  f("model.te_conv_kernel", m.te_conv_kernel);
  f("model.te_conv_width", m.te_conv_width);
  f("model.te_lstm_layers", m.te_lstm_layers);
  f("model.te_lstm_hidden", m.te_lstm_hidden);
  f("model.temporal_dim", m.temporal_dim);
  f("model.gu_layers", m.gu_layers);
  f("model.gu_width", m.gu_width);
  f("model.gu_in_kernel1", m.gu_in_kernel1);
  f("model.gu_in_kernel2", m.gu_in_kernel2);
  f("model.gu_out_kernel", m.gu_out_kernel);
  f("model.gu_skip_kernel", m.gu_skip_kernel);
  f("model.gu_norm_groups", m.gu_norm_groups);
  f("model.gu_use_norm", m.gu_use_norm);
  f("model.ae_lstm_layers", m.ae_lstm_layers);
  f("model.ae_lstm_hidden", m.ae_lstm_hidden);
  f("model.be_lstm_layers", m.be_lstm_layers);
  f("model.be_lstm_hidden", m.be_lstm_hidden);
  f("model.background_dim", m.background_dim);
  f("model.dec_convt_kernel", m.dec_convt_kernel);
  f("model.dec_convt_stride", m.dec_convt_stride);
  f("model.dec_convt_width", m.dec_convt_width);
  f("model.dec_blocks", m.dec_blocks);
  f("model.dec_hidden", m.dec_hidden);
  f("model.dec_heads", m.dec_heads);
  f("model.dec_conv_kernel", m.dec_conv_kernel);
  f("model.dec_conv_width", m.dec_conv_width);
  f("model.dec_dropout", m.dec_dropout);
  f("model.ad_convt_kernel", m.ad_convt_kernel);
  f("model.ad_convt_stride", m.ad_convt_stride);
  f("model.ad_convt_width", m.ad_convt_width);
  f("model.ad_conv_layers", m.ad_conv_layers);
  f("model.ad_conv_kernel", m.ad_conv_kernel);
  f("model.ad_conv_width", m.ad_conv_width);
  f("model.mwd_channels1", m.mwd_channels1);
  f("model.mwd_channels2", m.mwd_channels2);
  f("model.mwd_kernel", m.mwd_kernel);
  f("model.leaky_slope", m.leaky_slope);
  f("model.rs_k_min", m.rs_k_min);
  f("model.rs_k_max", m.rs_k_max);
  f("model.rs_stretch_lo", m.rs_stretch_lo);
  f("model.rs_stretch_hi", m.rs_stretch_hi);
  f("train.batch_size", t.batch_size);
  f("train.epochs", t.epochs);
  f("train.lr", t.lr);
  f("train.warmup_steps", t.warmup_steps);
  f("train.decay_frac", t.decay_frac);
  f("train.weight_decay", t.weight_decay);
  f("train.beta1", t.beta1);
  f("train.beta2", t.beta2);
  f("train.adam_eps", t.adam_eps);
  f("train.seed", t.seed);
  f("train.lambda_mel", t.lambda_mel);
  f("train.lambda_adv", t.lambda_adv);
  f("train.shift_negative", t.shift_negative);
  f("train.resample_identity", t.resample_identity);
  f("train.ckpt_every", t.ckpt_every);
  f("train.val_every", t.val_every);
  f("data.val_count", d.val_count);
  f("data.test_count", d.test_count);
  f("data.events_min", d.events_min);
  f("data.events_max", d.events_max);
  f("data.event_min_gap", d.event_min_gap);
  f("data.noise_floor", d.noise_floor);
  f("data.feature_noise", d.feature_noise);
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct FieldPrinter {
  std::map<std::string, std::string>* out;
  void operator()(const char* k, int v) { (*out)[k] = std::to_string(v); }
  void operator()(const char* k, double v) { (*out)[k] = fmt_double(v); }
  void operator()(const char* k, bool v) { (*out)[k] = v ? "true" : "false"; }
  void operator()(const char* k, std::uint64_t v) { (*out)[k] = std::to_string(v); }
  void operator()(const char* k, const std::string& v) { (*out)[k] = "\"" + v + "\""; }
};

struct FieldSetter {
  const std::string* key;
  const std::string* value;
  bool* found;

  static bool parse_ll(const std::string& s, long long& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtoll(s.c_str(), &end, 10);
    return end && *end == '\0';
  }
  static bool parse_d(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end && *end == '\0';
  }

  void operator()(const char* k, int& v) {
    if (*key != k) return;
    long long x;
    if (!parse_ll(*value, x)) throw ConfigError("expected integer for " + *key + ", got '" + *value + "'");
    v = static_cast<int>(x);
    *found = true;
  }
  void operator()(const char* k, double& v) {
    if (*key != k) return;
    double x;
    if (!parse_d(*value, x)) throw ConfigError("expected number for " + *key + ", got '" + *value + "'");
    v = x;
    *found = true;
  }
  void operator()(const char* k, bool& v) {
    if (*key != k) return;
    if (*value == "true")
      v = true;
    else if (*value == "false")
      v = false;
    else
      throw ConfigError("expected true/false for " + *key + ", got '" + *value + "'");
    *found = true;
  }
  void operator()(const char* k, std::uint64_t& v) {
    if (*key != k) return;
    long long x;
    if (!parse_ll(*value, x) || x < 0) throw ConfigError("expected nonnegative integer for " + *key);
    v = static_cast<std::uint64_t>(x);
    *found = true;
  }
  void operator()(const char* k, std::string& v) {
    if (*key != k) return;
    std::string s = *value;
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    v = s;
    *found = true;
  }
};

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace detail

/// Canonical `section.key = value` listing in sorted key order; the config
/// hash is computed over this text.
inline std::string config_canonical_text(const RunConfig& c) {
  std::map<std::string, std::string> kv;
  kv["preset"] = "\"" + c.preset + "\"";
  visit_config_fields(const_cast<RunConfig&>(c), detail::FieldPrinter{&kv});
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

inline std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(config_canonical_text(c))); }

inline void set_config_field(RunConfig& c, const std::string& key, const std::string& value) {
  bool found = false;
  if (key == "preset") {
    throw ConfigError("preset may only be set by its own line before other keys");
  }
  detail::FieldSetter setter{&key, &value, &found};
  visit_config_fields(c, setter);
  if (!found) throw ConfigError("unknown config key: " + key);
}

inline void validate_config(const RunConfig& c) {
  const auto& m = c.model;
  const auto& t = c.train;
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("invalid config: " + msg);
  };
  need(m.sample_rate > 0, "sample_rate must be positive");
  need(m.frame_size > 0 && (m.frame_size & (m.frame_size - 1)) == 0, "frame_size must be a power of two");
  need(m.hop_size > 0 && m.hop_size <= m.frame_size, "hop_size must be in (0, frame_size]");
  need(m.n_mels >= 8, "n_mels too small");
  need(m.mel_floor > 0, "mel_floor must be positive");
  need(m.mel_norm_std > 0, "mel_norm_std must be positive");
  need(m.mel_frames == m.upsample_factor() * m.video_frames,
       "mel_frames must equal the decoder upsampling factor times video_frames");
  need(m.mel_frames % 4 == 0, "mel_frames must be divisible by 4 (discriminator windows)");
  need(m.video_dim > 0 && m.video_frames > 0, "video dims must be positive");
  need(m.temporal_dim >= 1, "temporal_dim must be >= 1");
  need(m.gu_layers >= 1 && m.gu_width >= 1, "gated unit stack must be non-empty");
  need(m.gu_norm_groups >= 1, "gu_norm_groups must be >= 1");
  need(m.dec_hidden % m.dec_heads == 0, "dec_hidden must divide evenly into heads");
  need(m.dec_dropout >= 0 && m.dec_dropout < 1, "dec_dropout must be in [0,1)");
  need(m.rs_k_min >= 1 && m.rs_k_max >= m.rs_k_min, "resample segment counts invalid");
  need(m.rs_stretch_lo > 0 && m.rs_stretch_lo <= m.rs_stretch_hi, "resample stretch range invalid");
  need(t.batch_size >= 1, "batch_size must be >= 1");
  need(t.beta1 > 0 && t.beta1 < 1 && t.beta2 > 0 && t.beta2 < 1, "adam betas must be in (0,1)");
  need(t.lambda_mel >= 0 && t.lambda_adv >= 0, "loss weights must be nonnegative");
  need(t.shift_negative == "real" || t.shift_negative == "generated",
       "shift_negative must be 'real' or 'generated'");
  need(t.decay_frac >= 0 && t.decay_frac <= 1, "decay_frac must be in [0,1]");
  need(c.data.val_count >= 1 && c.data.test_count >= 1, "split sizes must be >= 1");
  need(c.data.events_min >= 0 && c.data.events_max >= c.data.events_min, "event count range invalid");
}

/// Parse the plain-text config format: `key = value` lines, optional
/// `[section]` headers, `#` comments. A `preset = "desk"|"paper"` line
/// selects the base config and is applied before everything else.
inline RunConfig parse_config_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string preset = "paper";
  std::string section;
  std::size_t lineno = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) {
      if (pos > text.size()) break;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("bad section header at line " + std::to_string(lineno));
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value at line " + std::to_string(lineno));
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (!section.empty()) key = section + "." + key;
    if (key == "preset") {
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
        value = value.substr(1, value.size() - 2);
      preset = value;
      continue;
    }
    entries.emplace_back(key, value);
  }
  RunConfig cfg = make_preset(preset);
  for (const auto& [k, v] : entries) set_config_field(cfg, k, v);
  validate_config(cfg);
  return cfg;
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_config_text(text);
}

}  // namespace vts
