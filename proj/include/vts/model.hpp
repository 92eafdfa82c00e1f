#pragma once

// The generator (temporal encoder, gated-unit acoustic encoder, background
// encoder, mel decoder) and the two discriminators, as pure forward
// functions over a ParamStore. Activations are (batch, time, channel);
// data inputs enter the tape as constants, so gradients flow only into
// parameters and generated mels.

#include <string>
#include <vector>

#include "vts/autodiff.hpp"
#include "vts/config.hpp"
#include "vts/dsp.hpp"
#include "vts/nn.hpp"

namespace vts::model {

using ad::ParamStore;
using ad::Var;

// ---------------------------------------------------------------------------
// resampling policy threaded through the acoustic encoder
// ---------------------------------------------------------------------------

/// Draws one fresh resample map per sample per call. `identity` pins the
/// transform to a pass-through (gradient checks, ablations).
struct ResamplePolicy {
  dsp::ResampleSpec spec;
  Rng* rng = nullptr;
  bool identity = false;

  static ResamplePolicy pinned_identity() {
    ResamplePolicy p;
    p.identity = true;
    return p;
  }
};

template <class T>
Var<T> maybe_resample(const Var<T>& x, ResamplePolicy& policy) {
  if (policy.identity) return x;
  const std::size_t b = x.value().dim(0), t = x.value().dim(1);
  std::vector<dsp::ResampleMap> maps;
  maps.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    Rng sample_rng(policy.rng->next_u64());
    maps.push_back(dsp::plan_to_map(dsp::draw_resample_plan(t, sample_rng, policy.spec)));
  }
  return ad::resample_time(x, maps);
}

// ---------------------------------------------------------------------------
// parameter construction
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void create_conv(ParamStore<T>& p, const std::string& name, std::size_t k, std::size_t cin,
                 std::size_t cout, Rng& rng) {
  p.create(name + ".w", nn::uniform_init<T>({k * cin, cout}, k * cin, rng));
  p.create(name + ".b", nn::uniform_init<T>({cout}, k * cin, rng));
}

template <class T>
void create_linear(ParamStore<T>& p, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  p.create(name + ".w", nn::uniform_init<T>({in, out}, in, rng));
  p.create(name + ".b", nn::uniform_init<T>({out}, in, rng));
}

template <class T>
void create_norm(ParamStore<T>& p, const std::string& name, std::size_t c) {
  p.create(name + ".g", Tensor<T>({c}, T(1)));
  p.create(name + ".beta", Tensor<T>({c}, T(0)));
}

template <class T>
void create_lstm_stack(ParamStore<T>& p, const std::string& prefix, std::size_t layers, std::size_t in,
                       std::size_t hidden, Rng& rng) {
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t d = l == 0 ? in : 2 * hidden;
    for (const char* dir : {"f", "r"}) {
      const std::string base = prefix + ".l" + std::to_string(l) + "." + dir;
      p.create(base + ".w_ih", nn::uniform_init<T>({d, 4 * hidden}, d, rng));
      p.create(base + ".w_hh", nn::orthogonal_gate_init<T>(hidden, 4, rng));
      p.create(base + ".bias", Tensor<T>({4 * hidden}, T(0)));
    }
  }
}

template <class T>
void create_attention(ParamStore<T>& p, const std::string& prefix, std::size_t c, Rng& rng) {
  for (const char* nm : {"q", "k", "v", "o"}) create_linear(p, prefix + "." + nm, c, c, rng);
}

}  // namespace detail

template <class T>
ParamStore<T> init_generator_params(const ModelConfig& m, Rng& rng) {
  ParamStore<T> p;
  const auto dv = static_cast<std::size_t>(m.video_dim);
  const auto tw = static_cast<std::size_t>(m.te_conv_width);
  const auto tk = static_cast<std::size_t>(m.te_conv_kernel);

  // temporal encoder
  for (int i = 0; i < m.te_conv_layers; ++i) {
    const std::size_t cin = i == 0 ? dv : tw;
    detail::create_conv(p, "te.conv" + std::to_string(i), tk, cin, tw, rng);
    detail::create_norm(p, "te.conv" + std::to_string(i) + ".norm", tw);
  }
  detail::create_lstm_stack(p, "te.lstm", static_cast<std::size_t>(m.te_lstm_layers), tw,
                            static_cast<std::size_t>(m.te_lstm_hidden), rng);
  detail::create_linear(p, "te.out", 2 * static_cast<std::size_t>(m.te_lstm_hidden),
                        static_cast<std::size_t>(m.temporal_dim), rng);

  // acoustic encoder: input projection + gated units + recurrent reducer
  const auto gw = static_cast<std::size_t>(m.gu_width);
  detail::create_linear(p, "ae.proj", static_cast<std::size_t>(m.n_mels), gw, rng);
  for (int i = 0; i < m.gu_layers; ++i) {
    const std::string g = "ae.gu" + std::to_string(i);
    detail::create_conv(p, g + ".in1", static_cast<std::size_t>(m.gu_in_kernel1), gw, gw, rng);
    detail::create_conv(p, g + ".in2", static_cast<std::size_t>(m.gu_in_kernel2), gw, gw, rng);
    detail::create_norm(p, g + ".in_norm", gw);
    detail::create_conv(p, g + ".skip", static_cast<std::size_t>(m.gu_skip_kernel), gw, gw, rng);
    detail::create_norm(p, g + ".skip_norm", gw);
    detail::create_conv(p, g + ".out", static_cast<std::size_t>(m.gu_out_kernel), gw, gw, rng);
    detail::create_norm(p, g + ".out_norm", gw);
  }
  detail::create_lstm_stack(p, "ae.lstm", static_cast<std::size_t>(m.ae_lstm_layers), gw,
                            static_cast<std::size_t>(m.ae_lstm_hidden), rng);

  // background encoder
  detail::create_lstm_stack(p, "be.lstm", static_cast<std::size_t>(m.be_lstm_layers),
                            static_cast<std::size_t>(m.n_mels), static_cast<std::size_t>(m.be_lstm_hidden), rng);
  detail::create_linear(p, "be.out", 2 * static_cast<std::size_t>(m.be_lstm_hidden),
                        static_cast<std::size_t>(m.background_dim), rng);

  // decoder
  const std::size_t cat = static_cast<std::size_t>(m.temporal_dim) + static_cast<std::size_t>(m.timbre_dim()) +
                          static_cast<std::size_t>(m.background_dim);
  const auto uk = static_cast<std::size_t>(m.dec_convt_kernel);
  const auto uw = static_cast<std::size_t>(m.dec_convt_width);
  detail::create_conv(p, "dec.up0", uk, cat, uw, rng);
  detail::create_conv(p, "dec.up1", uk, uw, uw, rng);
  const auto dh = static_cast<std::size_t>(m.dec_hidden);
  detail::create_linear(p, "dec.proj", uw, dh, rng);
  for (int i = 0; i < m.dec_blocks; ++i) {
    const std::string blk = "dec.blk" + std::to_string(i);
    detail::create_attention(p, blk + ".attn", dh, rng);
    detail::create_norm(p, blk + ".ln1", dh);
    detail::create_conv(p, blk + ".conv1", static_cast<std::size_t>(m.dec_conv_kernel), dh,
                        static_cast<std::size_t>(m.dec_conv_width), rng);
    detail::create_conv(p, blk + ".conv2", static_cast<std::size_t>(m.dec_conv_kernel),
                        static_cast<std::size_t>(m.dec_conv_width), dh, rng);
    detail::create_norm(p, blk + ".ln2", dh);
  }
  detail::create_linear(p, "dec.out", dh, static_cast<std::size_t>(m.n_mels), rng);
  return p;
}

template <class T>
ParamStore<T> init_discriminator_params(const ModelConfig& m, Rng& rng) {
  ParamStore<T> p;
  // alignment discriminator
  const auto ak = static_cast<std::size_t>(m.ad_convt_kernel);
  const auto aw = static_cast<std::size_t>(m.ad_convt_width);
  detail::create_conv(p, "ad.up0", ak, static_cast<std::size_t>(m.video_dim), aw, rng);
  detail::create_conv(p, "ad.up1", ak, aw, aw, rng);
  const auto bw = static_cast<std::size_t>(m.ad_conv_width);
  const auto bk = static_cast<std::size_t>(m.ad_conv_kernel);
  detail::create_conv(p, "ad.mel", bk, static_cast<std::size_t>(m.n_mels), bw, rng);
  for (int i = 0; i < m.ad_conv_layers; ++i) {
    const std::size_t cin = i == 0 ? aw + bw : bw;
    const std::size_t cout = i == m.ad_conv_layers - 1 ? 1 : bw;
    detail::create_conv(p, "ad.body" + std::to_string(i), bk, cin, cout, rng);
    if (i != m.ad_conv_layers - 1) detail::create_norm(p, "ad.body" + std::to_string(i) + ".norm", cout);
  }
  // multi-window mel discriminator, 3 sub-discriminators
  const auto mk = static_cast<std::size_t>(m.mwd_kernel);
  for (int s = 0; s < 3; ++s) {
    const std::string sub = "mwd.s" + std::to_string(s);
    detail::create_conv(p, sub + ".c0", mk * mk, 1, static_cast<std::size_t>(m.mwd_channels1), rng);
    detail::create_conv(p, sub + ".c1", mk * mk, static_cast<std::size_t>(m.mwd_channels1),
                        static_cast<std::size_t>(m.mwd_channels2), rng);
    detail::create_conv(p, sub + ".c2", 3 * 3, static_cast<std::size_t>(m.mwd_channels2), 1, rng);
  }
  return p;
}

// ---------------------------------------------------------------------------
// shared forward helpers
// ---------------------------------------------------------------------------

/// Fixed affine that brings log-mel values to roughly unit scale inside the
/// networks; the inverse is applied at the decoder output so losses live in
/// the true log-mel domain.
template <class T>
Tensor<T> normalize_mel(const Tensor<T>& mel, const ModelConfig& m) {
  Tensor<T> out = mel;
  const T mu = static_cast<T>(m.mel_norm_mean), sd = static_cast<T>(m.mel_norm_std);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (out[i] - mu) / sd;
  return out;
}

/// (T,C) data tensor -> (1,T,C) single-sample batch.
template <class T>
Tensor<T> to_batch(const Tensor<T>& one) {
  if (one.rank() != 2) throw ShapeError("to_batch: expected a rank-2 tensor");
  Tensor<T> out({1, one.dim(0), one.dim(1)});
  std::copy(one.data(), one.data() + one.numel(), out.data());
  return out;
}

template <class T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
  if (items.empty()) throw ShapeError("stack_batch: empty");
  const std::size_t t = items[0].dim(0), c = items[0].dim(1);
  Tensor<T> out({items.size(), t, c});
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].dim(0) != t || items[i].dim(1) != c) throw ShapeError("stack_batch: ragged shapes");
    std::copy(items[i].data(), items[i].data() + t * c, out.data() + i * t * c);
  }
  return out;
}

namespace detail {

template <class T>
Var<T> bilstm_seq(const ParamStore<T>& p, const std::string& prefix, const Var<T>& x, int layers) {
  Var<T> h = x;
  for (int l = 0; l < layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    const Var<T> f = nn::lstm_seq(h, p.at(base + ".f.w_ih"), p.at(base + ".f.w_hh"), p.at(base + ".f.bias"));
    const Var<T> r = ad::reverse_time(
        nn::lstm_seq(ad::reverse_time(h), p.at(base + ".r.w_ih"), p.at(base + ".r.w_hh"), p.at(base + ".r.bias")));
    h = ad::concat_channels<T>({f, r});
  }
  return h;
}

/// Final hidden state of the top layer: forward direction at the last step
/// concatenated with the reverse direction at its last processed step.
template <class T>
Var<T> bilstm_last_hidden(const ParamStore<T>& p, const std::string& prefix, const Var<T>& x, int layers) {
  Var<T> h = x;
  Var<T> f, r;
  for (int l = 0; l < layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    f = nn::lstm_seq(h, p.at(base + ".f.w_ih"), p.at(base + ".f.w_hh"), p.at(base + ".f.bias"));
    r = ad::reverse_time(
        nn::lstm_seq(ad::reverse_time(h), p.at(base + ".r.w_ih"), p.at(base + ".r.w_hh"), p.at(base + ".r.bias")));
    h = ad::concat_channels<T>({f, r});
  }
  const std::size_t t = h.value().dim(1);
  return ad::concat_channels<T>({ad::take_time(f, t - 1), ad::take_time(r, 0)});
}

template <class T>
Tensor<T> tiled_position_codes(std::size_t b, std::size_t t, std::size_t c) {
  const Tensor<T> pe = nn::sinusoid_position_codes<T>(t, c);
  Tensor<T> out({b, t, c});
  for (std::size_t i = 0; i < b; ++i) std::copy(pe.data(), pe.data() + t * c, out.data() + i * t * c);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// temporal encoder
// ---------------------------------------------------------------------------

/// Conv stack only (pre-recurrence); exposed so translation equivariance can
/// be probed on it directly.
template <class T>
Var<T> temporal_conv_stack(const ModelConfig& m, const ParamStore<T>& p, const Var<T>& v) {
  if (v.value().dim(2) != static_cast<std::size_t>(m.video_dim))
    throw ShapeError("temporal encoder: feature width " + std::to_string(v.value().dim(2)) +
                     " does not match configured video_dim " + std::to_string(m.video_dim));
  Var<T> h = v;
  for (int i = 0; i < m.te_conv_layers; ++i) {
    const std::string base = "te.conv" + std::to_string(i);
    h = nn::conv1d_same(h, p.at(base + ".w"), p.at(base + ".b"), static_cast<std::size_t>(m.te_conv_kernel));
    h = ad::instance_norm(h, p.at(base + ".norm.g"), p.at(base + ".norm.beta"));
    h = ad::leaky_relu(h, static_cast<T>(m.leaky_slope));
  }
  return h;
}

/// Video features (B,T_v,D_v) -> temporal code (B,T_v,temporal_dim).
template <class T>
Var<T> temporal_encode(const ModelConfig& m, const ParamStore<T>& p, const Var<T>& v) {
  const Var<T> h = temporal_conv_stack(m, p, v);
  const Var<T> seq = detail::bilstm_seq(p, "te.lstm", h, m.te_lstm_layers);
  return ad::linear(seq, p.at("te.out.w"), p.at("te.out.b"));
}

// ---------------------------------------------------------------------------
// gated conv unit (two inputs, two outputs)
// ---------------------------------------------------------------------------

/// x_o = R[tanh(skip + in) * sigmoid(out + in)], c_o = R[skip], where `in`
/// is the two-conv input gate on the feature path and `skip`/`out` are
/// single convs on the condition path.
template <class T>
std::pair<Var<T>, Var<T>> gated_unit(const ModelConfig& m, const ParamStore<T>& p, const std::string& prefix,
                                     const Var<T>& x_i, const Var<T>& c_i, ResamplePolicy& policy) {
  if (x_i.value().shape() != c_i.value().shape())
    throw ShapeError("gated_unit: feature and condition inputs must share shape");
  Var<T> in = nn::conv1d_same(x_i, p.at(prefix + ".in1.w"), p.at(prefix + ".in1.b"),
                              static_cast<std::size_t>(m.gu_in_kernel1));
  in = nn::conv1d_same(in, p.at(prefix + ".in2.w"), p.at(prefix + ".in2.b"),
                       static_cast<std::size_t>(m.gu_in_kernel2));
  Var<T> skip = nn::conv1d_same(c_i, p.at(prefix + ".skip.w"), p.at(prefix + ".skip.b"),
                                static_cast<std::size_t>(m.gu_skip_kernel));
  Var<T> out = nn::conv1d_same(c_i, p.at(prefix + ".out.w"), p.at(prefix + ".out.b"),
                               static_cast<std::size_t>(m.gu_out_kernel));
  if (m.gu_use_norm) {
    in = ad::instance_norm(in, p.at(prefix + ".in_norm.g"), p.at(prefix + ".in_norm.beta"));
    const auto groups = static_cast<std::size_t>(m.gu_norm_groups);
    skip = ad::group_norm(skip, p.at(prefix + ".skip_norm.g"), p.at(prefix + ".skip_norm.beta"), groups);
    out = ad::group_norm(out, p.at(prefix + ".out_norm.g"), p.at(prefix + ".out_norm.beta"), groups);
  }
  const Var<T> gated = ad::mul(ad::vtanh(ad::add(skip, in)), ad::vsigmoid(ad::add(out, in)));
  return {maybe_resample(gated, policy), maybe_resample(skip, policy)};
}

// ---------------------------------------------------------------------------
// acoustic encoder
// ---------------------------------------------------------------------------

/// Reference mel (B,T,n_mels tensor, any T >= k_min) -> timbre code (B, 2*hidden).
/// The first gated unit receives the projected mel on both inputs.
template <class T>
Var<T> acoustic_encode(const ModelConfig& m, const ParamStore<T>& p, const Tensor<T>& mel,
                       ResamplePolicy& policy) {
  if (mel.rank() != 3 || mel.dim(2) != static_cast<std::size_t>(m.n_mels))
    throw ShapeError("acoustic encoder: expected (B,T," + std::to_string(m.n_mels) + ") mel");
  if (mel.dim(1) < static_cast<std::size_t>(m.rs_k_min))
    throw DataError("acoustic encoder: mel has fewer frames than the resampler needs");
  const Var<T> x = Var<T>::constant(normalize_mel(mel, m));
  Var<T> h = ad::linear(x, p.at("ae.proj.w"), p.at("ae.proj.b"));
  Var<T> xf = h, cf = h;
  for (int i = 0; i < m.gu_layers; ++i) {
    auto [nx, nc] = gated_unit(m, p, "ae.gu" + std::to_string(i), xf, cf, policy);
    xf = nx;
    cf = nc;
  }
  return detail::bilstm_last_hidden(p, "ae.lstm", xf, m.ae_lstm_layers);
}

// ---------------------------------------------------------------------------
// background encoder
// ---------------------------------------------------------------------------

/// Raw mel (B,T,n_mels tensor) -> background code (B, background_dim).
/// Applies the median energy mask per sample before encoding.
template <class T>
Var<T> background_encode(const ModelConfig& m, const ParamStore<T>& p, const Tensor<T>& mel) {
  if (mel.rank() != 3 || mel.dim(2) != static_cast<std::size_t>(m.n_mels))
    throw ShapeError("background encoder: expected (B,T," + std::to_string(m.n_mels) + ") mel");
  const std::size_t b = mel.dim(0), t = mel.dim(1), c = mel.dim(2);
  Tensor<T> masked({b, t, c});
  for (std::size_t i = 0; i < b; ++i) {
    Tensor<T> one({t, c});
    std::copy(mel.data() + i * t * c, mel.data() + (i + 1) * t * c, one.data());
    const Tensor<T> mk = dsp::energy_mask(one, m.mel_floor);
    std::copy(mk.data(), mk.data() + t * c, masked.data() + i * t * c);
  }
  const Var<T> x = Var<T>::constant(normalize_mel(masked, m));
  const Var<T> last = detail::bilstm_last_hidden(p, "be.lstm", x, m.be_lstm_layers);
  return ad::linear(last, p.at("be.out.w"), p.at("be.out.b"));
}

// ---------------------------------------------------------------------------
// mel decoder
// ---------------------------------------------------------------------------

/// Codes (B,T_v,*) concatenated channel-wise -> mel (B, 4*T_v, n_mels) in the
/// log-mel domain.
template <class T>
Var<T> decode(const ModelConfig& m, const ParamStore<T>& p, const Var<T>& temporal, const Var<T>& timbre_exp,
              const Var<T>& background_exp, bool train, Rng& rng) {
  if (temporal.value().dim(1) != timbre_exp.value().dim(1) ||
      temporal.value().dim(1) != background_exp.value().dim(1))
    throw ShapeError("decode: code lengths disagree");
  Var<T> h = ad::concat_channels<T>({temporal, timbre_exp, background_exp});
  const auto k = static_cast<std::size_t>(m.dec_convt_kernel);
  const auto s = static_cast<std::size_t>(m.dec_convt_stride);
  h = ad::leaky_relu(nn::conv_transpose1d(h, p.at("dec.up0.w"), p.at("dec.up0.b"), k, s, 1),
                     static_cast<T>(m.leaky_slope));
  h = ad::leaky_relu(nn::conv_transpose1d(h, p.at("dec.up1.w"), p.at("dec.up1.b"), k, s, 1),
                     static_cast<T>(m.leaky_slope));
  h = ad::linear(h, p.at("dec.proj.w"), p.at("dec.proj.b"));
  const std::size_t b = h.value().dim(0), t = h.value().dim(1), c = h.value().dim(2);
  h = ad::add_constant(h, detail::tiled_position_codes<T>(b, t, c));
  for (int i = 0; i < m.dec_blocks; ++i) {
    const std::string blk = "dec.blk" + std::to_string(i);
    nn::AttentionWeights::Of<T> aw{p.at(blk + ".attn.q.w"), p.at(blk + ".attn.q.b"), p.at(blk + ".attn.k.w"),
                                   p.at(blk + ".attn.k.b"), p.at(blk + ".attn.v.w"), p.at(blk + ".attn.v.b"),
                                   p.at(blk + ".attn.o.w"), p.at(blk + ".attn.o.b")};
    Var<T> a = nn::self_attention(h, aw, static_cast<std::size_t>(m.dec_heads));
    a = ad::dropout(a, m.dec_dropout, rng, train);
    h = ad::layer_norm(ad::add(h, a), p.at(blk + ".ln1.g"), p.at(blk + ".ln1.beta"));
    Var<T> cv = nn::conv1d_same(h, p.at(blk + ".conv1.w"), p.at(blk + ".conv1.b"),
                                static_cast<std::size_t>(m.dec_conv_kernel));
    cv = ad::relu(cv);
    cv = nn::conv1d_same(cv, p.at(blk + ".conv2.w"), p.at(blk + ".conv2.b"),
                         static_cast<std::size_t>(m.dec_conv_kernel));
    cv = ad::dropout(cv, m.dec_dropout, rng, train);
    h = ad::layer_norm(ad::add(h, cv), p.at(blk + ".ln2.g"), p.at(blk + ".ln2.beta"));
  }
  Var<T> out = ad::linear(h, p.at("dec.out.w"), p.at("dec.out.b"));
  // back to the log-mel domain
  return ad::add_scalar(ad::scale(out, static_cast<T>(m.mel_norm_std)), static_cast<T>(m.mel_norm_mean));
}

// ---------------------------------------------------------------------------
// full generator
// ---------------------------------------------------------------------------

/// Which codes feed the decoder; zeroed entries emulate removing a component
/// at inference.
struct CodeMask {
  bool temporal = true;
  bool timbre = true;
  bool background = true;
};

/// video (B,T_v,D_v), mel_ref / mel_bg (B,T,n_mels) data tensors. In
/// training both mels are the target; at inference mel_ref is the reference
/// audio's mel and mel_bg the silence mel.
template <class T>
Var<T> generate(const ModelConfig& m, const ParamStore<T>& p, const Tensor<T>& video,
                const Tensor<T>& mel_ref, const Tensor<T>& mel_bg, ResamplePolicy& policy, bool train,
                Rng& rng, const CodeMask& mask = {}) {
  const Var<T> v = Var<T>::constant(video);
  const std::size_t tv = video.dim(1);

  Var<T> t_code = temporal_encode(m, p, v);
  if (!mask.temporal) t_code = Var<T>::constant(Tensor<T>(t_code.value().shape(), T(0)));

  Var<T> a_code = acoustic_encode(m, p, mel_ref, policy);
  if (!mask.timbre) a_code = Var<T>::constant(Tensor<T>(a_code.value().shape(), T(0)));

  Var<T> b_code = background_encode(m, p, mel_bg);
  if (!mask.background) b_code = Var<T>::constant(Tensor<T>(b_code.value().shape(), T(0)));

  return decode(m, p, t_code, ad::broadcast_time(a_code, tv), ad::broadcast_time(b_code, tv), train, rng);
}

// ---------------------------------------------------------------------------
// discriminators
// ---------------------------------------------------------------------------

/// Alignment discriminator: mel (B,4*T_v,n_mels) conditioned on video
/// (B,T_v,D_v); per-position sigmoid scores (B,4*T_v,1).
template <class T>
Var<T> alignment_score(const ModelConfig& m, const ParamStore<T>& p, const Var<T>& mel,
                       const Tensor<T>& video) {
  const std::size_t tv = video.dim(1);  // (B,T_v,D_v)
  const std::size_t tm = mel.value().dim(1);
  if (tm != static_cast<std::size_t>(m.upsample_factor()) * tv)
    throw ShapeError("alignment discriminator: mel frames " + std::to_string(tm) + " != " +
                     std::to_string(m.upsample_factor()) + " x video frames " + std::to_string(tv));
  if (video.dim(2) != static_cast<std::size_t>(m.video_dim))
    throw ShapeError("alignment discriminator: video feature width mismatch");

  const auto k = static_cast<std::size_t>(m.ad_convt_kernel);
  const auto s = static_cast<std::size_t>(m.ad_convt_stride);
  Var<T> vup = Var<T>::constant(video);
  vup = ad::leaky_relu(nn::conv_transpose1d(vup, p.at("ad.up0.w"), p.at("ad.up0.b"), k, s, 1),
                       static_cast<T>(m.leaky_slope));
  vup = ad::leaky_relu(nn::conv_transpose1d(vup, p.at("ad.up1.w"), p.at("ad.up1.b"), k, s, 1),
                       static_cast<T>(m.leaky_slope));

  const Var<T> mel_n = ad::add_scalar(ad::scale(mel, static_cast<T>(1.0 / m.mel_norm_std)),
                                      static_cast<T>(-m.mel_norm_mean / m.mel_norm_std));
  const Var<T> mfeat = nn::conv1d_same(mel_n, p.at("ad.mel.w"), p.at("ad.mel.b"),
                                       static_cast<std::size_t>(m.ad_conv_kernel));
  Var<T> h = ad::concat_channels<T>({mfeat, vup});
  for (int i = 0; i < m.ad_conv_layers; ++i) {
    const std::string base = "ad.body" + std::to_string(i);
    h = nn::conv1d_same(h, p.at(base + ".w"), p.at(base + ".b"), static_cast<std::size_t>(m.ad_conv_kernel));
    if (i != m.ad_conv_layers - 1) {
      h = ad::instance_norm(h, p.at(base + ".norm.g"), p.at(base + ".norm.beta"));
      h = ad::leaky_relu(h, static_cast<T>(m.leaky_slope));
    }
  }
  return ad::vsigmoid(h);
}

/// Multi-window mel discriminator: three 2-D conv stacks over window lengths
/// {T, T/2, T/4}; the window start for the shorter views is drawn from `rng`.
/// Returns one sigmoid score map per sub-discriminator.
template <class T>
std::vector<Var<T>> mel_window_scores(const ModelConfig& m, const ParamStore<T>& p, const Var<T>& mel,
                                      Rng& rng) {
  const std::size_t tm = mel.value().dim(1);
  if (tm < 4) throw DataError("mel discriminator: input shorter than the smallest window");
  const Var<T> mel_n = ad::add_scalar(ad::scale(mel, static_cast<T>(1.0 / m.mel_norm_std)),
                                      static_cast<T>(-m.mel_norm_mean / m.mel_norm_std));
  std::vector<Var<T>> scores;
  const auto mk = static_cast<std::size_t>(m.mwd_kernel);
  for (int sub = 0; sub < 3; ++sub) {
    const std::size_t w_len = tm >> sub;
    const std::size_t start =
        w_len == tm ? 0 : static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(tm - w_len)));
    Var<T> win = ad::slice_time(mel_n, start, w_len);
    const std::size_t b = win.value().dim(0), c = win.value().dim(2);
    Var<T> img = ad::reshape(win, {b, w_len, c, 1});
    const std::string s = "mwd.s" + std::to_string(sub);
    Var<T> h = nn::conv2d(img, p.at(s + ".c0.w"), p.at(s + ".c0.b"), mk, mk, 2, 2, mk / 2, mk / 2);
    h = ad::leaky_relu(h, static_cast<T>(m.leaky_slope));
    h = nn::conv2d(h, p.at(s + ".c1.w"), p.at(s + ".c1.b"), mk, mk, 2, 2, mk / 2, mk / 2);
    h = ad::leaky_relu(h, static_cast<T>(m.leaky_slope));
    h = nn::conv2d(h, p.at(s + ".c2.w"), p.at(s + ".c2.b"), 3, 3, 1, 1, 1, 1);
    scores.push_back(ad::vsigmoid(h));
  }
  return scores;
}

}  // namespace vts::model
