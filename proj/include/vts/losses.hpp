#pragma once

// Training objectives. The norm notation in the adversarial terms is
// realized as the mean squared deviation over score-map positions, which
// keeps the loss weights scale-stable across desk and full-size shapes.

#include <vector>

#include "vts/autodiff.hpp"

namespace vts::loss {

using ad::Var;

struct LossWeights {
  double lambda_mel = 10000.0;
  double lambda_adv = 1.0;
};

/// Mean absolute difference over all bins.
template <class T>
Var<T> mel_l1(const Var<T>& m_hat, const Var<T>& m) {
  if (!m_hat.value().same_shape(m.value()))
    throw ShapeError("mel_l1: " + m_hat.value().shape_str() + " vs " + m.value().shape_str());
  return ad::mean_all(ad::vabs(ad::sub(m_hat, m)));
}

/// Generator adversarial term: mean squared deviation from 1 of the
/// alignment scores plus the same averaged over the mel sub-discriminators.
template <class T>
Var<T> adv_generator_loss(const Var<T>& alignment_scores, const std::vector<Var<T>>& mel_scores) {
  Var<T> total = ad::mean_all(ad::square(ad::rsub_scalar(T(1), alignment_scores)));
  if (!mel_scores.empty()) {
    Var<T> acc;
    for (const auto& s : mel_scores) {
      Var<T> term = ad::mean_all(ad::square(ad::rsub_scalar(T(1), s)));
      acc = acc.defined() ? ad::add(acc, term) : term;
    }
    total = ad::add(total, ad::scale(acc, T(1) / static_cast<T>(mel_scores.size())));
  }
  return total;
}

/// Alignment discriminator objective: real scores pulled to 1; the
/// generated pair and the time-shifted real pair both pulled to 0.
template <class T>
Var<T> alignment_disc_loss(const Var<T>& real_scores, const Var<T>& fake_scores,
                           const Var<T>& shifted_scores) {
  const Var<T> l_real = ad::mean_all(ad::square(ad::rsub_scalar(T(1), real_scores)));
  const Var<T> l_fake = ad::add(ad::mean_all(ad::square(fake_scores)), ad::mean_all(ad::square(shifted_scores)));
  return ad::add(l_real, l_fake);
}

/// Mel discriminator objective, averaged over the three sub-discriminators.
template <class T>
Var<T> mel_disc_loss(const std::vector<Var<T>>& real_scores, const std::vector<Var<T>>& fake_scores) {
  if (real_scores.size() != 3 || fake_scores.size() != 3)
    throw Error("mel_disc_loss: expected 3 score maps per side, got " + std::to_string(real_scores.size()) +
                "/" + std::to_string(fake_scores.size()));
  Var<T> acc;
  for (std::size_t i = 0; i < 3; ++i) {
    Var<T> term = ad::add(ad::mean_all(ad::square(ad::rsub_scalar(T(1), real_scores[i]))),
                          ad::mean_all(ad::square(fake_scores[i])));
    acc = acc.defined() ? ad::add(acc, term) : term;
  }
  return ad::scale(acc, T(1) / T(3));
}

/// Weighted generator total.
template <class T>
Var<T> generator_total(const Var<T>& l_mel, const Var<T>& l_adv, const LossWeights& w) {
  return ad::add(ad::scale(l_mel, static_cast<T>(w.lambda_mel)), ad::scale(l_adv, static_cast<T>(w.lambda_adv)));
}

}  // namespace vts::loss
