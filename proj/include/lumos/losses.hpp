#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lumos/ad/ops.hpp"
#include "lumos/core/tensor.hpp"
#include "lumos/granularity.hpp"

namespace lumos {

// probability clamp for log terms (BCE, entropy)
constexpr double kProbEps = 1e-7;
// normalizer guard for prototype pooling and the consistency denominator
constexpr double kDenomEps = 1e-6;

// Scalar loss cores. Templated so the gradient tests can run the identical
// formulas in double against central finite differences; the float tape ops
// below call these with T = float.
namespace lossmath {

template <typename T>
inline T clamp_prob(T p) {
  const T lo = (T)kProbEps;
  const T hi = (T)1 - (T)kProbEps;
  return p < lo ? lo : (p > hi ? hi : p);
}

template <typename T>
inline T bce_elem(T p, T t) {
  p = clamp_prob(p);
  return -(t * std::log(p) + ((T)1 - t) * std::log((T)1 - p));
}

template <typename T>
inline T bce_elem_dp(T p, T t) {
  p = clamp_prob(p);
  return (p - t) / (p * ((T)1 - p));
}

// Dice (smoothing 1, mean over classes) plus mean elementwise BCE, equal
// weights. p and onehot are [classes, n] row-major. grad (same size) may be
// null; when given it is overwritten with dL/dp.
template <typename T>
T dice_bce(const T* p, const T* onehot, int classes, int64_t n, T* grad = nullptr) {
  const T s = (T)1;
  const int64_t total = (int64_t)classes * n;
  if (grad) std::fill(grad, grad + total, (T)0);
  T dice_sum = 0;
  for (int g = 0; g < classes; ++g) {
    const T* pg = p + (int64_t)g * n;
    const T* qg = onehot + (int64_t)g * n;
    T spq = 0, sp = 0, sq = 0;
    for (int64_t i = 0; i < n; ++i) {
      spq += pg[i] * qg[i];
      sp += pg[i];
      sq += qg[i];
    }
    const T denom = sp + sq + s;
    dice_sum += (T)1 - ((T)2 * spq + s) / denom;
    if (grad) {
      T* gg = grad + (int64_t)g * n;
      const T lift = ((T)2 * spq + s) / (denom * denom);
      for (int64_t i = 0; i < n; ++i)
        gg[i] += (lift - (T)2 * qg[i] / denom) / (T)classes;
    }
  }
  T bce_sum = 0;
  for (int64_t i = 0; i < total; ++i) bce_sum += bce_elem(p[i], onehot[i]);
  if (grad)
    for (int64_t i = 0; i < total; ++i)
      grad[i] += bce_elem_dp(p[i], onehot[i]) / (T)total;
  return dice_sum / (T)classes + bce_sum / (T)total;
}

template <typename T>
T bce_mean(const T* p, const T* t, int64_t n, T* grad = nullptr) {
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += bce_elem(p[i], t[i]);
  if (grad)
    for (int64_t i = 0; i < n; ++i) grad[i] = bce_elem_dp(p[i], t[i]) / (T)n;
  return acc / (T)n;
}

// L = sum(w * bce(p, t)) / (sum(m) + eps). w and m are fixed fields (no
// gradient flows into them); grad is dL/dp.
template <typename T>
T consistency(const T* p, const T* t, const T* w, const T* m, int64_t n,
              T* grad = nullptr) {
  T num = 0, msum = 0;
  for (int64_t i = 0; i < n; ++i) {
    num += w[i] * bce_elem(p[i], t[i]);
    msum += m[i];
  }
  const T denom = msum + (T)kDenomEps;
  if (grad)
    for (int64_t i = 0; i < n; ++i) grad[i] = w[i] * bce_elem_dp(p[i], t[i]) / denom;
  return num / denom;
}

}  // namespace lossmath

// ---- value-side fields (teacher quantities, never on the tape) ----

// hard threshold at 0.5, ties to foreground
Tensor pseudo_label(const Tensor& probs);

// per-element binary entropy -p ln p - (1-p) ln(1-p)
Tensor uncertainty(const Tensor& probs);

// noisy-OR group composition of base probabilities: [B, L, S] -> [B, G, S]
// (a [L, S] input is treated as batch 1 and returned as [G, S])
Tensor compose_probs(const Tensor& base, const std::vector<std::vector<int>>& groups);

// per-class feature pooling: feat [C, N] x teacher_probs [G, N] -> [G, C];
// prototype_g = sum_i feat(:,i) p(g,i) / (sum_i p(g,i) + eps)
Tensor prototypes(const Tensor& feat, const Tensor& teacher_probs);

// cosine similarity rescaled to [0,1]: (1 + cos(feat_i, proto_g)) / 2,
// zero-norm vectors on either side -> 0.5
Tensor similarity_map(const Tensor& feat, const Tensor& protos);

struct ReliabilityFields {
  Tensor s_sim;     // in [0,1]
  Tensor m;         // {0,1}: student entropy strictly above teacher entropy
  Tensor w_region;  // m * (1 - (s_sim - p_t)^2)
};

ReliabilityFields reliability_weights(const Tensor& s_sim, const Tensor& p_t,
                                      const Tensor& h_s, const Tensor& h_t);

// Fuses a coarse-level prediction with the base prediction composed to
// target_level: p_f = lambda * p_m_up + (1 - lambda) * p_f_up. p_m is used
// directly when its level matches target_level; a coarser p_m cannot be
// re-expanded, so its composition is rebuilt from p_f_base instead.
Tensor merge_predictions(const Tensor& p_m, int p_m_level,
                         const Tensor& p_f_base, const Schema& schema,
                         int target_level, float lambda = 0.5f);

// ---- tape ops (differentiable w.r.t. the probability input only) ----

ad::Var dice_bce_loss(ad::Var probs, const Tensor& onehot);
ad::Var bce_mean_loss(ad::Var probs, const Tensor& target);
ad::Var consistency_loss(ad::Var p_f, const Tensor& t_f, const Tensor& w,
                         const Tensor& m);

// Both unidirectional pseudo-label BCE terms plus their sum. Each direction's
// target is the thresholded value of the other branch (gradient-free).
struct MutualLosses {
  ad::Var a_to_b;
  ad::Var b_to_a;
  ad::Var total;
};
MutualLosses mutual_learning_loss(ad::Var p_a, ad::Var p_b);

struct LossBreakdown {
  double l_sup = 0.0;
  double l_con = 0.0;
  double l_total = 0.0;  // always exactly l_sup + l_con
};

// Unweighted sum of the two terms. l_con may be an empty Var (labeled-only
// batches); the breakdown is filled from the tape values.
ad::Var total_loss(ad::Var l_sup, ad::Var l_con, LossBreakdown* breakdown);

}  // namespace lumos
