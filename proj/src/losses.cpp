#include "lumos/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "lumos/ad/tape.hpp"

namespace lumos {

using ad::Var;

Tensor pseudo_label(const Tensor& probs) {
  Tensor t(probs.shape());
  for (int64_t i = 0; i < probs.numel(); ++i) t[i] = probs[i] >= 0.5f ? 1.0f : 0.0f;
  return t;
}

Tensor uncertainty(const Tensor& probs) {
  Tensor h(probs.shape());
  for (int64_t i = 0; i < probs.numel(); ++i) {
    const float p = lossmath::clamp_prob(probs[i]);
    h[i] = -(p * std::log(p) + (1.0f - p) * std::log(1.0f - p));
  }
  return h;
}

Tensor compose_probs(const Tensor& base, const std::vector<std::vector<int>>& groups) {
  const bool batched = base.ndim() == 3;
  if (!batched && base.ndim() != 2)
    throw std::invalid_argument("compose_probs: expected [B,L,S] or [L,S]");
  const int64_t B = batched ? base.dim(0) : 1;
  const int64_t L = base.dim(batched ? 1 : 0);
  const int64_t S = base.dim(batched ? 2 : 1);
  const int64_t G = (int64_t)groups.size();
  Tensor out = batched ? Tensor({B, G, S}) : Tensor({G, S});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t g = 0; g < G; ++g) {
      float* o = out.data() + (b * G + g) * S;
      for (int l : groups[(size_t)g])
        if (l < 0 || l >= L) throw std::invalid_argument("compose_probs: group index out of range");
      if (groups[(size_t)g].size() == 1) {
        // singleton union is the class itself; bypass 1-(1-p) rounding
        const int l = groups[(size_t)g][0];
        std::copy_n(base.data() + (b * L + l) * S, (size_t)S, o);
        continue;
      }
      for (int64_t s = 0; s < S; ++s) {
        float keep = 1.0f;
        for (int l : groups[(size_t)g])
          keep *= 1.0f - base[(b * L + l) * S + s];
        o[s] = 1.0f - keep;
      }
    }
  return out;
}

Tensor prototypes(const Tensor& feat, const Tensor& teacher_probs) {
  if (feat.ndim() != 2 || teacher_probs.ndim() != 2 || feat.dim(1) != teacher_probs.dim(1))
    throw std::invalid_argument("prototypes: feat [C,N] and probs [G,N] must share N");
  const int64_t C = feat.dim(0), N = feat.dim(1), G = teacher_probs.dim(0);
  Tensor proto({G, C});
  for (int64_t g = 0; g < G; ++g) {
    const float* p = teacher_probs.data() + g * N;
    double wsum = 0.0;
    for (int64_t i = 0; i < N; ++i) wsum += p[i];
    const double inv = 1.0 / (wsum + kDenomEps);
    for (int64_t c = 0; c < C; ++c) {
      const float* f = feat.data() + c * N;
      double acc = 0.0;
      for (int64_t i = 0; i < N; ++i) acc += (double)f[i] * p[i];
      proto.at(g, c) = (float)(acc * inv);
    }
  }
  return proto;
}

Tensor similarity_map(const Tensor& feat, const Tensor& protos) {
  if (feat.ndim() != 2 || protos.ndim() != 2 || feat.dim(0) != protos.dim(1))
    throw std::invalid_argument("similarity_map: feat [C,N] and protos [G,C] must share C");
  const int64_t C = feat.dim(0), N = feat.dim(1), G = protos.dim(0);
  Tensor sim({G, N});
  std::vector<double> pnorm(G);
  for (int64_t g = 0; g < G; ++g) {
    double n2 = 0.0;
    for (int64_t c = 0; c < C; ++c) n2 += (double)protos.at(g, c) * protos.at(g, c);
    pnorm[(size_t)g] = std::sqrt(n2);
  }
  for (int64_t i = 0; i < N; ++i) {
    double fn2 = 0.0;
    for (int64_t c = 0; c < C; ++c) fn2 += (double)feat[c * N + i] * feat[c * N + i];
    const double fnorm = std::sqrt(fn2);
    for (int64_t g = 0; g < G; ++g) {
      float s = 0.5f;
      if (fnorm > 0.0 && pnorm[(size_t)g] > 0.0) {
        double dot = 0.0;
        for (int64_t c = 0; c < C; ++c) dot += (double)feat[c * N + i] * protos.at(g, c);
        const double cosv = dot / (fnorm * pnorm[(size_t)g]);
        s = (float)((1.0 + cosv) * 0.5);
      }
      sim[g * N + i] = s;
    }
  }
  return sim;
}

ReliabilityFields reliability_weights(const Tensor& s_sim, const Tensor& p_t,
                                      const Tensor& h_s, const Tensor& h_t) {
  if (!s_sim.same_shape(p_t) || !s_sim.same_shape(h_s) || !s_sim.same_shape(h_t))
    throw std::invalid_argument("reliability_weights: field shapes differ");
  ReliabilityFields f;
  f.s_sim = s_sim;
  f.m = Tensor(s_sim.shape());
  f.w_region = Tensor(s_sim.shape());
  for (int64_t i = 0; i < s_sim.numel(); ++i) {
    const float m = h_s[i] > h_t[i] ? 1.0f : 0.0f;
    const float r = s_sim[i] - p_t[i];
    f.m[i] = m;
    f.w_region[i] = m * (1.0f - r * r);
  }
  return f;
}

Tensor merge_predictions(const Tensor& p_m, int p_m_level,
                         const Tensor& p_f_base, const Schema& schema,
                         int target_level, float lambda) {
  Tensor p_f_up = compose_probs(p_f_base, schema.levels[(size_t)target_level].groups);
  Tensor p_m_up = p_m_level == target_level
                      ? p_m
                      : compose_probs(p_f_base, schema.levels[(size_t)target_level].groups);
  if (!p_m_up.same_shape(p_f_up))
    throw std::invalid_argument("merge_predictions: level shapes incompatible");
  Tensor fused(p_f_up.shape());
  for (int64_t i = 0; i < fused.numel(); ++i)
    fused[i] = lambda * p_m_up[i] + (1.0f - lambda) * p_f_up[i];
  return fused;
}

Var dice_bce_loss(Var probs, const Tensor& onehot) {
  ad::Tape& t = *probs.tape;
  const Tensor p = t.value(probs);
  if (!p.same_shape(onehot) || p.ndim() < 2)
    throw std::invalid_argument("dice_bce_loss: probs/labels shape mismatch");
  // leading dims are classes (and batch folded in by the caller); last is N
  const int64_t n = p.dim(p.ndim() - 1);
  const int classes = (int)(p.numel() / n);
  Tensor val({1});
  val[0] = lossmath::dice_bce(p.data(), onehot.data(), classes, n);
  Var out = t.emit(std::move(val), t.requires_grad(probs));
  if (t.requires_grad(probs)) {
    t.set_backward(out, [probs, out, onehot, classes, n](ad::Tape& tp) {
      const Tensor& p = tp.value(probs);
      Tensor g(p.shape());
      lossmath::dice_bce(p.data(), onehot.data(), classes, n, g.data());
      const float go = tp.grad(out)[0];
      Tensor& gx = tp.grad(probs);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += go * g[i];
    });
  }
  return out;
}

Var bce_mean_loss(Var probs, const Tensor& target) {
  ad::Tape& t = *probs.tape;
  const Tensor p = t.value(probs);
  if (!p.same_shape(target))
    throw std::invalid_argument("bce_mean_loss: probs/target shape mismatch");
  Tensor val({1});
  val[0] = lossmath::bce_mean(p.data(), target.data(), p.numel());
  Var out = t.emit(std::move(val), t.requires_grad(probs));
  if (t.requires_grad(probs)) {
    t.set_backward(out, [probs, out, target](ad::Tape& tp) {
      const Tensor& p = tp.value(probs);
      Tensor g(p.shape());
      lossmath::bce_mean(p.data(), target.data(), p.numel(), g.data());
      const float go = tp.grad(out)[0];
      Tensor& gx = tp.grad(probs);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += go * g[i];
    });
  }
  return out;
}

Var consistency_loss(Var p_f, const Tensor& t_f, const Tensor& w, const Tensor& m) {
  ad::Tape& t = *p_f.tape;
  const Tensor p = t.value(p_f);
  if (!p.same_shape(t_f) || !p.same_shape(w) || !p.same_shape(m))
    throw std::invalid_argument("consistency_loss: field shapes differ");
  Tensor val({1});
  val[0] = lossmath::consistency(p.data(), t_f.data(), w.data(), m.data(), p.numel());
  Var out = t.emit(std::move(val), t.requires_grad(p_f));
  if (t.requires_grad(p_f)) {
    t.set_backward(out, [p_f, out, t_f, w, m](ad::Tape& tp) {
      const Tensor& p = tp.value(p_f);
      Tensor g(p.shape());
      lossmath::consistency(p.data(), t_f.data(), w.data(), m.data(), p.numel(), g.data());
      const float go = tp.grad(out)[0];
      Tensor& gx = tp.grad(p_f);
      for (int64_t i = 0; i < g.numel(); ++i) gx[i] += go * g[i];
    });
  }
  return out;
}

MutualLosses mutual_learning_loss(Var p_a, Var p_b) {
  ad::Tape& t = *p_a.tape;
  MutualLosses ml;
  ml.a_to_b = bce_mean_loss(p_a, pseudo_label(t.value(p_b)));
  ml.b_to_a = bce_mean_loss(p_b, pseudo_label(t.value(p_a)));
  ml.total = ad::add(ml.a_to_b, ml.b_to_a);
  return ml;
}

Var total_loss(Var l_sup, Var l_con, LossBreakdown* breakdown) {
  ad::Tape& t = *l_sup.tape;
  Var total = l_con.ok() ? ad::add(l_sup, l_con) : l_sup;
  if (breakdown) {
    breakdown->l_sup = t.value(l_sup)[0];
    breakdown->l_con = l_con.ok() ? t.value(l_con)[0] : 0.0;
    breakdown->l_total = breakdown->l_sup + breakdown->l_con;
  }
  return total;
}

}  // namespace lumos
