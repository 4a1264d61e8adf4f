#include "lumos/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

#include "lumos/losses.hpp"

namespace lumos {

using ad::Var;

namespace {

constexpr float kMaskedBias = -1e4f;

Tensor conv_init(Rng& rng, int cout, int cin) {
  Tensor w({cout, cin, 3, 3});
  const float sd = std::sqrt(2.0f / (float)(cin * 9));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = sd * (float)rng.normal();
  return w;
}

Tensor tconv_init(Rng& rng, int ch) {
  // stride == kernel, so each output pixel sees exactly one input pixel
  Tensor w({2, 2, ch, ch});
  const float sd = std::sqrt(2.0f / (float)ch);
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = sd * (float)rng.normal();
  return w;
}

Tensor linear_init(Rng& rng, int out, int in) {
  Tensor w({out, in});
  const float a = std::sqrt(6.0f / (float)(in + out));
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = (float)rng.uniform(-a, a);
  return w;
}

// Attention bias from the running prompt estimates: a query attends only
// where its dot with the deepest tokens is nonnegative (sigmoid >= 0.5). An
// empty region falls back to unmasked. The 2^k-finer target grid replicates
// each deepest-grid cell.
Tensor mask_bias(const Tensor& prompts, const Tensor& tokens, int h5, int w5,
                 int hk, int wk, int heads) {
  const int64_t B = prompts.dim(0), Q = prompts.dim(1), D = prompts.dim(2);
  const int64_t Tk = (int64_t)hk * wk;
  Tensor bias({B * heads, Q, Tk});
  std::vector<uint8_t> in((size_t)h5 * w5);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t q = 0; q < Q; ++q) {
      bool any = false;
      for (int64_t s = 0; s < (int64_t)h5 * w5; ++s) {
        double dot = 0.0;
        const float* pp = prompts.data() + (b * Q + q) * D;
        const float* tt = tokens.data() + (b * h5 * w5 + s) * D;
        for (int64_t d = 0; d < D; ++d) dot += (double)pp[d] * tt[d];
        in[(size_t)s] = dot >= 0.0;
        any = any || in[(size_t)s];
      }
      for (int y = 0; y < hk; ++y)
        for (int x = 0; x < wk; ++x) {
          const int y5 = (int)((int64_t)y * h5 / hk);
          const int x5 = (int)((int64_t)x * w5 / wk);
          const bool keep = !any || in[(size_t)y5 * w5 + x5];
          const float v = keep ? 0.0f : kMaskedBias;
          for (int h = 0; h < heads; ++h)
            bias[((b * heads + h) * Q + q) * Tk + (int64_t)y * wk + x] = v;
        }
    }
  return bias;
}

}  // namespace

Tensor compose_level_probs(const Tensor& base_probs, const Schema& schema, int level) {
  return compose_probs(base_probs, schema.levels[(size_t)level].groups);
}

int Model::add_param(const std::string& name, Tensor value) {
  params_.push_back({name, std::move(value)});
  index_[name] = (int)params_.size() - 1;
  return (int)params_.size() - 1;
}

int Model::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::logic_error("model: unknown parameter " + name);
  return it->second;
}

int64_t Model::param_count(const std::string& prefix) const {
  int64_t n = 0;
  for (const Param& p : params_)
    if (p.name.rfind(prefix, 0) == 0) n += p.value.numel();
  return n;
}

Model::Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
  if (cfg_.stages != 5) throw std::invalid_argument("model: stages must be 5");
  Rng rng(seed);
  const int D = cfg_.prompt_dim();
  const int H2 = 2 * D;  // feed-forward hidden width

  auto add_linear = [&](const std::string& pfx, int out, int in) {
    add_param(pfx + ".w", linear_init(rng, out, in));
    add_param(pfx + ".b", Tensor({out}));
  };
  auto add_ln = [&](const std::string& pfx, int n) {
    add_param(pfx + ".g", Tensor::full({n}, 1.0f));
    add_param(pfx + ".b", Tensor({n}));
  };

  // encoder: two 3x3 convs per stage, first one strided
  int cin = 1;
  for (int k = 1; k <= cfg_.stages; ++k) {
    const int ch = cfg_.base_width << (k - 1);
    const std::string pfx = "enc.s" + std::to_string(k);
    add_param(pfx + ".c1.w", conv_init(rng, ch, cin));
    add_param(pfx + ".c1.b", Tensor({ch}));
    add_param(pfx + ".c2.w", conv_init(rng, ch, ch));
    add_param(pfx + ".c2.b", Tensor({ch}));
    cin = ch;
  }
  for (int i = 0; i < cfg_.tf_blocks; ++i) {
    const std::string pfx = "enc.tf" + std::to_string(i);
    add_ln(pfx + ".ln1", D);
    add_linear(pfx + ".wq", D, D);
    add_linear(pfx + ".wk", D, D);
    add_linear(pfx + ".wv", D, D);
    add_linear(pfx + ".wo", D, D);
    add_ln(pfx + ".ln2", D);
    add_linear(pfx + ".ffn1", H2, D);
    add_linear(pfx + ".ffn2", D, H2);
  }

  {
    Tensor p({cfg_.base_classes, D});
    for (int64_t i = 0; i < p.numel(); ++i) p[i] = (float)rng.uniform(-0.02, 0.02);
    add_param("prompts", std::move(p));
  }
  for (int k = 0; k < cfg_.prompt_layers; ++k) {
    const int cs = cfg_.base_width << (cfg_.stages - 1 - k);  // stage 5-k width
    const std::string pfx = "pd.l" + std::to_string(k);
    add_ln(pfx + ".lnq", D);
    add_linear(pfx + ".wq", D, D);
    add_linear(pfx + ".wk", D, cs);
    add_linear(pfx + ".wv", D, cs);
    add_linear(pfx + ".wo", D, D);
    add_ln(pfx + ".lnf", D);
    add_linear(pfx + ".ffn1", H2, D);
    add_linear(pfx + ".ffn2", D, H2);
  }
  add_linear("head", cfg_.out_channels, D);

  // per-stage decoder channel plan (shared by both branches)
  int xc = D;
  for (int s = 1; s <= cfg_.stages; ++s) {
    const int skip = s < cfg_.stages ? (cfg_.base_width << (cfg_.stages - 1 - s)) : 0;
    const int fo = std::max(cfg_.out_channels, D >> s);
    add_param("decA.s" + std::to_string(s) + ".up.w", tconv_init(rng, xc));
    add_param("decA.s" + std::to_string(s) + ".up.b", Tensor({xc}));
    add_param("decA.s" + std::to_string(s) + ".fuse.w", conv_init(rng, fo, xc + skip));
    add_param("decA.s" + std::to_string(s) + ".fuse.b", Tensor({fo}));
    xc = fo;
  }
  xc = D;
  for (int s = 1; s <= cfg_.stages; ++s) {
    const int skip = s < cfg_.stages ? (cfg_.base_width << (cfg_.stages - 1 - s)) : 0;
    const int fo = std::max(cfg_.out_channels, D >> s);
    add_param("decB.s" + std::to_string(s) + ".fuse.w", conv_init(rng, fo, xc + skip));
    add_param("decB.s" + std::to_string(s) + ".fuse.b", Tensor({fo}));
    xc = fo;
  }
}

Model::Forward Model::forward(ad::Tape& t, const Tensor& images,
                              const ForwardOptions& opts) {
  if (images.ndim() != 4 || images.dim(1) != 1)
    throw std::invalid_argument("model: expected images [B,1,H,W]");
  const int64_t B = images.dim(0), H = images.dim(2), W = images.dim(3);
  const int64_t stride = 1 << cfg_.stages;
  if (H % stride || W % stride)
    throw std::invalid_argument("model: H and W must be divisible by " +
                                std::to_string(stride));
  const int D = cfg_.prompt_dim();
  const int heads = cfg_.heads;

  Forward out;
  out.pvars.assign(params_.size(), Var{});
  auto pvar = [&](const std::string& name) -> Var {
    const int i = index_of(name);
    if (!out.pvars[(size_t)i].ok())
      out.pvars[(size_t)i] = t.leaf(params_[(size_t)i].value, opts.requires_grad);
    return out.pvars[(size_t)i];
  };

  auto mha = [&](Var q_in, Var kv_in, const std::string& pfx,
                 const Tensor* bias) -> Var {
    const int64_t Tq = t.value(q_in).dim(1);
    const int64_t Tk = t.value(kv_in).dim(1);
    const int64_t Din = t.value(kv_in).dim(2);
    Var q2 = ad::linear(ad::reshape(q_in, {B * Tq, D}), pvar(pfx + ".wq.w"),
                        pvar(pfx + ".wq.b"));
    Var k2 = ad::linear(ad::reshape(kv_in, {B * Tk, Din}), pvar(pfx + ".wk.w"),
                        pvar(pfx + ".wk.b"));
    Var v2 = ad::linear(ad::reshape(kv_in, {B * Tk, Din}), pvar(pfx + ".wv.w"),
                        pvar(pfx + ".wv.b"));
    Var Q = ad::split_heads(ad::reshape(q2, {B, Tq, D}), heads);
    Var K = ad::split_heads(ad::reshape(k2, {B, Tk, D}), heads);
    Var V = ad::split_heads(ad::reshape(v2, {B, Tk, D}), heads);
    Var logits = ad::scale(ad::bmm(Q, K, true), 1.0f / std::sqrt((float)(D / heads)));
    if (bias) logits = ad::add_constant(logits, *bias);
    Var ctx = ad::merge_heads(ad::bmm(ad::softmax_lastdim(logits), V, false), heads);
    Var o = ad::linear(ad::reshape(ctx, {B * Tq, D}), pvar(pfx + ".wo.w"),
                       pvar(pfx + ".wo.b"));
    return ad::reshape(o, {B, Tq, D});
  };
  auto ffn = [&](Var x, const std::string& pfx) -> Var {
    const int64_t T = t.value(x).dim(1);
    Var h = ad::relu(ad::linear(ad::reshape(x, {B * T, D}), pvar(pfx + ".ffn1.w"),
                                pvar(pfx + ".ffn1.b")));
    return ad::reshape(ad::linear(h, pvar(pfx + ".ffn2.w"), pvar(pfx + ".ffn2.b")),
                       {B, T, D});
  };

  // encoder
  Var x = t.leaf(images, false);
  std::vector<Var> skips((size_t)cfg_.stages + 1);
  for (int k = 1; k <= cfg_.stages; ++k) {
    const std::string pfx = "enc.s" + std::to_string(k);
    x = ad::relu(ad::conv2d(x, pvar(pfx + ".c1.w"), pvar(pfx + ".c1.b"), 2));
    x = ad::relu(ad::conv2d(x, pvar(pfx + ".c2.w"), pvar(pfx + ".c2.b"), 1));
    skips[(size_t)k] = x;
  }
  const int h5 = (int)(H / stride), w5 = (int)(W / stride);
  const int64_t T5 = (int64_t)h5 * w5;

  Var tok = ad::transpose12(ad::reshape(x, {B, D, T5}));
  for (int i = 0; i < cfg_.tf_blocks; ++i) {
    const std::string pfx = "enc.tf" + std::to_string(i);
    Var xn = ad::layernorm(tok, pvar(pfx + ".ln1.g"), pvar(pfx + ".ln1.b"));
    tok = ad::add(tok, mha(xn, xn, pfx, nullptr));
    Var xf = ad::layernorm(tok, pvar(pfx + ".ln2.g"), pvar(pfx + ".ln2.b"));
    tok = ad::add(tok, ffn(xf, pfx));
  }
  skips[(size_t)cfg_.stages] = ad::reshape(ad::transpose12(tok), {B, D, h5, w5});

  // prompt decoder over the deepest scales
  Var P = ad::tile0(pvar("prompts"), (int)B);
  for (int k = 0; k < cfg_.prompt_layers; ++k) {
    const std::string pfx = "pd.l" + std::to_string(k);
    const int stage = cfg_.stages - k;
    const Tensor& fs = t.value(skips[(size_t)stage]);
    const int64_t cs = fs.dim(1), hk = fs.dim(2), wk = fs.dim(3);
    Var kv = ad::transpose12(ad::reshape(skips[(size_t)stage], {B, cs, hk * wk}));
    const Tensor bias = mask_bias(t.value(P), t.value(tok), h5, w5, (int)hk,
                                  (int)wk, heads);
    Var qn = ad::layernorm(P, pvar(pfx + ".lnq.g"), pvar(pfx + ".lnq.b"));
    P = ad::add(P, mha(qn, kv, pfx, &bias));
    Var fn = ad::layernorm(P, pvar(pfx + ".lnf.g"), pvar(pfx + ".lnf.b"));
    P = ad::add(P, ffn(fn, pfx));
  }
  Var Pp = ad::reshape(
      ad::linear(ad::reshape(P, {B * cfg_.base_classes, D}), pvar("head.w"),
                 pvar("head.b")),
      {B, cfg_.base_classes, cfg_.out_channels});

  auto decode = [&](const char* br, bool learned_up) -> BranchOut {
    Var X = skips[(size_t)cfg_.stages];
    for (int s = 1; s <= cfg_.stages; ++s) {
      const std::string pfx = std::string(br) + ".s" + std::to_string(s);
      Var up = learned_up
                   ? ad::tconv2d_x2(X, pvar(pfx + ".up.w"), pvar(pfx + ".up.b"))
                   : ad::bilinear_up2(X);
      Var cat = s < cfg_.stages
                    ? ad::concat_ch(up, skips[(size_t)(cfg_.stages - s)])
                    : up;
      X = ad::conv2d(cat, pvar(pfx + ".fuse.w"), pvar(pfx + ".fuse.b"), 1);
      if (s < cfg_.stages) X = ad::relu(X);
    }
    BranchOut bo;
    bo.fp = X;
    Var fpr = ad::reshape(X, {B, cfg_.out_channels, H * W});
    // the 1/sqrt(C) keeps init-time logits O(1); the affine squeeze keeps
    // the probabilities strictly inside (0,1) even when the float sigmoid
    // saturates, so downstream products never collapse to exact 0 or 1
    Var z = ad::scale(ad::bmm(Pp, fpr, false),
                      1.0f / std::sqrt((float)cfg_.out_channels));
    Var p = ad::sigmoid(z);
    Tensor eps(t.value(p).shape());
    eps.fill((float)kProbEps);
    bo.probs = ad::add_constant(ad::scale(p, 1.0f - 2.0f * (float)kProbEps), eps);
    return bo;
  };

  if (opts.branch_a) out.a = decode("decA", true);
  if (opts.branch_b) out.b = decode("decB", false);
  return out;
}

LabelMap Model::predict(const Tensor& image_11hw, const Schema& schema, int level) {
  if (image_11hw.ndim() != 4 || image_11hw.dim(0) != 1)
    throw std::invalid_argument("predict: expected a [1,1,H,W] image");
  ad::Tape tape;
  ForwardOptions o;
  o.branch_b = false;
  o.requires_grad = false;
  Forward f = forward(tape, image_11hw, o);
  const Tensor probs = tape.value(f.a.probs);  // [1, base, HW]
  const Tensor level_probs = compose_level_probs(probs, schema, level);
  const int64_t G = level_probs.dim(1), S = level_probs.dim(2);

  LabelMap lm;
  lm.h = (int)image_11hw.dim(2);
  lm.w = (int)image_11hw.dim(3);
  lm.level = level;
  lm.data.resize((size_t)S);
  for (int64_t i = 0; i < S; ++i) {
    float bg = 1.0f;
    for (int64_t g = 0; g < G; ++g) bg *= 1.0f - level_probs[g * S + i];
    float best = bg;
    int arg = -1;
    for (int64_t g = 0; g < G; ++g)
      if (level_probs[g * S + i] > best) {
        best = level_probs[g * S + i];
        arg = (int)g;
      }
    lm.data[(size_t)i] = arg < 0 ? kBackground : (uint8_t)arg;
  }
  return lm;
}

}  // namespace lumos
