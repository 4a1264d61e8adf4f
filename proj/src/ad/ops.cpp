#include "lumos/ad/ops.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "lumos/kern/backend.hpp"

namespace lumos::ad {

namespace {

const kern::Backend& K() { return kern::active(); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

// ---------------------------------------------------------------------------
// im2col / col2im for 3x3 pad-1 convolutions, single sample.
// col rows indexed (ci*3+ky)*3+kx to match weight layout [Cout, Cin*9].
// ---------------------------------------------------------------------------

void im2col_3x3(const float* x, int Cin, int H, int W, int stride, int Ho,
                int Wo, float* col) {
  for (int ci = 0; ci < Cin; ++ci) {
    const float* xs = x + (int64_t)ci * H * W;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        float* row = col + (int64_t)((ci * 3 + ky) * 3 + kx) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          float* dst = row + (int64_t)oy * Wo;
          if (iy < 0 || iy >= H) {
            std::memset(dst, 0, (size_t)Wo * sizeof(float));
            continue;
          }
          const float* src = xs + (int64_t)iy * W;
          if (stride == 1) {
            // ix = ox + kx - 1 valid for ox in [lo, hi)
            const int lo = kx == 0 ? 1 : 0;
            const int hi = W - kx + 1 < Wo ? W - kx + 1 : Wo;
            for (int ox = 0; ox < lo; ++ox) dst[ox] = 0.0f;
            if (hi > lo)
              std::memcpy(dst + lo, src + lo + kx - 1,
                          (size_t)(hi - lo) * sizeof(float));
            for (int ox = hi; ox < Wo; ++ox) dst[ox] = 0.0f;
          } else {
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * stride + kx - 1;
              dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im_3x3_add(const float* col, int Cin, int H, int W, int stride,
                    int Ho, int Wo, float* gx) {
  for (int ci = 0; ci < Cin; ++ci) {
    float* xs = gx + (int64_t)ci * H * W;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* row = col + (int64_t)((ci * 3 + ky) * 3 + kx) * Ho * Wo;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= H) continue;
          const float* src = row + (int64_t)oy * Wo;
          float* dst = xs + (int64_t)iy * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

struct UpTap {
  int i0, i1;
  float w0, w1;
};

// align_corners=false x2 interpolation taps for one axis
std::vector<UpTap> up2_taps(int in) {
  std::vector<UpTap> taps((size_t)in * 2);
  for (int o = 0; o < in * 2; ++o) {
    const float s = 0.5f * (float)o - 0.25f;
    const int f = (int)std::floor(s);
    const float frac = s - (float)f;
    UpTap t;
    t.i0 = f < 0 ? 0 : (f >= in ? in - 1 : f);
    t.i1 = f + 1 < 0 ? 0 : (f + 1 >= in ? in - 1 : f + 1);
    t.w0 = 1.0f - frac;
    t.w1 = frac;
    taps[(size_t)o] = t;
  }
  return taps;
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_same_shape(va, vb, "add");
  Tensor out(va.shape());
  const int64_t n = out.numel();
  K().vadd(n, va.data(), vb.data(), out.data());
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const float* g = tp.grad(self).data();
      if (tp.requires_grad(a)) K().axpy(n, 1.0f, g, tp.grad(a).data());
      if (tp.requires_grad(b)) K().axpy(n, 1.0f, g, tp.grad(b).data());
    });
  }
  return self;
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_same_shape(va, vb, "sub");
  Tensor out(va.shape());
  const int64_t n = out.numel();
  const float* pa = va.data();
  const float* pb = vb.data();
  float* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const float* g = tp.grad(self).data();
      if (tp.requires_grad(a)) K().axpy(n, 1.0f, g, tp.grad(a).data());
      if (tp.requires_grad(b)) K().axpy(n, -1.0f, g, tp.grad(b).data());
    });
  }
  return self;
}

Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  check_same_shape(va, vb, "mul");
  Tensor out(va.shape());
  const int64_t n = out.numel();
  K().vmul(n, va.data(), vb.data(), out.data());
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const float* g = tp.grad(self).data();
      if (tp.requires_grad(a)) {
        const float* pb = tp.value(b).data();
        float* ga = tp.grad(a).data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb[i];
      }
      if (tp.requires_grad(b)) {
        const float* pa = tp.value(a).data();
        float* gb = tp.grad(b).data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa[i];
      }
    });
  }
  return self;
}

Var scale(Var a, float c) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  Tensor out = va.clone();
  const int64_t n = out.numel();
  K().scale(n, c, out.data());
  const bool rg = t.requires_grad(a);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      K().axpy(n, c, tp.grad(self).data(), tp.grad(a).data());
    });
  }
  return self;
}

Var add_scalar(Var a, float c) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  Tensor out(va.shape());
  const int64_t n = out.numel();
  const float* pa = va.data();
  float* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + c;
  const bool rg = t.requires_grad(a);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      K().axpy(n, 1.0f, tp.grad(self).data(), tp.grad(a).data());
    });
  }
  return self;
}

Var relu(Var a) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  Tensor out(va.shape());
  const int64_t n = out.numel();
  K().relu_fwd(n, va.data(), out.data());
  const bool rg = t.requires_grad(a);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      K().relu_bwd(n, tp.value(a).data(), tp.grad(self).data(),
                   tp.grad(a).data());
    });
  }
  return self;
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  Tensor out(va.shape());
  const int64_t n = out.numel();
  K().vsigmoid(n, va.data(), out.data());
  const bool rg = t.requires_grad(a);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const float* g = tp.grad(self).data();
      const float* y = tp.value(self).data();
      float* ga = tp.grad(a).data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * y[i] * (1.0f - y[i]);
    });
  }
  return self;
}

Var logv(Var a) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  Tensor out(va.shape());
  const int64_t n = out.numel();
  K().vlog(n, va.data(), out.data());
  const bool rg = t.requires_grad(a);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const float* g = tp.grad(self).data();
      const float* x = tp.value(a).data();
      float* ga = tp.grad(a).data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i] / x[i];
    });
  }
  return self;
}

Var clamp(Var a, float lo, float hi) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  Tensor out(va.shape());
  const int64_t n = out.numel();
  const float* pa = va.data();
  float* po = out.data();
  for (int64_t i = 0; i < n; ++i)
    po[i] = pa[i] < lo ? lo : (pa[i] > hi ? hi : pa[i]);
  const bool rg = t.requires_grad(a);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const float* g = tp.grad(self).data();
      const float* x = tp.value(a).data();
      float* ga = tp.grad(a).data();
      for (int64_t i = 0; i < n; ++i)
        if (x[i] > lo && x[i] < hi) ga[i] += g[i];
    });
  }
  return self;
}

// ---------------------------------------------------------------------------
// Conv family
// ---------------------------------------------------------------------------

Var conv2d(Var x, Var w, Var bias, int stride) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  const Tensor& vw = t.value(w);
  if (vx.ndim() != 4 || vw.ndim() != 4 || vw.dim(2) != 3 || vw.dim(3) != 3)
    throw std::invalid_argument("conv2d: expects x[B,C,H,W], w[Co,Ci,3,3]");
  if (vx.dim(1) != vw.dim(1)) throw std::invalid_argument("conv2d: channel mismatch");
  const int B = (int)vx.dim(0), Cin = (int)vx.dim(1);
  const int H = (int)vx.dim(2), W = (int)vx.dim(3);
  const int Cout = (int)vw.dim(0);
  const int Ho = (H + 2 - 3) / stride + 1;
  const int Wo = (W + 2 - 3) / stride + 1;
  const int Kdim = Cin * 9;
  const int64_t S = (int64_t)Ho * Wo;

  Tensor out({B, Cout, Ho, Wo});
  Tensor col({Kdim, S});
  for (int b = 0; b < B; ++b) {
    im2col_3x3(vx.data() + (int64_t)b * Cin * H * W, Cin, H, W, stride, Ho, Wo,
               col.data());
    K().sgemm_nn(Cout, (int)S, Kdim, 1.0f, vw.data(), Kdim, col.data(), (int)S,
                 0.0f, out.data() + (int64_t)b * Cout * S, (int)S);
  }
  if (bias.ok()) {
    const float* pb = t.value(bias).data();
    for (int b = 0; b < B; ++b)
      for (int co = 0; co < Cout; ++co) {
        float* dst = out.data() + ((int64_t)b * Cout + co) * S;
        const float bv = pb[co];
        for (int64_t i = 0; i < S; ++i) dst[i] += bv;
      }
  }

  const bool rg = t.requires_grad(x) || t.requires_grad(w) ||
                  (bias.ok() && t.requires_grad(bias));
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      const Tensor& xv = tp.value(x);
      const Tensor& wv = tp.value(w);
      const bool need_x = tp.requires_grad(x);
      const bool need_w = tp.requires_grad(w);
      const bool need_b = bias.ok() && tp.requires_grad(bias);
      Tensor colb({Kdim, S});
      Tensor dcol = need_x ? Tensor({Kdim, S}) : Tensor();
      for (int b = 0; b < B; ++b) {
        const float* gb = g.data() + (int64_t)b * Cout * S;
        if (need_w) {
          im2col_3x3(xv.data() + (int64_t)b * Cin * H * W, Cin, H, W, stride,
                     Ho, Wo, colb.data());
          K().sgemm_nt(Cout, Kdim, (int)S, 1.0f, gb, (int)S, colb.data(),
                       (int)S, 1.0f, tp.grad(w).data(), Kdim);
        }
        if (need_b) {
          float* db = tp.grad(bias).data();
          for (int co = 0; co < Cout; ++co)
            db[co] += K().reduce_sum(S, gb + (int64_t)co * S);
        }
        if (need_x) {
          K().sgemm_tn(Kdim, (int)S, Cout, 1.0f, wv.data(), Kdim, gb, (int)S,
                       0.0f, dcol.data(), (int)S);
          col2im_3x3_add(dcol.data(), Cin, H, W, stride, Ho, Wo,
                         tp.grad(x).data() + (int64_t)b * Cin * H * W);
        }
      }
    });
  }
  return self;
}

Var tconv2d_x2(Var x, Var w, Var bias) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  const Tensor& vw = t.value(w);
  if (vx.ndim() != 4 || vw.ndim() != 4 || vw.dim(0) != 2 || vw.dim(1) != 2)
    throw std::invalid_argument("tconv2d_x2: expects x[B,C,H,W], w[2,2,Co,Ci]");
  if (vx.dim(1) != vw.dim(3)) throw std::invalid_argument("tconv2d_x2: channel mismatch");
  const int B = (int)vx.dim(0), Cin = (int)vx.dim(1);
  const int H = (int)vx.dim(2), W = (int)vx.dim(3);
  const int Cout = (int)vw.dim(2);
  const int Ho = 2 * H, Wo = 2 * W;
  const int64_t S = (int64_t)H * W;

  Tensor out({B, Cout, Ho, Wo});
  Tensor tmp({Cout, (int64_t)H * W});
  for (int b = 0; b < B; ++b) {
    const float* xb = vx.data() + (int64_t)b * Cin * S;
    float* ob = out.data() + (int64_t)b * Cout * Ho * Wo;
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const float* sub = vw.data() + (int64_t)(dy * 2 + dx) * Cout * Cin;
        K().sgemm_nn(Cout, (int)S, Cin, 1.0f, sub, Cin, xb, (int)S, 0.0f,
                     tmp.data(), (int)S);
        for (int co = 0; co < Cout; ++co)
          for (int i = 0; i < H; ++i) {
            const float* src = tmp.data() + (int64_t)co * S + (int64_t)i * W;
            float* dst = ob + ((int64_t)co * Ho + 2 * i + dy) * Wo + dx;
            for (int j = 0; j < W; ++j) dst[2 * j] = src[j];
          }
      }
  }
  if (bias.ok()) {
    const float* pb = t.value(bias).data();
    const int64_t So = (int64_t)Ho * Wo;
    for (int b = 0; b < B; ++b)
      for (int co = 0; co < Cout; ++co) {
        float* dst = out.data() + ((int64_t)b * Cout + co) * So;
        const float bv = pb[co];
        for (int64_t i = 0; i < So; ++i) dst[i] += bv;
      }
  }

  const bool rg = t.requires_grad(x) || t.requires_grad(w) ||
                  (bias.ok() && t.requires_grad(bias));
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      const Tensor& xv = tp.value(x);
      const Tensor& wv = tp.value(w);
      const bool need_x = tp.requires_grad(x);
      const bool need_w = tp.requires_grad(w);
      const bool need_b = bias.ok() && tp.requires_grad(bias);
      Tensor gtmp({Cout, (int64_t)H * W});
      const int64_t So = (int64_t)Ho * Wo;
      for (int b = 0; b < B; ++b) {
        const float* gb = g.data() + (int64_t)b * Cout * So;
        const float* xb = xv.data() + (int64_t)b * Cin * S;
        if (need_b) {
          float* db = tp.grad(bias).data();
          for (int co = 0; co < Cout; ++co)
            db[co] += K().reduce_sum(So, gb + (int64_t)co * So);
        }
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            for (int co = 0; co < Cout; ++co)
              for (int i = 0; i < H; ++i) {
                const float* src = gb + ((int64_t)co * Ho + 2 * i + dy) * Wo + dx;
                float* dst = gtmp.data() + (int64_t)co * S + (int64_t)i * W;
                for (int j = 0; j < W; ++j) dst[j] = src[2 * j];
              }
            const int64_t off = (int64_t)(dy * 2 + dx) * Cout * Cin;
            if (need_w)
              K().sgemm_nt(Cout, Cin, (int)S, 1.0f, gtmp.data(), (int)S, xb,
                           (int)S, 1.0f, tp.grad(w).data() + off, Cin);
            if (need_x)
              K().sgemm_tn(Cin, (int)S, Cout, 1.0f, wv.data() + off, Cin,
                           gtmp.data(), (int)S, 1.0f,
                           tp.grad(x).data() + (int64_t)b * Cin * S, (int)S);
          }
      }
    });
  }
  return self;
}

Var bilinear_up2(Var x) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (vx.ndim() != 4) throw std::invalid_argument("bilinear_up2: expects [B,C,H,W]");
  const int B = (int)vx.dim(0), C = (int)vx.dim(1);
  const int H = (int)vx.dim(2), W = (int)vx.dim(3);
  const auto ty = up2_taps(H);
  const auto tx = up2_taps(W);
  Tensor out({B, C, 2 * H, 2 * W});
  for (int bc = 0; bc < B * C; ++bc) {
    const float* src = vx.data() + (int64_t)bc * H * W;
    float* dst = out.data() + (int64_t)bc * 4 * H * W;
    for (int oy = 0; oy < 2 * H; ++oy) {
      const UpTap& a = ty[(size_t)oy];
      const float* r0 = src + (int64_t)a.i0 * W;
      const float* r1 = src + (int64_t)a.i1 * W;
      float* drow = dst + (int64_t)oy * 2 * W;
      for (int ox = 0; ox < 2 * W; ++ox) {
        const UpTap& b = tx[(size_t)ox];
        drow[ox] = a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) +
                   a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]);
      }
    }
  }
  const bool rg = t.requires_grad(x);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      float* gx = tp.grad(x).data();
      for (int bc = 0; bc < B * C; ++bc) {
        const float* gsrc = g.data() + (int64_t)bc * 4 * H * W;
        float* gdst = gx + (int64_t)bc * H * W;
        for (int oy = 0; oy < 2 * H; ++oy) {
          const UpTap& a = ty[(size_t)oy];
          const float* grow = gsrc + (int64_t)oy * 2 * W;
          for (int ox = 0; ox < 2 * W; ++ox) {
            const UpTap& b = tx[(size_t)ox];
            const float gv = grow[ox];
            gdst[(int64_t)a.i0 * W + b.i0] += a.w0 * b.w0 * gv;
            gdst[(int64_t)a.i0 * W + b.i1] += a.w0 * b.w1 * gv;
            gdst[(int64_t)a.i1 * W + b.i0] += a.w1 * b.w0 * gv;
            gdst[(int64_t)a.i1 * W + b.i1] += a.w1 * b.w1 * gv;
          }
        }
      }
    });
  }
  return self;
}

// ---------------------------------------------------------------------------
// Shape / structure
// ---------------------------------------------------------------------------

Var concat_ch(Var a, Var b) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  if (va.ndim() != 4 || vb.ndim() != 4 || va.dim(0) != vb.dim(0) ||
      va.dim(2) != vb.dim(2) || va.dim(3) != vb.dim(3))
    throw std::invalid_argument("concat_ch: incompatible shapes");
  const int B = (int)va.dim(0);
  const int64_t Ca = va.dim(1), Cb = vb.dim(1);
  const int64_t S = va.dim(2) * va.dim(3);
  Tensor out({B, Ca + Cb, va.dim(2), va.dim(3)});
  for (int bi = 0; bi < B; ++bi) {
    std::memcpy(out.data() + (int64_t)bi * (Ca + Cb) * S,
                va.data() + (int64_t)bi * Ca * S, (size_t)(Ca * S) * sizeof(float));
    std::memcpy(out.data() + ((int64_t)bi * (Ca + Cb) + Ca) * S,
                vb.data() + (int64_t)bi * Cb * S, (size_t)(Cb * S) * sizeof(float));
  }
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      for (int bi = 0; bi < B; ++bi) {
        if (tp.requires_grad(a))
          K().axpy(Ca * S, 1.0f, g.data() + (int64_t)bi * (Ca + Cb) * S,
                   tp.grad(a).data() + (int64_t)bi * Ca * S);
        if (tp.requires_grad(b))
          K().axpy(Cb * S, 1.0f, g.data() + ((int64_t)bi * (Ca + Cb) + Ca) * S,
                   tp.grad(b).data() + (int64_t)bi * Cb * S);
      }
    });
  }
  return self;
}

Var reshape(Var x, std::vector<int64_t> shape) {
  Tape& t = *x.tape;
  Tensor out = t.value(x).reshape(std::move(shape));  // shares storage
  const bool rg = t.requires_grad(x);
  const int64_t n = out.numel();
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      K().axpy(n, 1.0f, tp.grad(self).data(), tp.grad(x).data());
    });
  }
  return self;
}

Var transpose12(Var x) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (vx.ndim() != 3) throw std::invalid_argument("transpose12: expects [N,A,B]");
  const int64_t N = vx.dim(0), A = vx.dim(1), Bd = vx.dim(2);
  Tensor out({N, Bd, A});
  for (int64_t n = 0; n < N; ++n) {
    const float* src = vx.data() + n * A * Bd;
    float* dst = out.data() + n * A * Bd;
    for (int64_t i = 0; i < A; ++i)
      for (int64_t j = 0; j < Bd; ++j) dst[j * A + i] = src[i * Bd + j];
  }
  const bool rg = t.requires_grad(x);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      float* gx = tp.grad(x).data();
      for (int64_t n = 0; n < N; ++n) {
        const float* src = g.data() + n * A * Bd;
        float* dst = gx + n * A * Bd;
        for (int64_t j = 0; j < Bd; ++j)
          for (int64_t i = 0; i < A; ++i) dst[i * Bd + j] += src[j * A + i];
      }
    });
  }
  return self;
}

Var split_heads(Var x, int heads) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (vx.ndim() != 3 || vx.dim(2) % heads != 0)
    throw std::invalid_argument("split_heads: expects [B,T,D], D % heads == 0");
  const int64_t B = vx.dim(0), T = vx.dim(1), D = vx.dim(2);
  const int64_t dh = D / heads;
  Tensor out({B * heads, T, dh});
  for (int64_t b = 0; b < B; ++b)
    for (int h = 0; h < heads; ++h)
      for (int64_t tt = 0; tt < T; ++tt)
        std::memcpy(out.data() + ((b * heads + h) * T + tt) * dh,
                    vx.data() + (b * T + tt) * D + h * dh,
                    (size_t)dh * sizeof(float));
  const bool rg = t.requires_grad(x);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      float* gx = tp.grad(x).data();
      for (int64_t b = 0; b < B; ++b)
        for (int h = 0; h < heads; ++h)
          for (int64_t tt = 0; tt < T; ++tt)
            K().axpy(dh, 1.0f, g.data() + ((b * heads + h) * T + tt) * dh,
                     gx + (b * T + tt) * D + h * dh);
    });
  }
  return self;
}

Var merge_heads(Var x, int heads) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (vx.ndim() != 3 || vx.dim(0) % heads != 0)
    throw std::invalid_argument("merge_heads: expects [B*heads,T,dh]");
  const int64_t B = vx.dim(0) / heads, T = vx.dim(1), dh = vx.dim(2);
  const int64_t D = dh * heads;
  Tensor out({B, T, D});
  for (int64_t b = 0; b < B; ++b)
    for (int h = 0; h < heads; ++h)
      for (int64_t tt = 0; tt < T; ++tt)
        std::memcpy(out.data() + (b * T + tt) * D + h * dh,
                    vx.data() + ((b * heads + h) * T + tt) * dh,
                    (size_t)dh * sizeof(float));
  const bool rg = t.requires_grad(x);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      float* gx = tp.grad(x).data();
      for (int64_t b = 0; b < B; ++b)
        for (int h = 0; h < heads; ++h)
          for (int64_t tt = 0; tt < T; ++tt)
            K().axpy(dh, 1.0f, g.data() + (b * T + tt) * D + h * dh,
                     gx + ((b * heads + h) * T + tt) * dh);
    });
  }
  return self;
}

Var slice_dim0(Var x, int64_t i0, int64_t i1) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (vx.ndim() < 1 || i0 < 0 || i1 > vx.dim(0) || i0 >= i1)
    throw std::invalid_argument("slice_dim0: bad range");
  const int64_t R = vx.numel() / vx.dim(0);
  std::vector<int64_t> shape = vx.shape();
  shape[0] = i1 - i0;
  Tensor out(shape);
  std::memcpy(out.data(), vx.data() + i0 * R,
              (size_t)((i1 - i0) * R) * sizeof(float));
  const bool rg = t.requires_grad(x);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      K().axpy((i1 - i0) * R, 1.0f, tp.grad(self).data(),
               tp.grad(x).data() + i0 * R);
    });
  }
  return self;
}

Var detach(Var x) {
  Tape& t = *x.tape;
  return t.leaf(t.value(x), false);
}

Var tile0(Var x, int copies) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  if (copies < 1) throw std::invalid_argument("tile0: copies must be >= 1");
  std::vector<int64_t> shape;
  shape.push_back(copies);
  for (int64_t d : vx.shape()) shape.push_back(d);
  const int64_t n = vx.numel();
  Tensor out(std::move(shape));
  for (int c = 0; c < copies; ++c)
    std::memcpy(out.data() + (int64_t)c * n, vx.data(), (size_t)n * sizeof(float));
  const bool rg = t.requires_grad(x);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const float* g = tp.grad(self).data();
      float* gx = tp.grad(x).data();
      for (int c = 0; c < copies; ++c) K().axpy(n, 1.0f, g + (int64_t)c * n, gx);
    });
  }
  return self;
}

// ---------------------------------------------------------------------------
// Linear algebra / attention
// ---------------------------------------------------------------------------

Var linear(Var x, Var w, Var bias) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  const Tensor& vw = t.value(w);
  if (vx.ndim() != 2 || vw.ndim() != 2 || vx.dim(1) != vw.dim(1))
    throw std::invalid_argument("linear: expects x[R,In], w[Out,In]");
  const int R = (int)vx.dim(0), In = (int)vx.dim(1), Out = (int)vw.dim(0);
  Tensor out({R, Out});
  K().sgemm_nt(R, Out, In, 1.0f, vx.data(), In, vw.data(), In, 0.0f,
               out.data(), Out);
  if (bias.ok()) {
    const float* pb = t.value(bias).data();
    for (int r = 0; r < R; ++r)
      K().axpy(Out, 1.0f, pb, out.data() + (int64_t)r * Out);
  }
  const bool rg = t.requires_grad(x) || t.requires_grad(w) ||
                  (bias.ok() && t.requires_grad(bias));
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      if (tp.requires_grad(x))
        K().sgemm_nn(R, In, Out, 1.0f, g.data(), Out, tp.value(w).data(), In,
                     1.0f, tp.grad(x).data(), In);
      if (tp.requires_grad(w))
        K().sgemm_tn(Out, In, R, 1.0f, g.data(), Out, tp.value(x).data(), In,
                     1.0f, tp.grad(w).data(), In);
      if (bias.ok() && tp.requires_grad(bias)) {
        float* db = tp.grad(bias).data();
        for (int r = 0; r < R; ++r)
          K().axpy(Out, 1.0f, g.data() + (int64_t)r * Out, db);
      }
    });
  }
  return self;
}

Var layernorm(Var x, Var gamma, Var beta) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  const int64_t D = vx.dim(vx.ndim() - 1);
  const int64_t R = vx.numel() / D;
  const Tensor& vg = t.value(gamma);
  if (vg.numel() != D || t.value(beta).numel() != D)
    throw std::invalid_argument("layernorm: gamma/beta size mismatch");
  constexpr float eps = 1e-5f;
  Tensor out(vx.shape());
  const float* pg = vg.data();
  const float* pbt = t.value(beta).data();
  for (int64_t r = 0; r < R; ++r) {
    const float* xr = vx.data() + r * D;
    float* yr = out.data() + r * D;
    const float mu = K().reduce_sum(D, xr) / (float)D;
    float var = 0.0f;
    for (int64_t i = 0; i < D; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= (float)D;
    const float inv = 1.0f / std::sqrt(var + eps);
    for (int64_t i = 0; i < D; ++i)
      yr[i] = (xr[i] - mu) * inv * pg[i] + pbt[i];
  }
  const bool rg = t.requires_grad(x) || t.requires_grad(gamma) || t.requires_grad(beta);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      const Tensor& xv = tp.value(x);
      const float* gam = tp.value(gamma).data();
      std::vector<float> xh((size_t)D), a((size_t)D);
      for (int64_t r = 0; r < R; ++r) {
        const float* xr = xv.data() + r * D;
        const float* gr = g.data() + r * D;
        const float mu = K().reduce_sum(D, xr) / (float)D;
        float var = 0.0f;
        for (int64_t i = 0; i < D; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= (float)D;
        const float inv = 1.0f / std::sqrt(var + eps);
        for (int64_t i = 0; i < D; ++i) xh[(size_t)i] = (xr[i] - mu) * inv;
        if (tp.requires_grad(gamma)) {
          float* dg = tp.grad(gamma).data();
          for (int64_t i = 0; i < D; ++i) dg[i] += gr[i] * xh[(size_t)i];
        }
        if (tp.requires_grad(beta)) {
          float* db = tp.grad(beta).data();
          for (int64_t i = 0; i < D; ++i) db[i] += gr[i];
        }
        if (tp.requires_grad(x)) {
          float m1 = 0.0f, m2 = 0.0f;
          for (int64_t i = 0; i < D; ++i) {
            a[(size_t)i] = gr[i] * gam[i];
            m1 += a[(size_t)i];
            m2 += a[(size_t)i] * xh[(size_t)i];
          }
          m1 /= (float)D;
          m2 /= (float)D;
          float* dx = tp.grad(x).data() + r * D;
          for (int64_t i = 0; i < D; ++i)
            dx[i] += inv * (a[(size_t)i] - m1 - xh[(size_t)i] * m2);
        }
      }
    });
  }
  return self;
}

Var bmm(Var a, Var b, bool trans_b) {
  Tape& t = *a.tape;
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  if (va.ndim() != 3 || vb.ndim() != 3 || va.dim(0) != vb.dim(0))
    throw std::invalid_argument("bmm: expects 3-D inputs with equal batch");
  const int64_t N = va.dim(0), M = va.dim(1), Kd = va.dim(2);
  const int64_t P = trans_b ? vb.dim(1) : vb.dim(2);
  if ((trans_b ? vb.dim(2) : vb.dim(1)) != Kd)
    throw std::invalid_argument("bmm: inner dimension mismatch");
  Tensor out({N, M, P});
  for (int64_t n = 0; n < N; ++n) {
    const float* pa = va.data() + n * M * Kd;
    const float* pb = vb.data() + n * Kd * P;
    float* pc = out.data() + n * M * P;
    if (trans_b)
      K().sgemm_nt((int)M, (int)P, (int)Kd, 1.0f, pa, (int)Kd, pb, (int)Kd,
                   0.0f, pc, (int)P);
    else
      K().sgemm_nn((int)M, (int)P, (int)Kd, 1.0f, pa, (int)Kd, pb, (int)P,
                   0.0f, pc, (int)P);
  }
  const bool rg = t.requires_grad(a) || t.requires_grad(b);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      const Tensor& av = tp.value(a);
      const Tensor& bv = tp.value(b);
      for (int64_t n = 0; n < N; ++n) {
        const float* gn = g.data() + n * M * P;
        const float* pa = av.data() + n * M * Kd;
        const float* pb = bv.data() + n * Kd * P;
        if (tp.requires_grad(a)) {
          float* ga = tp.grad(a).data() + n * M * Kd;
          if (trans_b)
            K().sgemm_nn((int)M, (int)Kd, (int)P, 1.0f, gn, (int)P, pb,
                         (int)Kd, 1.0f, ga, (int)Kd);
          else
            K().sgemm_nt((int)M, (int)Kd, (int)P, 1.0f, gn, (int)P, pb, (int)P,
                         1.0f, ga, (int)Kd);
        }
        if (tp.requires_grad(b)) {
          float* gb = tp.grad(b).data() + n * Kd * P;
          if (trans_b)
            K().sgemm_tn((int)P, (int)Kd, (int)M, 1.0f, gn, (int)P, pa,
                         (int)Kd, 1.0f, gb, (int)Kd);
          else
            K().sgemm_tn((int)Kd, (int)P, (int)M, 1.0f, pa, (int)Kd, gn,
                         (int)P, 1.0f, gb, (int)P);
        }
      }
    });
  }
  return self;
}

Var softmax_lastdim(Var x) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  const int64_t D = vx.dim(vx.ndim() - 1);
  const int64_t R = vx.numel() / D;
  Tensor out(vx.shape());
  for (int64_t r = 0; r < R; ++r) {
    const float* xr = vx.data() + r * D;
    float* yr = out.data() + r * D;
    float m = xr[0];
    for (int64_t i = 1; i < D; ++i) m = xr[i] > m ? xr[i] : m;
    for (int64_t i = 0; i < D; ++i) yr[i] = xr[i] - m;
    K().vexp(D, yr, yr);
    const float s = K().reduce_sum(D, yr);
    K().scale(D, 1.0f / s, yr);
  }
  const bool rg = t.requires_grad(x);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      const Tensor& y = tp.value(self);
      float* gx = tp.grad(x).data();
      for (int64_t r = 0; r < R; ++r) {
        const float* gr = g.data() + r * D;
        const float* yr = y.data() + r * D;
        const float dotv = K().dot(D, gr, yr);
        float* dx = gx + r * D;
        for (int64_t i = 0; i < D; ++i) dx[i] += yr[i] * (gr[i] - dotv);
      }
    });
  }
  return self;
}

Var add_constant(Var x, const Tensor& c) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  check_same_shape(vx, c, "add_constant");
  Tensor out(vx.shape());
  const int64_t n = out.numel();
  K().vadd(n, vx.data(), c.data(), out.data());
  const bool rg = t.requires_grad(x);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      K().axpy(n, 1.0f, tp.grad(self).data(), tp.grad(x).data());
    });
  }
  return self;
}

// ---------------------------------------------------------------------------
// Reductions / composition
// ---------------------------------------------------------------------------

Var mean_all(Var x) {
  Tape& t = *x.tape;
  const Tensor& vx = t.value(x);
  const int64_t n = vx.numel();
  Tensor out({1});
  out[0] = K().reduce_sum(n, vx.data()) / (float)n;
  const bool rg = t.requires_grad(x);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    t.set_backward(self, [=](Tape& tp) {
      const float s = tp.grad(self)[0] / (float)n;
      float* gx = tp.grad(x).data();
      for (int64_t i = 0; i < n; ++i) gx[i] += s;
    });
  }
  return self;
}

Var noisy_or(Var p, const std::vector<std::vector<int>>& groups) {
  Tape& t = *p.tape;
  const Tensor& vp = t.value(p);
  if (vp.ndim() != 3) throw std::invalid_argument("noisy_or: expects [B,L,S]");
  const int64_t B = vp.dim(0), L = vp.dim(1), S = vp.dim(2);
  const int64_t G = (int64_t)groups.size();
  for (const auto& g : groups)
    for (int m : g)
      if (m < 0 || m >= L) throw std::invalid_argument("noisy_or: member out of range");
  Tensor out({B, G, S});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t g = 0; g < G; ++g) {
      float* dst = out.data() + (b * G + g) * S;
      const auto& mem = groups[(size_t)g];
      if (mem.size() == 1) {
        std::memcpy(dst, vp.data() + (b * L + mem[0]) * S,
                    (size_t)S * sizeof(float));
        continue;
      }
      for (int64_t s = 0; s < S; ++s) dst[s] = 1.0f;
      for (int m : mem) {
        const float* src = vp.data() + (b * L + m) * S;
        for (int64_t s = 0; s < S; ++s) dst[s] *= 1.0f - src[s];
      }
      for (int64_t s = 0; s < S; ++s) dst[s] = 1.0f - dst[s];
    }
  const bool rg = t.requires_grad(p);
  Var self = t.emit(std::move(out), rg);
  if (rg) {
    auto groups_copy = groups;
    t.set_backward(self, [=](Tape& tp) {
      const Tensor& g = tp.grad(self);
      const Tensor& pv = tp.value(p);
      float* gp = tp.grad(p).data();
      float pre[32], suf[32];
      for (int64_t b = 0; b < B; ++b)
        for (int64_t gi = 0; gi < (int64_t)groups_copy.size(); ++gi) {
          const auto& mem = groups_copy[(size_t)gi];
          const int k = (int)mem.size();
          const float* gout = g.data() + (b * G + gi) * S;
          if (k == 1) {
            K().axpy(S, 1.0f, gout, gp + (b * L + mem[0]) * S);
            continue;
          }
          for (int64_t s = 0; s < S; ++s) {
            // d(1 - prod_j(1-p_j))/dp_i = prod_{j != i}(1-p_j)
            pre[0] = 1.0f;
            for (int i = 0; i < k - 1; ++i)
              pre[i + 1] = pre[i] * (1.0f - pv.data()[(b * L + mem[(size_t)i]) * S + s]);
            suf[k - 1] = 1.0f;
            for (int i = k - 1; i > 0; --i)
              suf[i - 1] = suf[i] * (1.0f - pv.data()[(b * L + mem[(size_t)i]) * S + s]);
            for (int i = 0; i < k; ++i)
              gp[(b * L + mem[(size_t)i]) * S + s] += gout[s] * pre[i] * suf[i];
          }
        }
    });
  }
  return self;
}

}  // namespace lumos::ad
