#pragma once

#include <vector>

#include "lumos/ad/tape.hpp"

namespace lumos::ad {

// Elementwise
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, float c);
Var add_scalar(Var a, float c);
Var relu(Var a);
Var sigmoid(Var a);
Var logv(Var a);  // values must be > 0
Var clamp(Var a, float lo, float hi);

// Conv family. Weight layouts are chosen so each GEMM operand is a plain
// row-major view: conv weight [Cout, Cin, 3, 3], transposed-conv weight
// [2, 2, Cout, Cin]. bias may be a default Var{} for none.
Var conv2d(Var x, Var w, Var bias, int stride);  // 3x3, pad 1, stride 1 or 2
Var tconv2d_x2(Var x, Var w, Var bias);          // 2x2, stride 2
Var bilinear_up2(Var x);                         // align_corners=false

// Shape/structure
Var concat_ch(Var a, Var b);        // [B,Ca,H,W] + [B,Cb,H,W]
Var reshape(Var x, std::vector<int64_t> shape);
Var transpose12(Var x);             // [N,A,B] -> [N,B,A]
Var split_heads(Var x, int heads);  // [B,T,D] -> [B*heads,T,D/heads]
Var merge_heads(Var x, int heads);  // inverse of split_heads
Var slice_dim0(Var x, int64_t i0, int64_t i1);
Var detach(Var x);
Var tile0(Var x, int copies);  // [d0,...] -> [copies, d0, ...]

// Linear algebra / attention
Var linear(Var x, Var w, Var bias);  // x [R,In], w [Out,In] -> [R,Out]
Var layernorm(Var x, Var gamma, Var beta);  // normalizes last dim, eps 1e-5
Var bmm(Var a, Var b, bool trans_b);  // [N,M,K] x [N,K,P] (or [N,P,K])
Var softmax_lastdim(Var x);
Var add_constant(Var x, const Tensor& c);  // same-shape constant, no grad

// Reductions / composition
Var mean_all(Var x);
// [B,L,S] -> [B,G,S]; out_g = 1 - prod_{l in group}(1 - p_l)
Var noisy_or(Var p, const std::vector<std::vector<int>>& groups);

}  // namespace lumos::ad
