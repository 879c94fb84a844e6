#pragma once

#include <vector>

#include "nnprof/rng.hpp"
#include "nnprof/tensor.hpp"

namespace nnprof {

// --- dense / structured ops ---------------------------------------------

// a [M,K] x b [K,N] -> [M,N]
Tensor matmul(const Tensor& a, const Tensor& b);

// input [B,Cin,H,W] or [Cin,H,W]; kernels [Cout,Cin,3,3]; bias [Cout].
// Valid padding, unit stride -> [B,Cout,H-2,W-2] (3D in, 3D out).
Tensor conv2d_3x3_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias);

Tensor relu(const Tensor& x);

// logits [B,K]; labels in [0,K). Scalar mean cross-entropy, softmax fused
// with the log for stability.
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

// x [...,D]; gain,shift [D]. Normalizes the last axis with 1/D variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift,
                  float epsilon = 1e-5f);

// x [B,T,D] or [T,D]; projection matrices [D,D]. Scaled dot-product
// self-attention with `heads` heads, scale 1/sqrt(D/heads).
Tensor multi_head_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                            const Tensor& wv, const Tensor& wo, int heads);

// Fresh tensor of N(mean, stddev^2) draws in flat index order.
Tensor sample_normal(Rng& rng, Shape shape, float mean, float stddev,
                     bool requires_grad = false);

// --- plumbing ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);         // same shape
Tensor add_bias(const Tensor& x, const Tensor& b);    // [...,D] + [D]
Tensor add_broadcast(const Tensor& x, const Tensor& t);  // [B,...] + [...]
Tensor scale(const Tensor& x, float c);
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor softmax_lastdim(const Tensor& x);

// a [B,M,K] x b [B,K,N] -> [B,M,N]; transpose_b treats b as [B,N,K].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);

Tensor slice_lastdim(const Tensor& x, std::int64_t offset, std::int64_t length);
Tensor concat_lastdim(const std::vector<Tensor>& xs);

// tokens [B,T,D] + token [D] -> [B,T+1,D] with the new token at position 0.
Tensor prepend_token(const Tensor& tokens, const Tensor& token);

// x [B,T,D] -> [B,D], row t of each batch element.
Tensor select_token(const Tensor& x, std::int64_t t);

// images [B,C,H,W] -> [B,(H/p)*(W/p),C*p*p]; patches scan row-major, values
// within a patch ordered (channel, y, x).
Tensor patchify(const Tensor& images, int patch);

// sum_i x_i * w_i -> scalar. Test helper for reducing any tensor to a loss.
Tensor weighted_sum(const Tensor& x, const std::vector<float>& w);

// Quantize-dequantize with straight-through gradient: d/dx is 1 where the
// pre-clamp integer lands inside [qmin,qmax], else 0.
Tensor fake_quantize(const Tensor& x, float scale, std::int64_t zero_point,
                     std::int64_t qmin, std::int64_t qmax);

}  // namespace nnprof
