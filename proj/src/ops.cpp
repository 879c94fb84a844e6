#include "nnprof/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace nnprof {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<MatRM>;
using CMap = Eigen::Map<const MatRM>;

using NodePtr = std::shared_ptr<TensorData>;

// Output grad is absent when no downstream op contributed anything; backward
// rules treat that as all-zeros and do nothing.
bool no_upstream(const NodePtr& out) { return out->grad.empty(); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2)
        throw DimensionError("matmul: expected 2-d operands, got " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                             " inner extents differ");
    const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    Map(out.ptr(), m, n).noalias() = CMap(a.ptr(), m, k) * CMap(b.ptr(), k, n);

    if (grad_enabled(a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr an = a.node(), bn = b.node(), on = out.node();
        Tape::active()->record([an, bn, on, m, k, n] {
            if (no_upstream(on)) return;
            CMap dout(on->grad.data(), m, n);
            if (an->requires_grad) {
                an->ensure_grad();
                Map(an->grad.data(), m, k).noalias() +=
                    dout * CMap(bn->values.data(), k, n).transpose();
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                Map(bn->grad.data(), k, n).noalias() +=
                    CMap(an->values.data(), m, k).transpose() * dout;
            }
        });
    }
    return out;
}

Tensor conv2d_3x3_valid(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    const bool batched = input.ndim() == 4;
    if (!batched && input.ndim() != 3)
        throw DimensionError("conv2d: input must be [B,C,H,W] or [C,H,W], got " +
                             shape_str(input.shape()));
    if (kernels.ndim() != 4 || kernels.dim(2) != 3 || kernels.dim(3) != 3)
        throw DimensionError("conv2d: kernels must be [Cout,Cin,3,3], got " +
                             shape_str(kernels.shape()));
    const std::int64_t B = batched ? input.dim(0) : 1;
    const std::int64_t Ci = batched ? input.dim(1) : input.dim(0);
    const std::int64_t H = batched ? input.dim(2) : input.dim(1);
    const std::int64_t W = batched ? input.dim(3) : input.dim(2);
    const std::int64_t Co = kernels.dim(0);
    if (kernels.dim(1) != Ci)
        throw DimensionError("conv2d: kernels expect " + std::to_string(kernels.dim(1)) +
                             " input channels, input has " + std::to_string(Ci));
    if (bias.ndim() != 1 || bias.dim(0) != Co)
        throw DimensionError("conv2d: bias must be [" + std::to_string(Co) + "], got " +
                             shape_str(bias.shape()));
    if (H < 3 || W < 3)
        throw DimensionError("conv2d: spatial extent " + std::to_string(H) + "x" +
                             std::to_string(W) + " too small for a 3x3 valid window");

    const std::int64_t OH = H - 2, OW = W - 2;
    const std::int64_t K = Ci * 9;       // rows of the column buffer
    const std::int64_t N = B * OH * OW;  // output positions

    // im2col: one big GEMM instead of a quadruple loop.
    auto col = std::make_shared<std::vector<float>>(static_cast<std::size_t>(K * N));
    {
        const float* in = input.ptr();
        float* c = col->data();
        for (std::int64_t ci = 0; ci < Ci; ++ci)
            for (std::int64_t u = 0; u < 3; ++u)
                for (std::int64_t v = 0; v < 3; ++v) {
                    float* row = c + ((ci * 3 + u) * 3 + v) * N;
                    for (std::int64_t b = 0; b < B; ++b) {
                        const float* src = in + ((b * Ci + ci) * H + u) * W + v;
                        float* dst = row + b * OH * OW;
                        for (std::int64_t oy = 0; oy < OH; ++oy)
                            std::memcpy(dst + oy * OW, src + oy * W,
                                        static_cast<std::size_t>(OW) * sizeof(float));
                    }
                }
    }

    Shape out_shape = batched ? Shape{B, Co, OH, OW} : Shape{Co, OH, OW};
    Tensor out = Tensor::zeros(std::move(out_shape));
    {
        // kernels are already a [Co, Ci*9] row-major matrix
        MatRM out_mat(Co, N);
        out_mat.noalias() = CMap(kernels.ptr(), Co, K) * CMap(col->data(), K, N);
        float* o = out.ptr();
        const float* bs = bias.ptr();
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t co = 0; co < Co; ++co) {
                const float* src = out_mat.data() + co * N + b * OH * OW;
                float* dst = o + (b * Co + co) * OH * OW;
                for (std::int64_t i = 0; i < OH * OW; ++i) dst[i] = src[i] + bs[co];
            }
    }

    if (grad_enabled(input.requires_grad() || kernels.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr in_n = input.node(), k_n = kernels.node(), b_n = bias.node(), on = out.node();
        Tape::active()->record([in_n, k_n, b_n, on, col, B, Ci, H, W, Co, OH, OW, K, N] {
            if (no_upstream(on)) return;
            // regroup upstream grad as [Co, N] to mirror the forward GEMM
            MatRM dout_mat(Co, N);
            {
                const float* g = on->grad.data();
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t co = 0; co < Co; ++co)
                        std::memcpy(dout_mat.data() + co * N + b * OH * OW,
                                    g + (b * Co + co) * OH * OW,
                                    static_cast<std::size_t>(OH * OW) * sizeof(float));
            }
            if (b_n->requires_grad) {
                b_n->ensure_grad();
                for (std::int64_t co = 0; co < Co; ++co)
                    b_n->grad[static_cast<std::size_t>(co)] += dout_mat.row(co).sum();
            }
            if (k_n->requires_grad) {
                k_n->ensure_grad();
                Map(k_n->grad.data(), Co, K).noalias() +=
                    dout_mat * CMap(col->data(), K, N).transpose();
            }
            if (in_n->requires_grad) {
                in_n->ensure_grad();
                MatRM dcol(K, N);
                dcol.noalias() = CMap(k_n->values.data(), Co, K).transpose() * dout_mat;
                float* din = in_n->grad.data();
                const float* dc = dcol.data();
                for (std::int64_t ci = 0; ci < Ci; ++ci)
                    for (std::int64_t u = 0; u < 3; ++u)
                        for (std::int64_t v = 0; v < 3; ++v) {
                            const float* row = dc + ((ci * 3 + u) * 3 + v) * N;
                            for (std::int64_t b = 0; b < B; ++b) {
                                float* dst = din + ((b * Ci + ci) * H + u) * W + v;
                                const float* src = row + b * OH * OW;
                                for (std::int64_t oy = 0; oy < OH; ++oy)
                                    for (std::int64_t ox = 0; ox < OW; ++ox)
                                        dst[oy * W + ox] += src[oy * OW + ox];
                            }
                        }
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const float* in = x.ptr();
    float* o = out.ptr();
    const std::int64_t n = x.size();
    for (std::int64_t i = 0; i < n; ++i) o[i] = in[i] > 0.0f ? in[i] : 0.0f;

    if (grad_enabled(x.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::active()->record([xn, on, n] {
            if (no_upstream(on)) return;
            xn->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
                if (xn->values[static_cast<std::size_t>(i)] > 0.0f)
                    xn->grad[static_cast<std::size_t>(i)] +=
                        on->grad[static_cast<std::size_t>(i)];
        });
    }
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2)
        throw DimensionError("cross_entropy: logits must be [B,K], got " +
                             shape_str(logits.shape()));
    const std::int64_t B = logits.dim(0), K = logits.dim(1);
    if (static_cast<std::int64_t>(labels.size()) != B)
        throw DimensionError("cross_entropy: " + std::to_string(B) + " rows vs " +
                             std::to_string(labels.size()) + " labels");
    for (std::int64_t b = 0; b < B; ++b) {
        int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= K)
            throw ValidationError("cross_entropy: label " + std::to_string(y) + " at row " +
                                  std::to_string(b) + " outside [0," + std::to_string(K) + ")");
    }

    auto probs = std::make_shared<std::vector<float>>(static_cast<std::size_t>(B * K));
    double total = 0.0;
    const float* lp = logits.ptr();
    for (std::int64_t b = 0; b < B; ++b) {
        const float* row = lp + b * K;
        float mx = row[0];
        for (std::int64_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double denom = 0.0;
        for (std::int64_t k = 0; k < K; ++k)
            denom += std::exp(static_cast<double>(row[k]) - mx);
        const int y = labels[static_cast<std::size_t>(b)];
        total += std::log(denom) - (static_cast<double>(row[y]) - mx);
        float* pr = probs->data() + b * K;
        for (std::int64_t k = 0; k < K; ++k)
            pr[k] = static_cast<float>(std::exp(static_cast<double>(row[k]) - mx) / denom);
    }
    Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(B)));

    if (grad_enabled(logits.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr ln = logits.node(), on = out.node();
        auto lab = std::make_shared<std::vector<int>>(labels);
        Tape::active()->record([ln, on, probs, lab, B, K] {
            if (no_upstream(on)) return;
            ln->ensure_grad();
            const float g = on->grad[0] / static_cast<float>(B);
            for (std::int64_t b = 0; b < B; ++b) {
                const float* pr = probs->data() + b * K;
                float* dl = ln->grad.data() + b * K;
                const int y = (*lab)[static_cast<std::size_t>(b)];
                for (std::int64_t k = 0; k < K; ++k)
                    dl[k] += g * (pr[k] - (k == y ? 1.0f : 0.0f));
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, float epsilon) {
    if (x.ndim() < 1) throw DimensionError("layer_norm: input must have at least one axis");
    const std::int64_t D = x.dim(x.ndim() - 1);
    if (gain.ndim() != 1 || gain.dim(0) != D || shift.ndim() != 1 || shift.dim(0) != D)
        throw DimensionError("layer_norm: gain/shift must be [" + std::to_string(D) +
                             "], got " + shape_str(gain.shape()) + " and " +
                             shape_str(shift.shape()));
    const std::int64_t rows = x.size() / D;

    Tensor out = Tensor::zeros(x.shape());
    auto xhat = std::make_shared<std::vector<float>>(static_cast<std::size_t>(x.size()));
    auto inv = std::make_shared<std::vector<float>>(static_cast<std::size_t>(rows));
    const float* in = x.ptr();
    const float* g = gain.ptr();
    const float* s = shift.ptr();
    float* o = out.ptr();
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* row = in + r * D;
        double mu = 0.0;
        for (std::int64_t d = 0; d < D; ++d) mu += row[d];
        mu /= static_cast<double>(D);
        double var = 0.0;
        for (std::int64_t d = 0; d < D; ++d) {
            double c = row[d] - mu;
            var += c * c;
        }
        var /= static_cast<double>(D);  // biased estimator, matches inference-style norms
        float iv = static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(epsilon)));
        (*inv)[static_cast<std::size_t>(r)] = iv;
        float* xh = xhat->data() + r * D;
        for (std::int64_t d = 0; d < D; ++d) {
            xh[d] = static_cast<float>((row[d] - mu)) * iv;
            o[r * D + d] = xh[d] * g[d] + s[d];
        }
    }

    if (grad_enabled(x.requires_grad() || gain.requires_grad() || shift.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), gn = gain.node(), sn = shift.node(), on = out.node();
        Tape::active()->record([xn, gn, sn, on, xhat, inv, rows, D] {
            if (no_upstream(on)) return;
            const float* dy = on->grad.data();
            if (gn->requires_grad || sn->requires_grad) {
                if (gn->requires_grad) gn->ensure_grad();
                if (sn->requires_grad) sn->ensure_grad();
                for (std::int64_t r = 0; r < rows; ++r) {
                    const float* xh = xhat->data() + r * D;
                    for (std::int64_t d = 0; d < D; ++d) {
                        if (gn->requires_grad)
                            gn->grad[static_cast<std::size_t>(d)] += dy[r * D + d] * xh[d];
                        if (sn->requires_grad)
                            sn->grad[static_cast<std::size_t>(d)] += dy[r * D + d];
                    }
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                const float* gv = gn->values.data();
                for (std::int64_t r = 0; r < rows; ++r) {
                    const float* xh = xhat->data() + r * D;
                    const float iv = (*inv)[static_cast<std::size_t>(r)];
                    double m1 = 0.0, m2 = 0.0;  // mean(dxh), mean(dxh*xhat)
                    for (std::int64_t d = 0; d < D; ++d) {
                        double dxh = static_cast<double>(dy[r * D + d]) * gv[d];
                        m1 += dxh;
                        m2 += dxh * xh[d];
                    }
                    m1 /= static_cast<double>(D);
                    m2 /= static_cast<double>(D);
                    for (std::int64_t d = 0; d < D; ++d) {
                        double dxh = static_cast<double>(dy[r * D + d]) * gv[d];
                        xn->grad[static_cast<std::size_t>(r * D + d)] +=
                            static_cast<float>(iv * (dxh - m1 - xh[d] * m2));
                    }
                }
            }
        });
    }
    return out;
}

Tensor sample_normal(Rng& rng, Shape shape, float mean, float stddev, bool requires_grad) {
    if (stddev < 0.0f)
        throw ValidationError("sample_normal: stddev must be non-negative, got " +
                              std::to_string(stddev));
    auto n = shape_numel(shape);
    std::vector<float> vals(static_cast<std::size_t>(n));
    for (auto& v : vals) v = rng.normal(mean, stddev);
    return Tensor(std::move(shape), std::move(vals), requires_grad);
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: shapes differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    const std::int64_t n = a.size();
    const float* pa = a.ptr();
    const float* pb = b.ptr();
    float* o = out.ptr();
    for (std::int64_t i = 0; i < n; ++i) o[i] = pa[i] + pb[i];

    if (grad_enabled(a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr an = a.node(), bn = b.node(), on = out.node();
        Tape::active()->record([an, bn, on, n] {
            if (no_upstream(on)) return;
            for (const NodePtr& t : {an, bn}) {
                if (!t->requires_grad) continue;
                t->ensure_grad();
                for (std::int64_t i = 0; i < n; ++i)
                    t->grad[static_cast<std::size_t>(i)] += on->grad[static_cast<std::size_t>(i)];
            }
        });
    }
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    if (b.ndim() != 1 || x.ndim() < 1 || x.dim(x.ndim() - 1) != b.dim(0))
        throw DimensionError("add_bias: last axis of " + shape_str(x.shape()) +
                             " must match bias " + shape_str(b.shape()));
    const std::int64_t D = b.dim(0);
    const std::int64_t rows = x.size() / D;
    Tensor out = Tensor::zeros(x.shape());
    const float* in = x.ptr();
    const float* bp = b.ptr();
    float* o = out.ptr();
    for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t d = 0; d < D; ++d) o[r * D + d] = in[r * D + d] + bp[d];

    if (grad_enabled(x.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), bn = b.node(), on = out.node();
        Tape::active()->record([xn, bn, on, rows, D] {
            if (no_upstream(on)) return;
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::int64_t r = 0; r < rows; ++r)
                    for (std::int64_t d = 0; d < D; ++d)
                        bn->grad[static_cast<std::size_t>(d)] +=
                            on->grad[static_cast<std::size_t>(r * D + d)];
            }
        });
    }
    return out;
}

Tensor add_broadcast(const Tensor& x, const Tensor& t) {
    if (x.ndim() < 2)
        throw DimensionError("add_broadcast: need a leading batch axis on " +
                             shape_str(x.shape()));
    Shape tail(x.shape().begin() + 1, x.shape().end());
    if (t.shape() != tail)
        throw DimensionError("add_broadcast: trailing shape of " + shape_str(x.shape()) +
                             " must match " + shape_str(t.shape()));
    const std::int64_t B = x.dim(0);
    const std::int64_t n = t.size();
    Tensor out = Tensor::zeros(x.shape());
    const float* in = x.ptr();
    const float* tp = t.ptr();
    float* o = out.ptr();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t i = 0; i < n; ++i) o[b * n + i] = in[b * n + i] + tp[i];

    if (grad_enabled(x.requires_grad() || t.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), tn = t.node(), on = out.node();
        Tape::active()->record([xn, tn, on, B, n] {
            if (no_upstream(on)) return;
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
            }
            if (tn->requires_grad) {
                tn->ensure_grad();
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t i = 0; i < n; ++i)
                        tn->grad[static_cast<std::size_t>(i)] +=
                            on->grad[static_cast<std::size_t>(b * n + i)];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& x, float c) {
    Tensor out = Tensor::zeros(x.shape());
    const std::int64_t n = x.size();
    const float* in = x.ptr();
    float* o = out.ptr();
    for (std::int64_t i = 0; i < n; ++i) o[i] = in[i] * c;

    if (grad_enabled(x.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::active()->record([xn, on, c, n] {
            if (no_upstream(on)) return;
            xn->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
                xn->grad[static_cast<std::size_t>(i)] +=
                    c * on->grad[static_cast<std::size_t>(i)];
        });
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape new_shape) {
    if (shape_numel(new_shape) != x.size())
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " +
                             shape_str(new_shape) + " changes element count");
    Tensor out(new_shape, x.values());

    if (grad_enabled(x.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::active()->record([xn, on] {
            if (no_upstream(on)) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
        });
    }
    return out;
}

Tensor softmax_lastdim(const Tensor& x) {
    if (x.ndim() < 1) throw DimensionError("softmax: input must have at least one axis");
    const std::int64_t D = x.dim(x.ndim() - 1);
    const std::int64_t rows = x.size() / D;
    Tensor out = Tensor::zeros(x.shape());
    const float* in = x.ptr();
    float* o = out.ptr();
    for (std::int64_t r = 0; r < rows; ++r) {
        const float* row = in + r * D;
        float mx = row[0];
        for (std::int64_t d = 1; d < D; ++d) mx = std::max(mx, row[d]);
        double denom = 0.0;
        for (std::int64_t d = 0; d < D; ++d)
            denom += std::exp(static_cast<double>(row[d]) - mx);
        for (std::int64_t d = 0; d < D; ++d)
            o[r * D + d] =
                static_cast<float>(std::exp(static_cast<double>(row[d]) - mx) / denom);
    }

    if (grad_enabled(x.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::active()->record([xn, on, rows, D] {
            if (no_upstream(on)) return;
            xn->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r) {
                const float* y = on->values.data() + r * D;
                const float* dy = on->grad.data() + r * D;
                double dot = 0.0;
                for (std::int64_t d = 0; d < D; ++d)
                    dot += static_cast<double>(dy[d]) * y[d];
                for (std::int64_t d = 0; d < D; ++d)
                    xn->grad[static_cast<std::size_t>(r * D + d)] +=
                        static_cast<float>(y[d] * (dy[d] - dot));
            }
        });
    }
    return out;
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
        throw DimensionError("bmm: expected matching 3-d operands, got " +
                             shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::int64_t B = a.dim(0), M = a.dim(1), K = a.dim(2);
    const std::int64_t N = transpose_b ? b.dim(1) : b.dim(2);
    const std::int64_t bk = transpose_b ? b.dim(2) : b.dim(1);
    if (bk != K)
        throw DimensionError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                             (transpose_b ? " (b transposed)" : "") + " inner extents differ");

    Tensor out = Tensor::zeros({B, M, N});
    for (std::int64_t i = 0; i < B; ++i) {
        CMap ai(a.ptr() + i * M * K, M, K);
        Map oi(out.ptr() + i * M * N, M, N);
        if (transpose_b)
            oi.noalias() = ai * CMap(b.ptr() + i * N * K, N, K).transpose();
        else
            oi.noalias() = ai * CMap(b.ptr() + i * K * N, K, N);
    }

    if (grad_enabled(a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr an = a.node(), bn = b.node(), on = out.node();
        Tape::active()->record([an, bn, on, B, M, K, N, transpose_b] {
            if (no_upstream(on)) return;
            for (std::int64_t i = 0; i < B; ++i) {
                CMap dout(on->grad.data() + i * M * N, M, N);
                if (an->requires_grad) {
                    an->ensure_grad();
                    Map da(an->grad.data() + i * M * K, M, K);
                    if (transpose_b)
                        da.noalias() += dout * CMap(bn->values.data() + i * N * K, N, K);
                    else
                        da.noalias() +=
                            dout * CMap(bn->values.data() + i * K * N, K, N).transpose();
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    if (transpose_b) {
                        Map db(bn->grad.data() + i * N * K, N, K);
                        db.noalias() +=
                            dout.transpose() * CMap(an->values.data() + i * M * K, M, K);
                    } else {
                        Map db(bn->grad.data() + i * K * N, K, N);
                        db.noalias() +=
                            CMap(an->values.data() + i * M * K, M, K).transpose() * dout;
                    }
                }
            }
        });
    }
    return out;
}

Tensor slice_lastdim(const Tensor& x, std::int64_t offset, std::int64_t length) {
    const std::int64_t D = x.dim(x.ndim() - 1);
    if (offset < 0 || length <= 0 || offset + length > D)
        throw DimensionError("slice: [" + std::to_string(offset) + "," +
                             std::to_string(offset + length) + ") outside axis of extent " +
                             std::to_string(D));
    const std::int64_t rows = x.size() / D;
    Shape os = x.shape();
    os.back() = length;
    Tensor out = Tensor::zeros(std::move(os));
    const float* in = x.ptr();
    float* o = out.ptr();
    for (std::int64_t r = 0; r < rows; ++r)
        std::memcpy(o + r * length, in + r * D + offset,
                    static_cast<std::size_t>(length) * sizeof(float));

    if (grad_enabled(x.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::active()->record([xn, on, rows, D, offset, length] {
            if (no_upstream(on)) return;
            xn->ensure_grad();
            for (std::int64_t r = 0; r < rows; ++r)
                for (std::int64_t d = 0; d < length; ++d)
                    xn->grad[static_cast<std::size_t>(r * D + offset + d)] +=
                        on->grad[static_cast<std::size_t>(r * length + d)];
        });
    }
    return out;
}

Tensor concat_lastdim(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw DimensionError("concat: no inputs");
    Shape lead = xs[0].shape();
    lead.pop_back();
    std::int64_t total = 0;
    bool any_grad = false;
    for (const auto& x : xs) {
        Shape l = x.shape();
        std::int64_t last = l.back();
        l.pop_back();
        if (l != lead)
            throw DimensionError("concat: leading shape mismatch at " + shape_str(x.shape()));
        total += last;
        any_grad = any_grad || x.requires_grad();
    }
    Shape os = lead;
    os.push_back(total);
    Tensor out = Tensor::zeros(std::move(os));
    const std::int64_t rows = out.size() / total;
    float* o = out.ptr();
    std::int64_t off = 0;
    for (const auto& x : xs) {
        const std::int64_t d = x.dim(x.ndim() - 1);
        const float* in = x.ptr();
        for (std::int64_t r = 0; r < rows; ++r)
            std::memcpy(o + r * total + off, in + r * d,
                        static_cast<std::size_t>(d) * sizeof(float));
        off += d;
    }

    if (grad_enabled(any_grad)) {
        out.set_requires_grad(true);
        std::vector<NodePtr> nodes;
        std::vector<std::int64_t> widths;
        for (const auto& x : xs) {
            nodes.push_back(x.node());
            widths.push_back(x.dim(x.ndim() - 1));
        }
        NodePtr on = out.node();
        Tape::active()->record([nodes, widths, on, rows, total] {
            if (no_upstream(on)) return;
            std::int64_t off = 0;
            for (std::size_t i = 0; i < nodes.size(); ++i) {
                const std::int64_t d = widths[i];
                if (nodes[i]->requires_grad) {
                    nodes[i]->ensure_grad();
                    for (std::int64_t r = 0; r < rows; ++r)
                        for (std::int64_t k = 0; k < d; ++k)
                            nodes[i]->grad[static_cast<std::size_t>(r * d + k)] +=
                                on->grad[static_cast<std::size_t>(r * total + off + k)];
                }
                off += d;
            }
        });
    }
    return out;
}

Tensor prepend_token(const Tensor& tokens, const Tensor& token) {
    if (tokens.ndim() != 3 || token.ndim() != 1 || token.dim(0) != tokens.dim(2))
        throw DimensionError("prepend_token: want [B,T,D] and [D], got " +
                             shape_str(tokens.shape()) + " and " + shape_str(token.shape()));
    const std::int64_t B = tokens.dim(0), T = tokens.dim(1), D = tokens.dim(2);
    Tensor out = Tensor::zeros({B, T + 1, D});
    const float* in = tokens.ptr();
    const float* tk = token.ptr();
    float* o = out.ptr();
    for (std::int64_t b = 0; b < B; ++b) {
        std::memcpy(o + b * (T + 1) * D, tk, static_cast<std::size_t>(D) * sizeof(float));
        std::memcpy(o + (b * (T + 1) + 1) * D, in + b * T * D,
                    static_cast<std::size_t>(T * D) * sizeof(float));
    }

    if (grad_enabled(tokens.requires_grad() || token.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr tn = tokens.node(), kn = token.node(), on = out.node();
        Tape::active()->record([tn, kn, on, B, T, D] {
            if (no_upstream(on)) return;
            if (kn->requires_grad) {
                kn->ensure_grad();
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t d = 0; d < D; ++d)
                        kn->grad[static_cast<std::size_t>(d)] +=
                            on->grad[static_cast<std::size_t>(b * (T + 1) * D + d)];
            }
            if (tn->requires_grad) {
                tn->ensure_grad();
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t i = 0; i < T * D; ++i)
                        tn->grad[static_cast<std::size_t>(b * T * D + i)] +=
                            on->grad[static_cast<std::size_t>((b * (T + 1) + 1) * D + i)];
            }
        });
    }
    return out;
}

Tensor select_token(const Tensor& x, std::int64_t t) {
    if (x.ndim() != 3)
        throw DimensionError("select_token: want [B,T,D], got " + shape_str(x.shape()));
    const std::int64_t B = x.dim(0), T = x.dim(1), D = x.dim(2);
    if (t < 0 || t >= T)
        throw DimensionError("select_token: index " + std::to_string(t) +
                             " outside [0," + std::to_string(T) + ")");
    Tensor out = Tensor::zeros({B, D});
    for (std::int64_t b = 0; b < B; ++b)
        std::memcpy(out.ptr() + b * D, x.ptr() + (b * T + t) * D,
                    static_cast<std::size_t>(D) * sizeof(float));

    if (grad_enabled(x.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::active()->record([xn, on, B, T, D, t] {
            if (no_upstream(on)) return;
            xn->ensure_grad();
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t d = 0; d < D; ++d)
                    xn->grad[static_cast<std::size_t>((b * T + t) * D + d)] +=
                        on->grad[static_cast<std::size_t>(b * D + d)];
        });
    }
    return out;
}

Tensor patchify(const Tensor& images, int patch) {
    if (images.ndim() != 4)
        throw DimensionError("patchify: want [B,C,H,W], got " + shape_str(images.shape()));
    const std::int64_t B = images.dim(0), C = images.dim(1), H = images.dim(2),
                       W = images.dim(3);
    const std::int64_t p = patch;
    if (p <= 0 || H % p != 0 || W % p != 0)
        throw DimensionError("patchify: " + std::to_string(H) + "x" + std::to_string(W) +
                             " not divisible by patch " + std::to_string(p));
    const std::int64_t GY = H / p, GX = W / p, T = GY * GX, D = C * p * p;
    Tensor out = Tensor::zeros({B, T, D});
    const float* in = images.ptr();
    float* o = out.ptr();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t gy = 0; gy < GY; ++gy)
            for (std::int64_t gx = 0; gx < GX; ++gx) {
                float* dst = o + (b * T + gy * GX + gx) * D;
                for (std::int64_t c = 0; c < C; ++c)
                    for (std::int64_t y = 0; y < p; ++y)
                        for (std::int64_t x = 0; x < p; ++x)
                            dst[(c * p + y) * p + x] =
                                in[((b * C + c) * H + gy * p + y) * W + gx * p + x];
            }

    if (grad_enabled(images.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = images.node(), on = out.node();
        Tape::active()->record([xn, on, B, C, H, W, p, GY, GX, T, D] {
            if (no_upstream(on)) return;
            xn->ensure_grad();
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t gy = 0; gy < GY; ++gy)
                    for (std::int64_t gx = 0; gx < GX; ++gx) {
                        const float* src = on->grad.data() + (b * T + gy * GX + gx) * D;
                        for (std::int64_t c = 0; c < C; ++c)
                            for (std::int64_t y = 0; y < p; ++y)
                                for (std::int64_t x = 0; x < p; ++x)
                                    xn->grad[static_cast<std::size_t>(
                                        ((b * C + c) * H + gy * p + y) * W + gx * p + x)] +=
                                        src[(c * p + y) * p + x];
                    }
        });
    }
    return out;
}

Tensor weighted_sum(const Tensor& x, const std::vector<float>& w) {
    if (static_cast<std::int64_t>(w.size()) != x.size())
        throw DimensionError("weighted_sum: " + std::to_string(x.size()) + " elements vs " +
                             std::to_string(w.size()) + " weights");
    double acc = 0.0;
    const float* in = x.ptr();
    for (std::size_t i = 0; i < w.size(); ++i)
        acc += static_cast<double>(in[i]) * static_cast<double>(w[i]);
    Tensor out = Tensor::scalar(static_cast<float>(acc));

    if (grad_enabled(x.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        auto wp = std::make_shared<std::vector<float>>(w);
        Tape::active()->record([xn, on, wp] {
            if (no_upstream(on)) return;
            xn->ensure_grad();
            const float g = on->grad[0];
            for (std::size_t i = 0; i < wp->size(); ++i) xn->grad[i] += g * (*wp)[i];
        });
    }
    return out;
}

Tensor fake_quantize(const Tensor& x, float scale, std::int64_t zero_point,
                     std::int64_t qmin, std::int64_t qmax) {
    if (!(scale > 0.0f))
        throw ValidationError("fake_quantize: scale must be positive, got " +
                              std::to_string(scale));
    if (qmin >= qmax)
        throw ValidationError("fake_quantize: empty integer range [" + std::to_string(qmin) +
                              "," + std::to_string(qmax) + "]");
    const std::int64_t n = x.size();
    Tensor out = Tensor::zeros(x.shape());
    auto pass = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(n));
    const float* in = x.ptr();
    float* o = out.ptr();
    const double s = static_cast<double>(scale);
    const double zp = static_cast<double>(zero_point);
    for (std::int64_t i = 0; i < n; ++i) {
        // nearbyint under the default rounding mode gives ties-to-even
        double q = std::nearbyint(static_cast<double>(in[i]) / s) + zp;
        bool inside = q >= static_cast<double>(qmin) && q <= static_cast<double>(qmax);
        (*pass)[static_cast<std::size_t>(i)] = inside ? 1 : 0;
        double qc = std::min(std::max(q, static_cast<double>(qmin)),
                             static_cast<double>(qmax));
        o[i] = static_cast<float>((qc - zp) * s);
    }

    if (grad_enabled(x.requires_grad())) {
        out.set_requires_grad(true);
        NodePtr xn = x.node(), on = out.node();
        Tape::active()->record([xn, on, pass, n] {
            if (no_upstream(on)) return;
            xn->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
                if ((*pass)[static_cast<std::size_t>(i)])
                    xn->grad[static_cast<std::size_t>(i)] +=
                        on->grad[static_cast<std::size_t>(i)];
        });
    }
    return out;
}

Tensor multi_head_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                            const Tensor& wv, const Tensor& wo, int heads) {
    const bool batched = x.ndim() == 3;
    if (!batched && x.ndim() != 2)
        throw DimensionError("attention: input must be [B,T,D] or [T,D], got " +
                             shape_str(x.shape()));
    const std::int64_t D = x.dim(x.ndim() - 1);
    for (const Tensor* w : {&wq, &wk, &wv, &wo})
        if (w->ndim() != 2 || w->dim(0) != D || w->dim(1) != D)
            throw DimensionError("attention: projections must be [" + std::to_string(D) + "," +
                                 std::to_string(D) + "], got " + shape_str(w->shape()));
    if (heads < 1) throw ConfigurationError("attention: head count must be at least 1");
    if (D % heads != 0)
        throw ConfigurationError("attention: model dim " + std::to_string(D) +
                                 " not divisible by " + std::to_string(heads) + " heads");

    Tensor x3 = batched ? x : reshape(x, {1, x.dim(0), D});
    const std::int64_t B = x3.dim(0), T = x3.dim(1);
    const std::int64_t dh = D / heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));

    Tensor xf = reshape(x3, {B * T, D});
    Tensor q = reshape(matmul(xf, wq), {B, T, D});
    Tensor k = reshape(matmul(xf, wk), {B, T, D});
    Tensor v = reshape(matmul(xf, wv), {B, T, D});

    Tensor merged;
    if (heads == 1) {
        Tensor att = softmax_lastdim(scale(bmm(q, k, true), inv_sqrt));
        merged = bmm(att, v);
    } else {
        std::vector<Tensor> outs;
        outs.reserve(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            Tensor qh = slice_lastdim(q, h * dh, dh);
            Tensor kh = slice_lastdim(k, h * dh, dh);
            Tensor vh = slice_lastdim(v, h * dh, dh);
            Tensor att = softmax_lastdim(scale(bmm(qh, kh, true), inv_sqrt));
            outs.push_back(bmm(att, vh));
        }
        merged = concat_lastdim(outs);
    }
    Tensor out = reshape(matmul(reshape(merged, {B * T, D}), wo), {B, T, D});
    return batched ? out : reshape(out, {T, D});
}

}  // namespace nnprof
