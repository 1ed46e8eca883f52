#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sft/parallel.hpp"
#include "sft/tensor.hpp"

// Differentiable layer kernels. Convolutions run as im2col + GEMM; per-sample
// GEMM problems have fixed shapes and the batched weight-gradient reduction is
// a single fixed-shape GEMM, so every kernel here produces bit-identical
// results for any worker count.

namespace sft {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

namespace detail {

// cols is (IC*KH*KW) x (OH*OW), row-major. Out-of-bounds taps read as zero.
template <class T>
void im2col(const T* x, int ic, int ih, int iw, int kh, int kw, int stride,
            int pad, int oh, int ow, T* cols) {
    const int ncols = oh * ow;
    for (int c = 0; c < ic; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                T* row = cols + ((c * kh + ky) * kw + kx) * static_cast<std::int64_t>(ncols);
                for (int oy = 0; oy < oh; ++oy) {
                    const int yy = oy * stride - pad + ky;
                    if (yy < 0 || yy >= ih) {
                        for (int ox = 0; ox < ow; ++ox) row[oy * ow + ox] = T(0);
                        continue;
                    }
                    const T* src = x + (c * ih + yy) * static_cast<std::int64_t>(iw);
                    for (int ox = 0; ox < ow; ++ox) {
                        const int xx = ox * stride - pad + kx;
                        row[oy * ow + ox] = (xx < 0 || xx >= iw) ? T(0) : src[xx];
                    }
                }
            }
        }
    }
}

// Scatter-add of dcols back into the input gradient (inverse of im2col).
template <class T>
void col2im_add(const T* dcols, int ic, int ih, int iw, int kh, int kw,
                int stride, int pad, int oh, int ow, T* dx) {
    const int ncols = oh * ow;
    for (int c = 0; c < ic; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const T* row = dcols + ((c * kh + ky) * kw + kx) * static_cast<std::int64_t>(ncols);
                for (int oy = 0; oy < oh; ++oy) {
                    const int yy = oy * stride - pad + ky;
                    if (yy < 0 || yy >= ih) continue;
                    T* dst = dx + (c * ih + yy) * static_cast<std::int64_t>(iw);
                    for (int ox = 0; ox < ow; ++ox) {
                        const int xx = ox * stride - pad + kx;
                        if (xx >= 0 && xx < iw) dst[xx] += row[oy * ow + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

template <class T>
void conv2d_check(const Tensor4<T>& input, const Tensor4<T>& weight,
                  const Tensor4<T>& bias, int stride, int pad) {
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (pad < 0) throw std::invalid_argument("conv2d: pad must be >= 0");
    if (input.c() != weight.c())
        throw std::invalid_argument("conv2d: input shape " + input.shape_str() +
                                    " does not match weight shape " + weight.shape_str() +
                                    " (channel count)");
    if (bias.n() != weight.n())
        throw std::invalid_argument("conv2d: bias shape " + bias.shape_str() +
                                    " does not match weight shape " + weight.shape_str());
    if (conv_out_extent(input.h(), weight.h(), stride, pad) < 1 ||
        conv_out_extent(input.w(), weight.w(), stride, pad) < 1)
        throw std::invalid_argument("conv2d: kernel " + weight.shape_str() +
                                    " does not fit input " + input.shape_str());
}

template <class T>
Tensor4<T> conv2d_forward(const Tensor4<T>& input, const Tensor4<T>& weight,
                          const Tensor4<T>& bias, int stride, int pad) {
    conv2d_check(input, weight, bias, stride, pad);
    const int B = input.n(), IC = input.c(), IH = input.h(), IW = input.w();
    const int OC = weight.n(), KH = weight.h(), KW = weight.w();
    const int OH = conv_out_extent(IH, KH, stride, pad);
    const int OW = conv_out_extent(IW, KW, stride, pad);
    const int K = IC * KH * KW, N = OH * OW;

    Tensor4<T> out(B, OC, OH, OW);
    CMapRM<T> Wm(weight.data.data(), OC, K);
    parallel_chunks(B, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<T> cols(static_cast<std::size_t>(K) * N);
        for (std::int64_t b = lo; b < hi; ++b) {
            detail::im2col(input.sample_ptr(static_cast<int>(b)), IC, IH, IW, KH, KW,
                           stride, pad, OH, OW, cols.data());
            CMapRM<T> Cm(cols.data(), K, N);
            MapRM<T> Om(out.sample_ptr(static_cast<int>(b)), OC, N);
            Om.noalias() = Wm * Cm;
            for (int oc = 0; oc < OC; ++oc)
                Om.row(oc).array() += bias.data[oc];
        }
    });
    return out;
}

// Accumulates into dweight/dbias; writes dinput (assumed zeroed by caller or
// fresh). The weight-gradient reduction runs as one fixed-shape GEMM over the
// whole batch so its summation order never depends on threading.
template <class T>
void conv2d_backward(const Tensor4<T>& input, const Tensor4<T>& weight,
                     int stride, int pad, const Tensor4<T>& dout,
                     Tensor4<T>* dinput, Tensor4<T>* dweight, Tensor4<T>* dbias) {
    const int B = input.n(), IC = input.c(), IH = input.h(), IW = input.w();
    const int OC = weight.n(), KH = weight.h(), KW = weight.w();
    const int OH = dout.h(), OW = dout.w();
    const int K = IC * KH * KW, N = OH * OW;

    CMapRM<T> Wm(weight.data.data(), OC, K);
    if (dinput) {
        parallel_chunks(B, [&](std::int64_t lo, std::int64_t hi) {
            std::vector<T> dcols(static_cast<std::size_t>(K) * N);
            for (std::int64_t b = lo; b < hi; ++b) {
                CMapRM<T> dOm(dout.sample_ptr(static_cast<int>(b)), OC, N);
                MapRM<T> dCm(dcols.data(), K, N);
                dCm.noalias() = Wm.transpose() * dOm;
                detail::col2im_add(dcols.data(), IC, IH, IW, KH, KW, stride, pad,
                                   OH, OW, dinput->sample_ptr(static_cast<int>(b)));
            }
        });
    }

    if (dweight) {
        // Gather (OC x B*N) activations-gradient and (K x B*N) columns, then
        // reduce with a single GEMM.
        std::vector<T> cols_all(static_cast<std::size_t>(K) * B * N);
        std::vector<T> dout_all(static_cast<std::size_t>(OC) * B * N);
        parallel_for(B, [&](std::int64_t b) {
            std::vector<T> cols(static_cast<std::size_t>(K) * N);
            detail::im2col(input.sample_ptr(static_cast<int>(b)), IC, IH, IW, KH, KW,
                           stride, pad, OH, OW, cols.data());
            for (int k = 0; k < K; ++k)
                std::copy_n(cols.data() + static_cast<std::int64_t>(k) * N, N,
                            cols_all.data() + (static_cast<std::int64_t>(k) * B + b) * N);
            const T* dsrc = dout.sample_ptr(static_cast<int>(b));
            for (int oc = 0; oc < OC; ++oc)
                std::copy_n(dsrc + static_cast<std::int64_t>(oc) * N, N,
                            dout_all.data() + (static_cast<std::int64_t>(oc) * B + b) * N);
        });
        CMapRM<T> dOall(dout_all.data(), OC, B * N);
        CMapRM<T> Call(cols_all.data(), K, B * N);
        MapRM<T> dWm(dweight->data.data(), OC, K);
        dWm.noalias() += dOall * Call.transpose();
    }

    if (dbias) {
        for (int b = 0; b < B; ++b) {
            const T* dsrc = dout.sample_ptr(b);
            for (int oc = 0; oc < OC; ++oc) {
                T s(0);
                for (int i = 0; i < N; ++i) s += dsrc[oc * static_cast<std::int64_t>(N) + i];
                dbias->data[oc] += s;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

// argmax holds, per output unit, the flat (c,y,x) index of the window winner
// within its sample; ties go to the lowest flat index.
template <class T>
Tensor4<T> maxpool_forward(const Tensor4<T>& input, int k, int stride,
                           std::vector<std::int32_t>* argmax) {
    if (k < 1) throw std::invalid_argument("maxpool: window must be >= 1");
    if (k > input.h() || k > input.w())
        throw std::invalid_argument("maxpool: window " + std::to_string(k) +
                                    " larger than input " + input.shape_str());
    const int B = input.n(), C = input.c(), IH = input.h(), IW = input.w();
    const int OH = (IH - k) / stride + 1, OW = (IW - k) / stride + 1;
    Tensor4<T> out(B, C, OH, OW);
    argmax->assign(static_cast<std::size_t>(B) * C * OH * OW, 0);

    parallel_for(B, [&](std::int64_t b) {
        const T* x = input.sample_ptr(static_cast<int>(b));
        T* y = out.sample_ptr(static_cast<int>(b));
        std::int32_t* am = argmax->data() + b * static_cast<std::int64_t>(C) * OH * OW;
        for (int c = 0; c < C; ++c) {
            for (int oy = 0; oy < OH; ++oy) {
                for (int ox = 0; ox < OW; ++ox) {
                    int best = (c * IH + oy * stride) * IW + ox * stride;
                    T bv = x[best];
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            const int idx = (c * IH + oy * stride + ky) * IW + ox * stride + kx;
                            if (x[idx] > bv) { bv = x[idx]; best = idx; }
                        }
                    }
                    y[(c * OH + oy) * OW + ox] = bv;
                    am[(c * OH + oy) * OW + ox] = best;
                }
            }
        }
    });
    return out;
}

template <class T>
void maxpool_backward(const std::vector<std::int32_t>& argmax, const Tensor4<T>& dout,
                      Tensor4<T>* dinput) {
    const int B = dout.n();
    const std::int64_t per = dout.sample_size();
    parallel_for(B, [&](std::int64_t b) {
        const T* dy = dout.sample_ptr(static_cast<int>(b));
        T* dx = dinput->sample_ptr(static_cast<int>(b));
        const std::int32_t* am = argmax.data() + b * per;
        for (std::int64_t i = 0; i < per; ++i) dx[am[i]] += dy[i];
    });
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

template <class T>
Tensor4<T> relu_forward(const Tensor4<T>& input) {
    Tensor4<T> out(input.n(), input.c(), input.h(), input.w());
    parallel_chunks(input.numel(), [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i)
            out.data[i] = input.data[i] > T(0) ? input.data[i] : T(0);
    });
    return out;
}

template <class T>
void relu_backward(const Tensor4<T>& input, const Tensor4<T>& dout, Tensor4<T>* dinput) {
    parallel_chunks(input.numel(), [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i)
            dinput->data[i] += input.data[i] > T(0) ? dout.data[i] : T(0);
    });
}

// ---------------------------------------------------------------------------
// Fully connected
// ---------------------------------------------------------------------------

template <class T>
Tensor4<T> linear_forward(const Tensor4<T>& input, const Tensor4<T>& weight,
                          const Tensor4<T>& bias) {
    const int B = input.n(), F = static_cast<int>(input.sample_size());
    const int OF = weight.n();
    if (weight.c() != F)
        throw std::invalid_argument("linear: input shape " + input.shape_str() +
                                    " does not match weight shape " + weight.shape_str());
    if (bias.n() != OF)
        throw std::invalid_argument("linear: bias shape " + bias.shape_str() +
                                    " does not match weight shape " + weight.shape_str());
    Tensor4<T> out(B, OF, 1, 1);
    CMapRM<T> Xm(input.data.data(), B, F);
    CMapRM<T> Wm(weight.data.data(), OF, F);
    MapRM<T> Om(out.data.data(), B, OF);
    Om.noalias() = Xm * Wm.transpose();
    for (int b = 0; b < B; ++b)
        for (int o = 0; o < OF; ++o) out.data[static_cast<std::int64_t>(b) * OF + o] += bias.data[o];
    return out;
}

template <class T>
void linear_backward(const Tensor4<T>& input, const Tensor4<T>& weight,
                     const Tensor4<T>& dout, Tensor4<T>* dinput,
                     Tensor4<T>* dweight, Tensor4<T>* dbias) {
    const int B = input.n(), F = static_cast<int>(input.sample_size());
    const int OF = weight.n();
    CMapRM<T> Xm(input.data.data(), B, F);
    CMapRM<T> Wm(weight.data.data(), OF, F);
    CMapRM<T> dOm(dout.data.data(), B, OF);
    if (dinput) {
        MapRM<T> dXm(dinput->data.data(), B, F);
        dXm.noalias() += dOm * Wm;
    }
    if (dweight) {
        MapRM<T> dWm(dweight->data.data(), OF, F);
        dWm.noalias() += dOm.transpose() * Xm;
    }
    if (dbias) {
        for (int b = 0; b < B; ++b)
            for (int o = 0; o < OF; ++o) dbias->data[o] += dout.data[static_cast<std::int64_t>(b) * OF + o];
    }
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy
// ---------------------------------------------------------------------------

// Stable softmax (max-subtraction) plus mean cross-entropy over the batch.
template <class T>
T softmax_xent_forward(const Tensor4<T>& logits, const std::vector<int>& labels,
                       Tensor4<T>* probs) {
    const int B = logits.n(), K = static_cast<int>(logits.sample_size());
    if (static_cast<int>(labels.size()) != B)
        throw std::invalid_argument("softmax_xent: label count does not match batch");
    for (int y : labels)
        if (y < 0 || y >= K)
            throw std::invalid_argument("softmax_xent: label " + std::to_string(y) +
                                        " out of range [0," + std::to_string(K) + ")");
    *probs = Tensor4<T>(B, K, 1, 1);
    T loss(0);
    for (int b = 0; b < B; ++b) {
        const T* l = logits.data.data() + static_cast<std::int64_t>(b) * K;
        T* p = probs->data.data() + static_cast<std::int64_t>(b) * K;
        T m = l[0];
        for (int i = 1; i < K; ++i) m = std::max(m, l[i]);
        T sum(0);
        for (int i = 0; i < K; ++i) {
            p[i] = std::exp(l[i] - m);
            sum += p[i];
        }
        for (int i = 0; i < K; ++i) p[i] /= sum;
        loss += std::log(sum) - (l[labels[b]] - m);
    }
    return loss / static_cast<T>(B);
}

// d(mean xent)/dlogits scaled by `scale`, accumulated into dlogits.
template <class T>
void softmax_xent_backward(const Tensor4<T>& probs, const std::vector<int>& labels,
                           T scale, Tensor4<T>* dlogits) {
    const int B = probs.n(), K = static_cast<int>(probs.sample_size());
    const T inv = scale / static_cast<T>(B);
    for (int b = 0; b < B; ++b) {
        const T* p = probs.data.data() + static_cast<std::int64_t>(b) * K;
        T* d = dlogits->data.data() + static_cast<std::int64_t>(b) * K;
        for (int i = 0; i < K; ++i)
            d[i] += inv * (p[i] - (i == labels[b] ? T(1) : T(0)));
    }
}

// ---------------------------------------------------------------------------
// Gating modulation (iterative pass): t = alpha * (h .* g) + beta * h
// ---------------------------------------------------------------------------

template <class T>
Tensor4<T> gate_modulate_forward(const Tensor4<T>& h, const Tensor4<T>& gate,
                                 T alpha, T beta) {
    if (!h.same_shape(gate))
        throw std::invalid_argument("gate_modulate: activations " + h.shape_str() +
                                    " vs gating " + gate.shape_str());
    Tensor4<T> out(h.n(), h.c(), h.h(), h.w());
    parallel_chunks(h.numel(), [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i)
            out.data[i] = alpha * (h.data[i] * gate.data[i]) + beta * h.data[i];
    });
    return out;
}

// Gating values are constants; no gradient flows into them.
template <class T>
void gate_modulate_backward(const Tensor4<T>& gate, T alpha, T beta,
                            const Tensor4<T>& dout, Tensor4<T>* dinput) {
    parallel_chunks(gate.numel(), [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i)
            dinput->data[i] += alpha * gate.data[i] * dout.data[i] + beta * dout.data[i];
    });
}

}  // namespace sft
