#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pgnas/errors.hpp"
#include "pgnas/tensor.hpp"

// Raw forward/backward kernels. The autodiff graph and the no-grad
// evaluation paths both call these, so a masked forward and a pruned forward
// reduce values in the same order.
namespace pgnas::nn {

// y = x W + b, x:[B x I], W:[I x O], b:[O].
inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1) {
        throw ShapeError("dense expects x[BxI], W[IxO], b[O]; got x" + x.shape_str() + " W" +
                         w.shape_str() + " b" + b.shape_str());
    }
    if (x.dim(1) != w.dim(0) || w.dim(1) != b.dim(0)) {
        throw ShapeError("dense shape mismatch: x" + x.shape_str() + " vs W" + w.shape_str() +
                         " vs b" + b.shape_str());
    }
    const int bsz = x.dim(0), in = x.dim(1), out = w.dim(1);
    Tensor y({bsz, out});
    for (int r = 0; r < bsz; ++r) {
        for (int o = 0; o < out; ++o) {
            double acc = b[static_cast<size_t>(o)];
            for (int i = 0; i < in; ++i) acc += x.at(r, i) * w.at(i, o);
            y.at(r, o) = acc;
        }
    }
    return y;
}

inline void dense_backward(const Tensor& x, const Tensor& w, const Tensor& gy, Tensor* gx,
                           Tensor* gw, Tensor* gb) {
    const int bsz = x.dim(0), in = x.dim(1), out = w.dim(1);
    for (int r = 0; r < bsz; ++r) {
        for (int o = 0; o < out; ++o) {
            const double g = gy.at(r, o);
            if (gb) (*gb)[static_cast<size_t>(o)] += g;
            for (int i = 0; i < in; ++i) {
                if (gx) gx->at(r, i) += g * w.at(i, o);
                if (gw) gw->at(i, o) += g * x.at(r, i);
            }
        }
    }
}

inline int conv_out_dim(int in, int s, int stride, int pad) {
    return (in + 2 * pad - s) / stride + 1;
}

// Cross-correlation (no kernel flip). x:[B x K x H x W], kernel:[K x C x s x s]
// (input channel leading, so kernel row k is the slice gated by one mask bit),
// output [B x C x H' x W'].
inline Tensor conv2d_forward(const Tensor& x, const Tensor& k, int stride, int pad) {
    if (x.rank() != 4 || k.rank() != 4) {
        throw ShapeError("conv2d expects x[BxKxHxW], kernel[KxCxsxs]; got x" + x.shape_str() +
                         " kernel" + k.shape_str());
    }
    if (x.dim(1) != k.dim(0)) {
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(x.dim(1)) +
                         " channels, kernel expects " + std::to_string(k.dim(0)));
    }
    if (k.dim(2) != k.dim(3)) {
        throw ShapeError("conv2d kernel must be square, got " + k.shape_str());
    }
    if (stride <= 0) throw ShapeError("conv2d stride must be positive, got " + std::to_string(stride));
    const int bsz = x.dim(0), kc = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oc = k.dim(1), s = k.dim(2);
    const int oh = conv_out_dim(h, s, stride, pad);
    const int ow = conv_out_dim(w, s, stride, pad);
    if (oh <= 0 || ow <= 0) {
        throw ShapeError("conv2d produces empty output for x" + x.shape_str() + " kernel" +
                         k.shape_str());
    }
    Tensor y({bsz, oc, oh, ow});
    for (int b = 0; b < bsz; ++b) {
        for (int ic = 0; ic < kc; ++ic) {
            for (int c = 0; c < oc; ++c) {
                for (int i = 0; i < s; ++i) {
                    for (int j = 0; j < s; ++j) {
                        const double kv = k.at(ic, c, i, j);
                        if (kv == 0.0) continue;
                        for (int p = 0; p < oh; ++p) {
                            const int ih = p * stride + i - pad;
                            if (ih < 0 || ih >= h) continue;
                            for (int q = 0; q < ow; ++q) {
                                const int iw = q * stride + j - pad;
                                if (iw < 0 || iw >= w) continue;
                                y.at(b, c, p, q) += x.at(b, ic, ih, iw) * kv;
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

inline void conv2d_backward(const Tensor& x, const Tensor& k, int stride, int pad,
                            const Tensor& gy, Tensor* gx, Tensor* gk) {
    const int bsz = x.dim(0), kc = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oc = k.dim(1), s = k.dim(2);
    const int oh = gy.dim(2), ow = gy.dim(3);
    for (int b = 0; b < bsz; ++b) {
        for (int ic = 0; ic < kc; ++ic) {
            for (int c = 0; c < oc; ++c) {
                for (int i = 0; i < s; ++i) {
                    for (int j = 0; j < s; ++j) {
                        const double kv = k.at(ic, c, i, j);
                        double gkv = 0.0;
                        for (int p = 0; p < oh; ++p) {
                            const int ih = p * stride + i - pad;
                            if (ih < 0 || ih >= h) continue;
                            for (int q = 0; q < ow; ++q) {
                                const int iw = q * stride + j - pad;
                                if (iw < 0 || iw >= w) continue;
                                const double g = gy.at(b, c, p, q);
                                gkv += g * x.at(b, ic, ih, iw);
                                if (gx) gx->at(b, ic, ih, iw) += g * kv;
                            }
                        }
                        if (gk) gk->at(ic, c, i, j) += gkv;
                    }
                }
            }
        }
    }
}

// Elementwise product with a mask whose shape is a leading prefix of x's
// shape; each mask entry scales one contiguous block of x.
inline Tensor mask_mul_forward(const Tensor& x, const Tensor& mask) {
    const auto& xs = x.shape();
    const auto& ms = mask.shape();
    if (ms.size() > xs.size() || !std::equal(ms.begin(), ms.end(), xs.begin())) {
        throw ShapeError("mask shape " + mask.shape_str() + " is not a leading prefix of x " +
                         x.shape_str());
    }
    const size_t block = x.numel() / mask.numel();
    Tensor y = x;
    for (size_t m = 0; m < mask.numel(); ++m) {
        const double mv = mask[m];
        double* yp = y.data() + m * block;
        for (size_t i = 0; i < block; ++i) yp[i] *= mv;
    }
    return y;
}

inline void mask_mul_backward(const Tensor& x, const Tensor& mask, const Tensor& gy, Tensor* gx,
                              Tensor* gmask) {
    const size_t block = x.numel() / mask.numel();
    for (size_t m = 0; m < mask.numel(); ++m) {
        const double mv = mask[m];
        const double* xp = x.data() + m * block;
        const double* gp = gy.data() + m * block;
        double acc = 0.0;
        for (size_t i = 0; i < block; ++i) {
            if (gx) (*gx)[m * block + i] += gp[i] * mv;
            acc += gp[i] * xp[i];
        }
        if (gmask) (*gmask)[m] += acc;
    }
}

inline Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
    return y;
}

// Subgradient at 0 is 0.
inline void relu_backward(const Tensor& x, const Tensor& gy, Tensor* gx) {
    for (size_t i = 0; i < x.numel(); ++i) {
        if (x[i] > 0.0) (*gx)[i] += gy[i];
    }
}

// [B x C x H x W] -> [B x C], mean over the spatial extent.
inline Tensor global_avg_pool_forward(const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("global_avg_pool expects rank-4 input, got " + x.shape_str());
    const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    Tensor y({bsz, c});
    for (int b = 0; b < bsz; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) acc += x.at(b, ch, i, j);
            y.at(b, ch) = acc * inv;
        }
    }
    return y;
}

inline void global_avg_pool_backward(const Tensor& x, const Tensor& gy, Tensor* gx) {
    const int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int b = 0; b < bsz; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const double g = gy.at(b, ch) * inv;
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) gx->at(b, ch, i, j) += g;
        }
    }
}

// Row-wise log-softmax probabilities, shared by the loss and its gradient.
inline void softmax_rows(const Tensor& logits, Tensor& probs) {
    const int bsz = logits.dim(0), c = logits.dim(1);
    for (int b = 0; b < bsz; ++b) {
        double mx = logits.at(b, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(b, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(logits.at(b, j) - mx);
        for (int j = 0; j < c; ++j) probs.at(b, j) = std::exp(logits.at(b, j) - mx) / z;
    }
}

// Mean over the batch of -log softmax(logits)[label].
inline double softmax_cross_entropy_forward(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("cross entropy expects logits[BxC], got " + logits.shape_str());
    const int bsz = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(labels.size()) != bsz) {
        throw ShapeError("label count " + std::to_string(labels.size()) + " does not match batch " +
                         std::to_string(bsz));
    }
    double loss = 0.0;
    for (int b = 0; b < bsz; ++b) {
        const int y = labels[static_cast<size_t>(b)];
        if (y < 0 || y >= c) {
            throw DataError("label " + std::to_string(y) + " out of range for " + std::to_string(c) +
                            " classes");
        }
        double mx = logits.at(b, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(b, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(logits.at(b, j) - mx);
        loss += -(logits.at(b, y) - mx - std::log(z));
    }
    return loss / bsz;
}

inline void softmax_cross_entropy_backward(const Tensor& logits, const std::vector<int>& labels,
                                           double gloss, Tensor* glogits) {
    const int bsz = logits.dim(0), c = logits.dim(1);
    Tensor probs({bsz, c});
    softmax_rows(logits, probs);
    const double scale = gloss / bsz;
    for (int b = 0; b < bsz; ++b) {
        for (int j = 0; j < c; ++j) {
            const double ind = (j == labels[static_cast<size_t>(b)]) ? 1.0 : 0.0;
            glogits->at(b, j) += scale * (probs.at(b, j) - ind);
        }
    }
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

}  // namespace pgnas::nn
