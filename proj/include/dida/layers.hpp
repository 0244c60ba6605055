#pragma once

#include "dida/optim.hpp"

namespace dida {

// ---------------------------------------------------------------------------
// Convolution / upsampling graph ops (NCHW layout)
// ---------------------------------------------------------------------------

namespace detail {

struct ConvDims {
    int batch, in_ch, in_h, in_w, out_ch, k, stride, pad, out_h, out_w;
};

inline ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride) {
    if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be [B,C,H,W], got " + x.shape_str());
    if (w.rank() != 4) throw std::invalid_argument("conv2d: weight must be [OC,C,K,K], got " + w.shape_str());
    ConvDims d;
    d.batch = x.dim(0);
    d.in_ch = x.dim(1);
    d.in_h = x.dim(2);
    d.in_w = x.dim(3);
    d.out_ch = w.dim(0);
    d.k = w.dim(2);
    d.stride = stride;
    if (w.dim(1) != d.in_ch)
        throw std::invalid_argument("conv2d: channel mismatch input " + x.shape_str() + " vs weight " +
                                    w.shape_str());
    if (w.dim(3) != d.k || (d.k != 3 && d.k != 5))
        throw std::invalid_argument("conv2d: kernel must be square 3 or 5, got " + w.shape_str());
    if (stride != 1 && stride != 2)
        throw std::invalid_argument("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
    d.pad = (d.k - 1) / 2;
    d.out_h = (d.in_h + 2 * d.pad - d.k) / d.stride + 1;
    d.out_w = (d.in_w + 2 * d.pad - d.k) / d.stride + 1;
    return d;
}

// col layout: [B*OH*OW, C*K*K]
inline Tensor im2col(const Tensor& x, const ConvDims& d) {
    const int ckk = d.in_ch * d.k * d.k;
    Tensor col({d.batch * d.out_h * d.out_w, ckk});
    const float* xd = x.data();
    float* cd = col.data();
    for (int b = 0; b < d.batch; ++b) {
        for (int oh = 0; oh < d.out_h; ++oh) {
            for (int ow = 0; ow < d.out_w; ++ow) {
                float* row = cd + (static_cast<int64_t>(b) * d.out_h * d.out_w +
                                   static_cast<int64_t>(oh) * d.out_w + ow) * ckk;
                int idx = 0;
                for (int c = 0; c < d.in_ch; ++c) {
                    const float* plane = xd + (static_cast<int64_t>(b) * d.in_ch + c) * d.in_h * d.in_w;
                    for (int ki = 0; ki < d.k; ++ki) {
                        const int ih = oh * d.stride - d.pad + ki;
                        for (int kj = 0; kj < d.k; ++kj, ++idx) {
                            const int iw = ow * d.stride - d.pad + kj;
                            row[idx] = (ih >= 0 && ih < d.in_h && iw >= 0 && iw < d.in_w)
                                           ? plane[static_cast<int64_t>(ih) * d.in_w + iw]
                                           : 0.0f;
                        }
                    }
                }
            }
        }
    }
    return col;
}

inline void col2im_accumulate(const Tensor& dcol, const ConvDims& d, Tensor& dx) {
    const int ckk = d.in_ch * d.k * d.k;
    const float* cd = dcol.data();
    float* xd = dx.data();
    for (int b = 0; b < d.batch; ++b) {
        for (int oh = 0; oh < d.out_h; ++oh) {
            for (int ow = 0; ow < d.out_w; ++ow) {
                const float* row = cd + (static_cast<int64_t>(b) * d.out_h * d.out_w +
                                         static_cast<int64_t>(oh) * d.out_w + ow) * ckk;
                int idx = 0;
                for (int c = 0; c < d.in_ch; ++c) {
                    float* plane = xd + (static_cast<int64_t>(b) * d.in_ch + c) * d.in_h * d.in_w;
                    for (int ki = 0; ki < d.k; ++ki) {
                        const int ih = oh * d.stride - d.pad + ki;
                        for (int kj = 0; kj < d.k; ++kj, ++idx) {
                            const int iw = ow * d.stride - d.pad + kj;
                            if (ih >= 0 && ih < d.in_h && iw >= 0 && iw < d.in_w)
                                plane[static_cast<int64_t>(ih) * d.in_w + iw] += row[idx];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// 2-D convolution, zero padding (k-1)/2, stride 1 or 2, square kernel 3 or 5.
/// x [B,C,H,W], w [OC,C,K,K], b [OC] -> [B,OC,OH,OW].
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride) {
    const auto dims = detail::conv_dims(x.value(), w.value(), stride);
    if (b.value().size() != dims.out_ch)
        throw std::invalid_argument("conv2d: bias " + b.value().shape_str() + " vs out_ch " +
                                    std::to_string(dims.out_ch));
    const int ckk = dims.in_ch * dims.k * dims.k;
    const int opix = dims.batch * dims.out_h * dims.out_w;

    auto col = std::make_shared<Tensor>(detail::im2col(x.value(), dims));
    // out_mat [opix, OC] = col [opix, ckk] * W^T
    Tensor out_mat({opix, dims.out_ch});
    as_matrix(out_mat, opix, dims.out_ch).noalias() =
        as_matrix(*col, opix, ckk) * as_matrix(w.value(), dims.out_ch, ckk).transpose();
    Tensor out({dims.batch, dims.out_ch, dims.out_h, dims.out_w});
    const int hw = dims.out_h * dims.out_w;
    for (int bi = 0; bi < dims.batch; ++bi)
        for (int oc = 0; oc < dims.out_ch; ++oc) {
            const float bias = b.value()[oc];
            float* dst = out.data() + (static_cast<int64_t>(bi) * dims.out_ch + oc) * hw;
            const float* src = out_mat.data() + static_cast<int64_t>(bi) * hw * dims.out_ch + oc;
            for (int p = 0; p < hw; ++p) dst[p] = src[static_cast<int64_t>(p) * dims.out_ch] + bias;
        }

    return detail::make_op(std::move(out), {x, w, b}, [dims, ckk, opix, hw, col](Node& n) {
        Node& px = *n.parents[0];
        Node& pw = *n.parents[1];
        Node& pb = *n.parents[2];
        // regroup upstream grad as [opix, OC]
        Tensor gmat({opix, dims.out_ch});
        for (int bi = 0; bi < dims.batch; ++bi)
            for (int oc = 0; oc < dims.out_ch; ++oc) {
                const float* src = n.grad.data() + (static_cast<int64_t>(bi) * dims.out_ch + oc) * hw;
                float* dst = gmat.data() + static_cast<int64_t>(bi) * hw * dims.out_ch + oc;
                for (int p = 0; p < hw; ++p) dst[static_cast<int64_t>(p) * dims.out_ch] = src[p];
            }
        auto G = as_matrix(gmat, opix, dims.out_ch);
        if (pw.requires_grad) {
            pw.ensure_grad();
            as_matrix(pw.grad, dims.out_ch, ckk).noalias() += G.transpose() * as_matrix(*col, opix, ckk);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            Eigen::VectorXf cs = G.colwise().sum();
            for (int oc = 0; oc < dims.out_ch; ++oc) pb.grad[oc] += cs[oc];
        }
        if (px.requires_grad) {
            px.ensure_grad();
            Tensor dcol({opix, ckk});
            as_matrix(dcol, opix, ckk).noalias() = G * as_matrix(pw.value, dims.out_ch, ckk);
            detail::col2im_accumulate(dcol, dims, px.grad);
        }
    });
}

/// Nearest-neighbour 2x upsampling; backward sum-pools the 2x2 block.
inline Var upsample2x(const Var& x) {
    if (x.value().rank() != 4)
        throw std::invalid_argument("upsample2x: input must be [B,C,H,W], got " + x.value().shape_str());
    const int b = x.value().dim(0), c = x.value().dim(1), h = x.value().dim(2), w = x.value().dim(3);
    Tensor out({b, c, 2 * h, 2 * w});
    const float* xd = x.value().data();
    float* od = out.data();
    for (int64_t bc = 0; bc < static_cast<int64_t>(b) * c; ++bc) {
        const float* in_plane = xd + bc * h * w;
        float* out_plane = od + bc * 4 * h * w;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const float v = in_plane[static_cast<int64_t>(i) * w + j];
                float* o = out_plane + static_cast<int64_t>(2 * i) * 2 * w + 2 * j;
                o[0] = v;
                o[1] = v;
                o[2 * w] = v;
                o[2 * w + 1] = v;
            }
    }
    return detail::make_op(std::move(out), {x}, [b, c, h, w](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        const float* gd = n.grad.data();
        float* pd = p.grad.data();
        for (int64_t bc = 0; bc < static_cast<int64_t>(b) * c; ++bc) {
            const float* g_plane = gd + bc * 4 * h * w;
            float* p_plane = pd + bc * h * w;
            for (int i = 0; i < h; ++i)
                for (int j = 0; j < w; ++j) {
                    const float* g = g_plane + static_cast<int64_t>(2 * i) * 2 * w + 2 * j;
                    p_plane[static_cast<int64_t>(i) * w + j] += g[0] + g[1] + g[2 * w] + g[2 * w + 1];
                }
        }
    });
}

// ---------------------------------------------------------------------------
// Layer functors
// ---------------------------------------------------------------------------

/// Weights: truncated normal, std 0.02. Biases: zero.
inline Tensor init_weights(std::vector<int> shape, Rng& rng, float stddev = 0.02f) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.truncated_normal(stddev);
    return t;
}

struct DenseLayer {
    Parameter w;  // [in, out]
    Parameter b;  // [out]
    int in = 0, out = 0;

    static DenseLayer make(const std::string& name, int in, int out, Rng& rng) {
        DenseLayer l;
        l.in = in;
        l.out = out;
        l.w = Parameter(name + ".w", init_weights({in, out}, rng));
        l.b = Parameter(name + ".b", Tensor({out}));
        return l;
    }

    Var operator()(const Var& x) const {
        if (x.value().cols() != in)
            throw std::invalid_argument("dense '" + w.name + "': input " + x.value().shape_str() +
                                        " vs expected cols " + std::to_string(in));
        return add_rowvec(matmul(x, w.var), b.var);
    }

    std::vector<Parameter*> params() { return {&w, &b}; }
};

struct Conv2dLayer {
    Parameter w;  // [OC, C, K, K]
    Parameter b;  // [OC]
    int in_ch = 0, out_ch = 0, k = 3, stride = 1;

    static Conv2dLayer make(const std::string& name, int in_ch, int out_ch, int k, int stride, Rng& rng) {
        Conv2dLayer l;
        l.in_ch = in_ch;
        l.out_ch = out_ch;
        l.k = k;
        l.stride = stride;
        l.w = Parameter(name + ".w", init_weights({out_ch, in_ch, k, k}, rng));
        l.b = Parameter(name + ".b", Tensor({out_ch}));
        return l;
    }

    Var operator()(const Var& x) const { return conv2d(x, w.var, b.var, stride); }

    std::vector<Parameter*> params() { return {&w, &b}; }
};

}  // namespace dida
