#include "dwp/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dwp {

namespace {

using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

// Cap on im2col buffer entries per chunk (~16 MB of doubles).
constexpr int64_t kMaxColElems = int64_t(1) << 21;

struct ConvDims {
    int64_t n, c, d, h, w;      // input
    int64_t f, od, oh, ow, p;   // output; p = od*oh*ow
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Conv3dSpec& sp) {
    if (x.ndim() != 5 || w.ndim() != 5) throw std::invalid_argument("conv3d: expected 5-d tensors");
    if (x.dim(1) != w.dim(1))
        throw std::invalid_argument("conv3d: channel mismatch " + shape_str(x) + " vs " + shape_str(w));
    if (w.dim(2) != sp.k || w.dim(3) != sp.k || w.dim(4) != sp.k)
        throw std::invalid_argument("conv3d: weight kernel size mismatch");
    ConvDims cd;
    cd.n = x.dim(0); cd.c = x.dim(1); cd.d = x.dim(2); cd.h = x.dim(3); cd.w = x.dim(4);
    cd.f = w.dim(0);
    cd.od = sp.out_size(cd.d); cd.oh = sp.out_size(cd.h); cd.ow = sp.out_size(cd.w);
    if (cd.od < 1 || cd.oh < 1 || cd.ow < 1)
        throw std::invalid_argument("conv3d: input too small for kernel " + shape_str(x));
    cd.p = cd.od * cd.oh * cd.ow;
    return cd;
}

// Gather one chunk of output positions [p0, p1) into cols [p1-p0, C*k^3].
void im2col_chunk(const real* x, const ConvDims& cd, const Conv3dSpec& sp, int64_t p0, int64_t p1,
                  real* cols) {
    const int k = sp.k, s = sp.stride, pad = sp.pad;
    const int64_t hw = cd.h * cd.w;
    const int64_t taps = int64_t(k) * k * k;
    const int64_t row_len = cd.c * taps;
    for (int64_t pos = p0; pos < p1; ++pos) {
        const int64_t ow_i = pos % cd.ow;
        const int64_t oh_i = (pos / cd.ow) % cd.oh;
        const int64_t od_i = pos / (cd.ow * cd.oh);
        const int64_t id0 = od_i * s - pad, ih0 = oh_i * s - pad, iw0 = ow_i * s - pad;
        real* row = cols + (pos - p0) * row_len;
        for (int64_t c = 0; c < cd.c; ++c) {
            const real* xc = x + c * cd.d * hw;
            real* rc = row + c * taps;
            int64_t t = 0;
            for (int td = 0; td < k; ++td) {
                const int64_t id = id0 + td;
                for (int th = 0; th < k; ++th) {
                    const int64_t ih = ih0 + th;
                    for (int tw = 0; tw < k; ++tw, ++t) {
                        const int64_t iw = iw0 + tw;
                        rc[t] = (id >= 0 && id < cd.d && ih >= 0 && ih < cd.h && iw >= 0 && iw < cd.w)
                                    ? xc[id * hw + ih * cd.w + iw]
                                    : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-add cols back into the input gradient.
void col2im_chunk(const real* cols, const ConvDims& cd, const Conv3dSpec& sp, int64_t p0, int64_t p1,
                  real* gx) {
    const int k = sp.k, s = sp.stride, pad = sp.pad;
    const int64_t hw = cd.h * cd.w;
    const int64_t taps = int64_t(k) * k * k;
    const int64_t row_len = cd.c * taps;
    for (int64_t pos = p0; pos < p1; ++pos) {
        const int64_t ow_i = pos % cd.ow;
        const int64_t oh_i = (pos / cd.ow) % cd.oh;
        const int64_t od_i = pos / (cd.ow * cd.oh);
        const int64_t id0 = od_i * s - pad, ih0 = oh_i * s - pad, iw0 = ow_i * s - pad;
        const real* row = cols + (pos - p0) * row_len;
        for (int64_t c = 0; c < cd.c; ++c) {
            real* xc = gx + c * cd.d * hw;
            const real* rc = row + c * taps;
            int64_t t = 0;
            for (int td = 0; td < k; ++td) {
                const int64_t id = id0 + td;
                for (int th = 0; th < k; ++th) {
                    const int64_t ih = ih0 + th;
                    for (int tw = 0; tw < k; ++tw, ++t) {
                        const int64_t iw = iw0 + tw;
                        if (id >= 0 && id < cd.d && ih >= 0 && ih < cd.h && iw >= 0 && iw < cd.w)
                            xc[id * hw + ih * cd.w + iw] += rc[t];
                    }
                }
            }
        }
    }
}

bool is_pointwise(const Conv3dSpec& sp) { return sp.k == 1 && sp.stride == 1 && sp.pad == 0; }

// k3/pad1 convolution on a 1x1x1 spatial input touches only the center tap
bool is_center_only(const ConvDims& cd, const Conv3dSpec& sp) {
    return sp.k == 3 && sp.stride == 1 && sp.pad == 1 && cd.d == 1 && cd.h == 1 && cd.w == 1;
}

Tensor center_tap(const Tensor& w, int64_t f, int64_t c) {
    Tensor wc({f, c, 1, 1, 1});
    for (int64_t i = 0; i < f * c; ++i) wc[i] = w[i * 27 + 13];
    return wc;
}

}  // namespace

Tensor conv3d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, const Conv3dSpec& sp) {
    const ConvDims cd = conv_dims(x, w, sp);
    if (is_center_only(cd, sp))
        return conv3d_forward(x, center_tap(w, cd.f, cd.c), bias, Conv3dSpec{1, 1, 0});
    Tensor y({cd.n, cd.f, cd.od, cd.oh, cd.ow});
    MapC wm(w.data(), cd.f, w.numel() / cd.f);

    if (is_pointwise(sp)) {
        for (int64_t n = 0; n < cd.n; ++n) {
            MapC xm(x.data() + n * cd.c * cd.p, cd.c, cd.p);
            MapM ym(y.data() + n * cd.f * cd.p, cd.f, cd.p);
            ym.noalias() = wm * xm;
        }
    } else {
        const int64_t row_len = wm.cols();
        const int64_t chunk = std::max<int64_t>(1, kMaxColElems / row_len);
        std::vector<real> cols(static_cast<size_t>(std::min(chunk, cd.p) * row_len));
        for (int64_t n = 0; n < cd.n; ++n) {
            const real* xn = x.data() + n * cd.c * cd.d * cd.h * cd.w;
            real* yn = y.data() + n * cd.f * cd.p;
            for (int64_t p0 = 0; p0 < cd.p; p0 += chunk) {
                const int64_t p1 = std::min(cd.p, p0 + chunk);
                im2col_chunk(xn, cd, sp, p0, p1, cols.data());
                MapC cm(cols.data(), p1 - p0, row_len);
                // y[f, p] = W[f, :] . cols[p, :]
                Eigen::Map<MatRM, 0, Eigen::OuterStride<>> ym(yn + p0, cd.f, p1 - p0,
                                                              Eigen::OuterStride<>(cd.p));
                ym.noalias() = wm * cm.transpose();
            }
        }
    }
    if (bias) {
        for (int64_t n = 0; n < cd.n; ++n)
            for (int64_t f = 0; f < cd.f; ++f) {
                real b = (*bias)[f];
                real* yp = y.data() + (n * cd.f + f) * cd.p;
                for (int64_t p = 0; p < cd.p; ++p) yp[p] += b;
            }
    }
    return y;
}

void conv3d_backward(const Tensor& x, const Tensor& w, const Conv3dSpec& sp, const Tensor& grad_y,
                     Tensor* grad_x, Tensor* grad_w, Tensor* grad_b) {
    const ConvDims cd = conv_dims(x, w, sp);
    if (grad_y.dim(0) != cd.n || grad_y.dim(1) != cd.f || grad_y.dim(2) != cd.od ||
        grad_y.dim(3) != cd.oh || grad_y.dim(4) != cd.ow)
        throw std::invalid_argument("conv3d_backward: grad shape mismatch");
    if (is_center_only(cd, sp)) {
        // only the center tap sees data; route through the pointwise path
        Tensor wc = center_tap(w, cd.f, cd.c);
        Tensor gwc;
        if (grad_w) gwc = Tensor(wc.dims);
        conv3d_backward(x, wc, Conv3dSpec{1, 1, 0}, grad_y, grad_x, grad_w ? &gwc : nullptr,
                        grad_b);
        if (grad_w)
            for (int64_t i = 0; i < cd.f * cd.c; ++i) (*grad_w)[i * 27 + 13] += gwc[i];
        return;
    }
    MapC wm(w.data(), cd.f, w.numel() / cd.f);

    if (grad_b) {
        for (int64_t n = 0; n < cd.n; ++n)
            for (int64_t f = 0; f < cd.f; ++f) {
                const real* gp = grad_y.data() + (n * cd.f + f) * cd.p;
                real acc = 0.0;
                for (int64_t p = 0; p < cd.p; ++p) acc += gp[p];
                (*grad_b)[f] += acc;
            }
    }

    if (is_pointwise(sp)) {
        for (int64_t n = 0; n < cd.n; ++n) {
            MapC xm(x.data() + n * cd.c * cd.p, cd.c, cd.p);
            MapC gm(grad_y.data() + n * cd.f * cd.p, cd.f, cd.p);
            if (grad_w) {
                MapM gwm(grad_w->data(), cd.f, cd.c);
                gwm.noalias() += gm * xm.transpose();
            }
            if (grad_x) {
                MapM gxm(grad_x->data() + n * cd.c * cd.p, cd.c, cd.p);
                gxm.noalias() += wm.transpose() * gm;
            }
        }
        return;
    }

    const int64_t row_len = wm.cols();
    const int64_t chunk = std::max<int64_t>(1, kMaxColElems / row_len);
    std::vector<real> cols(static_cast<size_t>(std::min(chunk, cd.p) * row_len));
    for (int64_t n = 0; n < cd.n; ++n) {
        const real* xn = x.data() + n * cd.c * cd.d * cd.h * cd.w;
        const real* gn = grad_y.data() + n * cd.f * cd.p;
        for (int64_t p0 = 0; p0 < cd.p; p0 += chunk) {
            const int64_t p1 = std::min(cd.p, p0 + chunk);
            Eigen::Map<const MatRM, 0, Eigen::OuterStride<>> gm(gn + p0, cd.f, p1 - p0,
                                                                Eigen::OuterStride<>(cd.p));
            if (grad_w) {
                im2col_chunk(xn, cd, sp, p0, p1, cols.data());
                MapC cm(cols.data(), p1 - p0, row_len);
                MapM gwm(grad_w->data(), cd.f, row_len);
                gwm.noalias() += gm * cm;
            }
            if (grad_x) {
                MapM cm(cols.data(), p1 - p0, row_len);
                cm.noalias() = gm.transpose() * wm;
                col2im_chunk(cols.data(), cd, sp, p0, p1,
                             grad_x->data() + n * cd.c * cd.d * cd.h * cd.w);
            }
        }
    }
}

namespace {

// Transposed conv (stride 1, pad 0) realized as a correlation with the
// spatially flipped kernel on an input padded by k-1.
Tensor flip_swap(const Tensor& w, int k) {
    // [C, F, k, k, k] -> [F, C, k, k, k] flipped
    const int64_t c = w.dim(0), f = w.dim(1);
    Tensor out({f, c, k, k, k});
    const int64_t taps = int64_t(k) * k * k;
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t fi = 0; fi < f; ++fi)
            for (int64_t t = 0; t < taps; ++t)
                out[(fi * c + ci) * taps + (taps - 1 - t)] = w[(ci * f + fi) * taps + t];
    return out;
}

Tensor unflip_swap(const Tensor& w, int k, int64_t c, int64_t f) {
    Tensor out({c, f, k, k, k});
    const int64_t taps = int64_t(k) * k * k;
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t fi = 0; fi < f; ++fi)
            for (int64_t t = 0; t < taps; ++t)
                out[(ci * f + fi) * taps + t] = w[(fi * c + ci) * taps + (taps - 1 - t)];
    return out;
}

}  // namespace

namespace {

// 1x1x1 spatial input: the transposed conv is one GEMM against the weight's
// natural [c_in, f*k^3] layout
bool tconv_is_flat(const Tensor& x) { return x.dim(2) == 1 && x.dim(3) == 1 && x.dim(4) == 1; }

}  // namespace

Tensor conv_transpose3d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, int k) {
    if (w.ndim() != 5 || x.ndim() != 5) throw std::invalid_argument("conv_transpose3d: expected 5-d tensors");
    if (x.dim(1) != w.dim(0)) throw std::invalid_argument("conv_transpose3d: channel mismatch");
    if (tconv_is_flat(x)) {
        const int64_t n = x.dim(0), c = x.dim(1), f = w.dim(1);
        const int64_t taps = int64_t(k) * k * k;
        Tensor y({n, f, k, k, k});
        MapC xm(x.data(), n, c);
        MapC wm(w.data(), c, f * taps);
        MapM ym(y.data(), n, f * taps);
        ym.noalias() = xm * wm;
        if (bias)
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < f; ++j)
                    for (int64_t t = 0; t < taps; ++t) y[(i * f + j) * taps + t] += (*bias)[j];
        return y;
    }
    Tensor wf = flip_swap(w, k);
    Conv3dSpec sp{k, 1, k - 1};
    return conv3d_forward(x, wf, bias, sp);
}

void conv_transpose3d_backward(const Tensor& x, const Tensor& w, int k, const Tensor& grad_y,
                               Tensor* grad_x, Tensor* grad_w, Tensor* grad_b) {
    if (tconv_is_flat(x)) {
        const int64_t n = x.dim(0), c = x.dim(1), f = w.dim(1);
        const int64_t taps = int64_t(k) * k * k;
        MapC xm(x.data(), n, c);
        MapC wm(w.data(), c, f * taps);
        MapC gm(grad_y.data(), n, f * taps);
        if (grad_b)
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < f; ++j)
                    for (int64_t t = 0; t < taps; ++t) (*grad_b)[j] += grad_y[(i * f + j) * taps + t];
        if (grad_w) {
            MapM gwm(grad_w->data(), c, f * taps);
            gwm.noalias() += xm.transpose() * gm;
        }
        if (grad_x) {
            MapM gxm(grad_x->data(), n, c);
            gxm.noalias() += gm * wm.transpose();
        }
        return;
    }
    Tensor wf = flip_swap(w, k);
    Conv3dSpec sp{k, 1, k - 1};
    Tensor gwf;
    if (grad_w) gwf = Tensor(wf.dims);
    conv3d_backward(x, wf, sp, grad_y, grad_x, grad_w ? &gwf : nullptr, grad_b);
    if (grad_w) add_inplace(*grad_w, unflip_swap(gwf, k, w.dim(0), w.dim(1)));
}

Tensor instance_norm_forward(const Tensor& x, real eps, InstanceNormCtx* ctx) {
    if (x.ndim() != 5) throw std::invalid_argument("instance_norm: expected 5-d tensor");
    const int64_t n = x.dim(0), c = x.dim(1);
    const int64_t sp = x.dim(2) * x.dim(3) * x.dim(4);
    Tensor y(x.dims);
    Tensor inv_std({n, c});
    for (int64_t i = 0; i < n * c; ++i) {
        const real* xp = x.data() + i * sp;
        real mean = 0.0;
        for (int64_t j = 0; j < sp; ++j) mean += xp[j];
        mean /= static_cast<real>(sp);
        real var = 0.0;
        for (int64_t j = 0; j < sp; ++j) {
            real d = xp[j] - mean;
            var += d * d;
        }
        var /= static_cast<real>(sp);
        const real is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        real* yp = y.data() + i * sp;
        for (int64_t j = 0; j < sp; ++j) yp[j] = (xp[j] - mean) * is;
    }
    if (ctx) {
        ctx->xhat = y;
        ctx->inv_std = std::move(inv_std);
    }
    return y;
}

Tensor instance_norm_backward(const InstanceNormCtx& ctx, const Tensor& grad_y) {
    const Tensor& xhat = ctx.xhat;
    check_same_shape(xhat, grad_y, "instance_norm_backward");
    const int64_t n = xhat.dim(0), c = xhat.dim(1);
    const int64_t sp = xhat.dim(2) * xhat.dim(3) * xhat.dim(4);
    Tensor gx(xhat.dims);
    for (int64_t i = 0; i < n * c; ++i) {
        const real* xh = xhat.data() + i * sp;
        const real* g = grad_y.data() + i * sp;
        real mean_g = 0.0, mean_gx = 0.0;
        for (int64_t j = 0; j < sp; ++j) {
            mean_g += g[j];
            mean_gx += g[j] * xh[j];
        }
        mean_g /= static_cast<real>(sp);
        mean_gx /= static_cast<real>(sp);
        const real is = ctx.inv_std[i];
        real* o = gx.data() + i * sp;
        for (int64_t j = 0; j < sp; ++j) o[j] = is * (g[j] - mean_g - xh[j] * mean_gx);
    }
    return gx;
}

Tensor relu_forward(const Tensor& x) {
    Tensor y(x.dims);
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& grad_y) {
    Tensor gx(y.dims);
    for (int64_t i = 0; i < y.numel(); ++i) gx[i] = y[i] > 0.0 ? grad_y[i] : 0.0;
    return gx;
}

Tensor elu_forward(const Tensor& x) {
    Tensor y(x.dims);
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0 ? x[i] : std::expm1(x[i]);
    return y;
}

Tensor elu_backward(const Tensor& y, const Tensor& grad_y) {
    Tensor gx(y.dims);
    for (int64_t i = 0; i < y.numel(); ++i) gx[i] = grad_y[i] * (y[i] > 0.0 ? 1.0 : y[i] + 1.0);
    return gx;
}

Tensor tanh_forward(const Tensor& x) {
    Tensor y(x.dims);
    for (int64_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
    return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& grad_y) {
    Tensor gx(y.dims);
    for (int64_t i = 0; i < y.numel(); ++i) gx[i] = grad_y[i] * (1.0 - y[i] * y[i]);
    return gx;
}

Tensor maxpool3d_forward(const Tensor& x, MaxPoolCtx* ctx) {
    if (x.ndim() != 5) throw std::invalid_argument("maxpool3d: expected 5-d tensor");
    const int64_t n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
    const int64_t od = (d + 1) / 2, oh = (h + 1) / 2, ow = (w + 1) / 2;
    Tensor y({n, c, od, oh, ow});
    Tensor arg({n, c, od, oh, ow});
    const int64_t hw = h * w;
    int64_t oi = 0;
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const real* xp = x.data() + nc * d * hw;
        for (int64_t zd = 0; zd < od; ++zd)
            for (int64_t zh = 0; zh < oh; ++zh)
                for (int64_t zw = 0; zw < ow; ++zw, ++oi) {
                    real best = -1e300;
                    int64_t best_i = -1;
                    for (int64_t id = 2 * zd; id < std::min<int64_t>(2 * zd + 2, d); ++id)
                        for (int64_t ih = 2 * zh; ih < std::min<int64_t>(2 * zh + 2, h); ++ih)
                            for (int64_t iw = 2 * zw; iw < std::min<int64_t>(2 * zw + 2, w); ++iw) {
                                int64_t idx = id * hw + ih * w + iw;
                                if (xp[idx] > best) {
                                    best = xp[idx];
                                    best_i = nc * d * hw + idx;
                                }
                            }
                    y[oi] = best;
                    arg[oi] = static_cast<real>(best_i);
                }
    }
    if (ctx) {
        ctx->argmax = std::move(arg);
        ctx->in_dims = x.dims;
    }
    return y;
}

Tensor maxpool3d_backward(const MaxPoolCtx& ctx, const Tensor& grad_y) {
    Tensor gx(ctx.in_dims);
    for (int64_t i = 0; i < grad_y.numel(); ++i)
        gx[static_cast<int64_t>(ctx.argmax[i])] += grad_y[i];
    return gx;
}

namespace {

struct LerpAxis {
    std::vector<int64_t> i0, i1;
    std::vector<real> t;
};

LerpAxis lerp_axis(int64_t out_n, int64_t in_n) {
    LerpAxis a;
    a.i0.resize(static_cast<size_t>(out_n));
    a.i1.resize(static_cast<size_t>(out_n));
    a.t.resize(static_cast<size_t>(out_n));
    for (int64_t o = 0; o < out_n; ++o) {
        real src = (static_cast<real>(o) + 0.5) / 2.0 - 0.5;
        if (src < 0.0) src = 0.0;
        int64_t lo = static_cast<int64_t>(std::floor(src));
        if (lo > in_n - 1) lo = in_n - 1;
        int64_t hi = std::min(lo + 1, in_n - 1);
        a.i0[static_cast<size_t>(o)] = lo;
        a.i1[static_cast<size_t>(o)] = hi;
        a.t[static_cast<size_t>(o)] = src - static_cast<real>(lo);
    }
    return a;
}

}  // namespace

Tensor upsample_trilinear2x_forward(const Tensor& x) {
    if (x.ndim() != 5) throw std::invalid_argument("upsample: expected 5-d tensor");
    const int64_t n = x.dim(0), c = x.dim(1), d = x.dim(2), h = x.dim(3), w = x.dim(4);
    const int64_t od = 2 * d, oh = 2 * h, ow = 2 * w;
    Tensor y({n, c, od, oh, ow});
    LerpAxis ad = lerp_axis(od, d), ah = lerp_axis(oh, h), aw = lerp_axis(ow, w);
    const int64_t hw = h * w;
    int64_t oi = 0;
    for (int64_t nc = 0; nc < n * c; ++nc) {
        const real* xp = x.data() + nc * d * hw;
        for (int64_t zd = 0; zd < od; ++zd) {
            const real td = ad.t[zd];
            const int64_t d0 = ad.i0[zd] * hw, d1 = ad.i1[zd] * hw;
            for (int64_t zh = 0; zh < oh; ++zh) {
                const real th = ah.t[zh];
                const int64_t h0 = ah.i0[zh] * w, h1 = ah.i1[zh] * w;
                for (int64_t zw = 0; zw < ow; ++zw, ++oi) {
                    const real tw = aw.t[zw];
                    const int64_t w0 = aw.i0[zw], w1 = aw.i1[zw];
                    const real v000 = xp[d0 + h0 + w0], v001 = xp[d0 + h0 + w1];
                    const real v010 = xp[d0 + h1 + w0], v011 = xp[d0 + h1 + w1];
                    const real v100 = xp[d1 + h0 + w0], v101 = xp[d1 + h0 + w1];
                    const real v110 = xp[d1 + h1 + w0], v111 = xp[d1 + h1 + w1];
                    const real c00 = v000 + (v001 - v000) * tw;
                    const real c01 = v010 + (v011 - v010) * tw;
                    const real c10 = v100 + (v101 - v100) * tw;
                    const real c11 = v110 + (v111 - v110) * tw;
                    const real c0 = c00 + (c01 - c00) * th;
                    const real c1 = c10 + (c11 - c10) * th;
                    y[oi] = c0 + (c1 - c0) * td;
                }
            }
        }
    }
    return y;
}

Tensor upsample_trilinear2x_backward(const std::vector<int64_t>& in_dims, const Tensor& grad_y) {
    const int64_t n = in_dims[0], c = in_dims[1], d = in_dims[2], h = in_dims[3], w = in_dims[4];
    const int64_t od = 2 * d, oh = 2 * h, ow = 2 * w;
    Tensor gx(in_dims);
    LerpAxis ad = lerp_axis(od, d), ah = lerp_axis(oh, h), aw = lerp_axis(ow, w);
    const int64_t hw = h * w;
    int64_t oi = 0;
    for (int64_t nc = 0; nc < n * c; ++nc) {
        real* xp = gx.data() + nc * d * hw;
        for (int64_t zd = 0; zd < od; ++zd) {
            const real td = ad.t[zd];
            const int64_t d0 = ad.i0[zd] * hw, d1 = ad.i1[zd] * hw;
            for (int64_t zh = 0; zh < oh; ++zh) {
                const real th = ah.t[zh];
                const int64_t h0 = ah.i0[zh] * w, h1 = ah.i1[zh] * w;
                for (int64_t zw = 0; zw < ow; ++zw, ++oi) {
                    const real tw = aw.t[zw];
                    const int64_t w0 = aw.i0[zw], w1 = aw.i1[zw];
                    const real g = grad_y[oi];
                    xp[d0 + h0 + w0] += g * (1 - td) * (1 - th) * (1 - tw);
                    xp[d0 + h0 + w1] += g * (1 - td) * (1 - th) * tw;
                    xp[d0 + h1 + w0] += g * (1 - td) * th * (1 - tw);
                    xp[d0 + h1 + w1] += g * (1 - td) * th * tw;
                    xp[d1 + h0 + w0] += g * td * (1 - th) * (1 - tw);
                    xp[d1 + h0 + w1] += g * td * (1 - th) * tw;
                    xp[d1 + h1 + w0] += g * td * th * (1 - tw);
                    xp[d1 + h1 + w1] += g * td * th * tw;
                }
            }
        }
    }
    return gx;
}

Tensor crop_to(const Tensor& x, int64_t d, int64_t h, int64_t w) {
    const int64_t n = x.dim(0), c = x.dim(1);
    const int64_t xd = x.dim(2), xh = x.dim(3), xw = x.dim(4);
    if (d > xd || h > xh || w > xw) throw std::invalid_argument("crop_to: target larger than source");
    if (d == xd && h == xh && w == xw) return x;
    Tensor y({n, c, d, h, w});
    for (int64_t nc = 0; nc < n * c; ++nc)
        for (int64_t zd = 0; zd < d; ++zd)
            for (int64_t zh = 0; zh < h; ++zh) {
                const real* src = x.data() + ((nc * xd + zd) * xh + zh) * xw;
                real* dst = y.data() + ((nc * d + zd) * h + zh) * w;
                std::copy(src, src + w, dst);
            }
    return y;
}

Tensor crop_to_backward(const std::vector<int64_t>& in_dims, const Tensor& grad_y) {
    const int64_t n = in_dims[0], c = in_dims[1];
    const int64_t xd = in_dims[2], xh = in_dims[3], xw = in_dims[4];
    const int64_t d = grad_y.dim(2), h = grad_y.dim(3), w = grad_y.dim(4);
    if (d == xd && h == xh && w == xw) return grad_y;
    Tensor gx(in_dims);
    for (int64_t nc = 0; nc < n * c; ++nc)
        for (int64_t zd = 0; zd < d; ++zd)
            for (int64_t zh = 0; zh < h; ++zh) {
                const real* src = grad_y.data() + ((nc * d + zd) * h + zh) * w;
                real* dst = gx.data() + ((nc * xd + zd) * xh + zh) * xw;
                std::copy(src, src + w, dst);
            }
    return gx;
}

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor* bias) {
    const int64_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
    if (w.dim(1) != in) throw std::invalid_argument("linear: shape mismatch");
    Tensor y({n, out});
    MapC xm(x.data(), n, in);
    MapC wm(w.data(), out, in);
    MapM ym(y.data(), n, out);
    ym.noalias() = xm * wm.transpose();
    if (bias)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < out; ++j) y[i * out + j] += (*bias)[j];
    return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad_y, Tensor* grad_x,
                     Tensor* grad_w, Tensor* grad_b) {
    const int64_t n = x.dim(0), in = x.dim(1), out = w.dim(0);
    MapC xm(x.data(), n, in);
    MapC wm(w.data(), out, in);
    MapC gm(grad_y.data(), n, out);
    if (grad_w) {
        MapM gwm(grad_w->data(), out, in);
        gwm.noalias() += gm.transpose() * xm;
    }
    if (grad_b)
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < out; ++j) (*grad_b)[j] += grad_y[i * out + j];
    if (grad_x) {
        MapM gxm(grad_x->data(), n, in);
        gxm.noalias() += gm * wm;
    }
}

Tensor softmax2_forward(const Tensor& logits) {
    if (logits.ndim() != 5 || logits.dim(1) != 2)
        throw std::invalid_argument("softmax2: expected [N,2,D,H,W] logits");
    const int64_t n = logits.dim(0);
    const int64_t sp = logits.dim(2) * logits.dim(3) * logits.dim(4);
    Tensor p({n, logits.dim(2), logits.dim(3), logits.dim(4)});
    for (int64_t i = 0; i < n; ++i) {
        const real* z0 = logits.data() + (i * 2 + 0) * sp;
        const real* z1 = logits.data() + (i * 2 + 1) * sp;
        real* pp = p.data() + i * sp;
        for (int64_t j = 0; j < sp; ++j) {
            const real d = z1[j] - z0[j];
            pp[j] = d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
        }
    }
    return p;
}

Tensor softmax2_backward(const Tensor& p, const Tensor& grad_p) {
    const int64_t n = p.dim(0);
    const int64_t sp = p.dim(1) * p.dim(2) * p.dim(3);
    Tensor gz({n, 2, p.dim(1), p.dim(2), p.dim(3)});
    for (int64_t i = 0; i < n; ++i) {
        const real* pp = p.data() + i * sp;
        const real* gp = grad_p.data() + i * sp;
        real* g0 = gz.data() + (i * 2 + 0) * sp;
        real* g1 = gz.data() + (i * 2 + 1) * sp;
        for (int64_t j = 0; j < sp; ++j) {
            const real s = gp[j] * pp[j] * (1.0 - pp[j]);
            g1[j] = s;
            g0[j] = -s;
        }
    }
    return gz;
}

void add_inplace(Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    for (int64_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

void axpy(Tensor& a, real alpha, const Tensor& b) {
    check_same_shape(a, b, "axpy");
    for (int64_t i = 0; i < a.numel(); ++i) a[i] += alpha * b[i];
}

}  // namespace dwp
