#pragma once

#include "dwp/tensor.hpp"

namespace dwp {

// Low-level differentiable ops. Convention: x is [N, C, D, H, W], conv
// weights are [F, C, k, k, k]. Backward functions accumulate into grad
// tensors (callers zero them per step).

struct Conv3dSpec {
    int k = 3;
    int stride = 1;
    int pad = 0;

    int64_t out_size(int64_t n) const { return (n + 2 * pad - k) / stride + 1; }
};

Tensor conv3d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, const Conv3dSpec& sp);

/// grad_x may be null (skip input gradient, e.g. first layer); grad_w/grad_b
/// may be null (frozen weights).
void conv3d_backward(const Tensor& x, const Tensor& w, const Conv3dSpec& sp, const Tensor& grad_y,
                     Tensor* grad_x, Tensor* grad_w, Tensor* grad_b);

/// Transposed convolution, stride 1, no padding; weight layout [C_in, F, k, k, k].
/// Output spatial size is n + k - 1.
Tensor conv_transpose3d_forward(const Tensor& x, const Tensor& w, const Tensor* bias, int k);
void conv_transpose3d_backward(const Tensor& x, const Tensor& w, int k, const Tensor& grad_y,
                               Tensor* grad_x, Tensor* grad_w, Tensor* grad_b);

/// Instance normalization (no affine, no running stats). Stats are computed
/// per (sample, channel) over the spatial volume.
struct InstanceNormCtx {
    Tensor xhat;     // normalized output
    Tensor inv_std;  // [N, C]
};
Tensor instance_norm_forward(const Tensor& x, real eps, InstanceNormCtx* ctx);
Tensor instance_norm_backward(const InstanceNormCtx& ctx, const Tensor& grad_y);

Tensor relu_forward(const Tensor& x);
/// grad wrt x given the forward *output* y (mask = y > 0).
Tensor relu_backward(const Tensor& y, const Tensor& grad_y);

Tensor elu_forward(const Tensor& x);
Tensor elu_backward(const Tensor& y, const Tensor& grad_y);

Tensor tanh_forward(const Tensor& x);
Tensor tanh_backward(const Tensor& y, const Tensor& grad_y);

/// Max pooling, kernel 2, stride 2, ceil mode (windows may overhang the
/// boundary as long as they start inside).
struct MaxPoolCtx {
    Tensor argmax;  // flat input index per output element
    std::vector<int64_t> in_dims;
};
Tensor maxpool3d_forward(const Tensor& x, MaxPoolCtx* ctx);
Tensor maxpool3d_backward(const MaxPoolCtx& ctx, const Tensor& grad_y);

/// Trilinear upsampling by exactly 2x per axis (half-pixel centers).
Tensor upsample_trilinear2x_forward(const Tensor& x);
Tensor upsample_trilinear2x_backward(const std::vector<int64_t>& in_dims, const Tensor& grad_y);

/// Crop the leading corner of x to the target spatial size (each target dim
/// is <= source dim). Used to align decoder tensors with skip tensors.
Tensor crop_to(const Tensor& x, int64_t d, int64_t h, int64_t w);
Tensor crop_to_backward(const std::vector<int64_t>& in_dims, const Tensor& grad_y);

/// y = x * W^T + b with x [N, in], W [out, in], b [out].
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor* bias);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad_y, Tensor* grad_x,
                     Tensor* grad_w, Tensor* grad_b);

/// Foreground probability from 2-channel logits: p = sigmoid(z1 - z0).
/// Input [N, 2, D, H, W] -> output [N, D, H, W].
Tensor softmax2_forward(const Tensor& logits);
/// grad wrt logits given forward output p and grad wrt p.
Tensor softmax2_backward(const Tensor& p, const Tensor& grad_p);

void add_inplace(Tensor& a, const Tensor& b);
void axpy(Tensor& a, real alpha, const Tensor& b);  // a += alpha * b

}  // namespace dwp
