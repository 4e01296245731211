#include <doctest.h>

#include <cmath>

#include "dwp/nn.hpp"
#include "dwp/rng.hpp"
#include "test_util.hpp"

using namespace dwp;

namespace {

// random projection turns a tensor-valued op into a scalar for FD checks
real dot(const Tensor& a, const Tensor& b) {
    real acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
    return acc;
}

Tensor randn(Rng& rng, std::vector<int64_t> dims, real sd = 1.0) {
    Tensor t(std::move(dims));
    rng.fill_normal(t, 0.0, sd);
    return t;
}

}  // namespace

TEST_CASE("conv3d gradients (k3, strides 1 and 2, with bias)") {
    for (int stride : {1, 2}) {
        Rng rng(40 + stride);
        Tensor x = randn(rng, {2, 3, 5, 6, 5});
        Tensor w = randn(rng, {4, 3, 3, 3, 3}, 0.3);
        Tensor b = randn(rng, {4}, 0.1);
        Conv3dSpec sp{3, stride, 1};
        Tensor y0 = conv3d_forward(x, w, &b, sp);
        Tensor proj = randn(rng, y0.dims);

        auto f = [&]() { return dot(conv3d_forward(x, w, &b, sp), proj); };
        Tensor gx(x.dims), gw(w.dims), gb(b.dims);
        conv3d_backward(x, w, sp, proj, &gx, &gw, &gb);
        CHECK(test::max_grad_rel_err(f, x, gx, 37) < 1e-4);
        CHECK(test::max_grad_rel_err(f, w, gw, 17) < 1e-4);
        CHECK(test::max_grad_rel_err(f, b, gb, 1) < 1e-4);
    }
}

TEST_CASE("conv3d gradients (pointwise, stride 2)") {
    for (int stride : {1, 2}) {
        Rng rng(50 + stride);
        Tensor x = randn(rng, {1, 4, 4, 5, 4});
        Tensor w = randn(rng, {3, 4, 1, 1, 1}, 0.5);
        Conv3dSpec sp{1, stride, 0};
        Tensor y0 = conv3d_forward(x, w, nullptr, sp);
        Tensor proj = randn(rng, y0.dims);

        auto f = [&]() { return dot(conv3d_forward(x, w, nullptr, sp), proj); };
        Tensor gx(x.dims), gw(w.dims);
        conv3d_backward(x, w, sp, proj, &gx, &gw, nullptr);
        CHECK(test::max_grad_rel_err(f, x, gx, 13) < 1e-4);
        CHECK(test::max_grad_rel_err(f, w, gw, 1) < 1e-4);
    }
}

TEST_CASE("conv3d output sizes") {
    Tensor x({1, 1, 9, 12, 8});
    Tensor w({2, 1, 3, 3, 3});
    CHECK(conv3d_forward(x, w, nullptr, {3, 2, 1}).dims == std::vector<int64_t>{1, 2, 5, 6, 4});
    CHECK(conv3d_forward(x, w, nullptr, {3, 1, 1}).dims == std::vector<int64_t>{1, 2, 9, 12, 8});
}

TEST_CASE("conv_transpose3d matches adjoint and gradients") {
    // both input shapes: 1^3 (single-GEMM path) and 3^3 (general path)
    for (int64_t spatial : {int64_t(1), int64_t(3)}) {
        Rng rng(60 + spatial);
        Tensor x = randn(rng, {2, 3, spatial, spatial, spatial});
        Tensor w = randn(rng, {3, 4, 3, 3, 3}, 0.4);  // [c_in, f, k,k,k]
        Tensor b = randn(rng, {4}, 0.1);
        Tensor y0 = conv_transpose3d_forward(x, w, &b, 3);
        CHECK(y0.dims == std::vector<int64_t>{2, 4, spatial + 2, spatial + 2, spatial + 2});

        Tensor proj = randn(rng, y0.dims);
        auto f = [&]() { return dot(conv_transpose3d_forward(x, w, &b, 3), proj); };
        Tensor gx(x.dims), gw(w.dims), gb(b.dims);
        conv_transpose3d_backward(x, w, 3, proj, &gx, &gw, &gb);
        CHECK(test::max_grad_rel_err(f, x, gx, 5) < 1e-4);
        CHECK(test::max_grad_rel_err(f, w, gw, 29) < 1e-4);
        CHECK(test::max_grad_rel_err(f, b, gb, 1) < 1e-4);
    }
}

TEST_CASE("conv3d center-only fast path matches the general formula") {
    Rng rng(65);
    Tensor x = randn(rng, {3, 5, 1, 1, 1});
    Tensor w = randn(rng, {4, 5, 3, 3, 3}, 0.4);
    Conv3dSpec sp{3, 1, 1};
    Tensor y = conv3d_forward(x, w, nullptr, sp);
    CHECK(y.dims == std::vector<int64_t>{3, 4, 1, 1, 1});
    // oracle: only the center tap contributes
    for (int64_t n = 0; n < 3; ++n)
        for (int64_t f = 0; f < 4; ++f) {
            real acc = 0.0;
            for (int64_t c = 0; c < 5; ++c) acc += w[(f * 5 + c) * 27 + 13] * x[n * 5 + c];
            CHECK(y[(n * 4 + f)] == doctest::Approx(acc).epsilon(1e-12));
        }
    Tensor proj = randn(rng, y.dims);
    auto fn = [&]() { return dot(conv3d_forward(x, w, nullptr, sp), proj); };
    Tensor gx(x.dims), gw(w.dims);
    conv3d_backward(x, w, sp, proj, &gx, &gw, nullptr);
    CHECK(test::max_grad_rel_err(fn, x, gx, 1) < 1e-4);
    CHECK(test::max_grad_rel_err(fn, w, gw, 13) < 1e-4);
}

TEST_CASE("instance norm: zero mean, unit variance, gradients") {
    Rng rng(70);
    Tensor x = randn(rng, {2, 3, 4, 4, 4}, 2.0);
    InstanceNormCtx ctx;
    Tensor y = instance_norm_forward(x, 1e-5, &ctx);
    // per (n, c) stats
    const int64_t sp = 64;
    for (int64_t i = 0; i < 6; ++i) {
        real mean = 0.0, var = 0.0;
        for (int64_t j = 0; j < sp; ++j) mean += y[i * sp + j];
        mean /= sp;
        for (int64_t j = 0; j < sp; ++j) var += (y[i * sp + j] - mean) * (y[i * sp + j] - mean);
        var /= sp;
        CHECK(std::abs(mean) < 1e-10);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }

    Tensor proj = randn(rng, y.dims);
    auto f = [&]() {
        InstanceNormCtx c2;
        return dot(instance_norm_forward(x, 1e-5, &c2), proj);
    };
    Tensor gx = instance_norm_backward(ctx, proj);
    CHECK(test::max_grad_rel_err(f, x, gx, 41) < 1e-4);
}

TEST_CASE("maxpool3d ceil mode shapes and gradients") {
    Rng rng(80);
    Tensor x = randn(rng, {2, 2, 3, 3, 3});
    MaxPoolCtx ctx;
    Tensor y = maxpool3d_forward(x, &ctx);
    CHECK(y.dims == std::vector<int64_t>{2, 2, 2, 2, 2});
    Tensor y2 = maxpool3d_forward(y, &ctx);
    CHECK(y2.dims == std::vector<int64_t>{2, 2, 1, 1, 1});

    maxpool3d_forward(x, &ctx);
    Tensor proj = randn(rng, {2, 2, 2, 2, 2});
    auto f = [&]() {
        MaxPoolCtx c2;
        return dot(maxpool3d_forward(x, &c2), proj);
    };
    Tensor gx = maxpool3d_backward(ctx, proj);
    CHECK(test::max_grad_rel_err(f, x, gx, 7, 1e-7) < 1e-3);
}

TEST_CASE("trilinear upsample doubles sizes; adjoint is consistent") {
    Rng rng(90);
    Tensor x = randn(rng, {1, 2, 3, 4, 5});
    Tensor y = upsample_trilinear2x_forward(x);
    CHECK(y.dims == std::vector<int64_t>{1, 2, 6, 8, 10});

    // <Ax, p> == <x, A^T p> for the linear map
    Tensor proj = randn(rng, y.dims);
    Tensor gx = upsample_trilinear2x_backward(x.dims, proj);
    CHECK(dot(y, proj) == doctest::Approx(dot(x, gx)).epsilon(1e-10));

    // constant fields stay constant
    Tensor c = Tensor::full({1, 1, 4, 4, 4}, 3.25);
    Tensor cu = upsample_trilinear2x_forward(c);
    for (int64_t i = 0; i < cu.numel(); ++i) CHECK(cu[i] == doctest::Approx(3.25).epsilon(1e-12));
}

TEST_CASE("crop_to takes the leading corner; backward zero-pads") {
    Rng rng(100);
    Tensor x = randn(rng, {1, 1, 4, 4, 4});
    Tensor y = crop_to(x, 3, 4, 2);
    CHECK(y.dims == std::vector<int64_t>{1, 1, 3, 4, 2});
    CHECK(y[0] == x[0]);
    Tensor proj = randn(rng, y.dims);
    Tensor gx = crop_to_backward(x.dims, proj);
    CHECK(dot(y, proj) == doctest::Approx(dot(x, gx)).epsilon(1e-12));
}

TEST_CASE("linear gradients") {
    Rng rng(110);
    Tensor x = randn(rng, {3, 5});
    Tensor w = randn(rng, {4, 5}, 0.5);
    Tensor b = randn(rng, {4}, 0.1);
    Tensor proj = randn(rng, {3, 4});
    auto f = [&]() { return dot(linear_forward(x, w, &b), proj); };
    Tensor gx(x.dims), gw(w.dims), gb(b.dims);
    linear_backward(x, w, proj, &gx, &gw, &gb);
    CHECK(test::max_grad_rel_err(f, x, gx, 1) < 1e-4);
    CHECK(test::max_grad_rel_err(f, w, gw, 1) < 1e-4);
    CHECK(test::max_grad_rel_err(f, b, gb, 1) < 1e-4);
}

TEST_CASE("softmax2 probabilities and gradients") {
    Rng rng(120);
    Tensor z = randn(rng, {2, 2, 2, 2, 2}, 2.0);
    Tensor p = softmax2_forward(z);
    CHECK(p.dims == std::vector<int64_t>{2, 2, 2, 2});
    for (int64_t i = 0; i < p.numel(); ++i) {
        CHECK(p[i] > 0.0);
        CHECK(p[i] < 1.0);
    }
    Tensor proj = randn(rng, p.dims);
    auto f = [&]() { return dot(softmax2_forward(z), proj); };
    Tensor gz = softmax2_backward(p, proj);
    CHECK(test::max_grad_rel_err(f, z, gz, 3) < 1e-4);
}

TEST_CASE("activation gradients") {
    Rng rng(130);
    Tensor x = randn(rng, {40});
    Tensor proj = randn(rng, {40});
    {
        auto f = [&]() { return dot(elu_forward(x), proj); };
        Tensor y = elu_forward(x);
        Tensor gx = elu_backward(y, proj);
        CHECK(test::max_grad_rel_err(f, x, gx, 3) < 1e-4);
    }
    {
        auto f = [&]() { return dot(tanh_forward(x), proj); };
        Tensor y = tanh_forward(x);
        Tensor gx = tanh_backward(y, proj);
        CHECK(test::max_grad_rel_err(f, x, gx, 3) < 1e-4);
    }
}
