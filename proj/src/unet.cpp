#include "dwp/unet.hpp"

#include <cmath>
#include <stdexcept>

#include "dwp/errors.hpp"

namespace dwp {

int LayerGroupMap::group_of(const std::string& layer_id) const {
    auto it = groups.find(layer_id);
    if (it == groups.end())
        throw std::invalid_argument("group map: no group for layer '" + layer_id + "'");
    return it->second;
}

int LayerGroupMap::group_count() const {
    int maxg = 0;
    for (const auto& [id, g] : groups) maxg = std::max(maxg, g);
    return maxg;
}

LayerGroupMap resolution_group_map() {
    // Keyed by the spatial resolution of each layer's input feature map.
    LayerGroupMap m;
    m.groups = {
        {"init_conv", 1},    {"down1.conv_1", 1},
        {"down1.conv_2", 2}, {"down2.conv_1", 2}, {"down2.conv_2", 2}, {"down3.conv_1", 2},
        {"down3.conv_2", 3}, {"down4.conv_1", 3}, {"down4.conv_2", 3}, {"down5.conv_1", 3},
        {"down5.conv_2", 4}, {"down6.conv_1", 4}, {"down6.conv_2", 4},
        {"up1.conv_1", 5},   {"up1.conv_2", 5},
        {"up2.conv_1", 6},   {"up2.conv_2", 6},
        {"up3.conv_1", 7},   {"up3.conv_2", 7},
    };
    return m;
}

ShapeTrace trace_shapes(int64_t d, int64_t h, int64_t w) {
    auto half = [](int64_t n) { return (n + 1) / 2; };
    ShapeTrace t;
    t.input = {d, h, w};
    t.bottleneck = {half(half(half(d))), half(half(half(h))), half(half(half(w)))};
    t.output = t.input;
    return t;
}

UNet::UNet(const NetworkSpec& spec) : spec_(spec) {
    if (spec.in_channels < 1 || spec.out_channels < 1 || spec.base_widths[0] < 1 ||
        spec.base_widths[1] < 1 || spec.base_widths[2] < 1)
        throw ConfigError("invalid network spec: channels and widths must be positive");

    const int w1 = spec.base_widths[0], w2 = spec.base_widths[1], w3 = spec.base_widths[2];
    auto add = [&](const std::string& id, int cin, int cout, int k, int stride, bool norm) {
        ConvLayer L;
        L.id = id;
        L.c_in = cin;
        L.c_out = cout;
        L.k = k;
        L.stride = stride;
        L.has_norm = norm;
        std::vector<int64_t> shape{cout, cin, k, k, k};
        if (spec_.mode == NetMode::variational) {
            L.mu = Tensor(shape);
            L.log_sigma = Tensor::full(shape, kInitLogSigma);
            L.noise = Tensor(shape);
            L.grad_mu = Tensor(shape);
            L.grad_log_sigma = Tensor(shape);
        }
        L.w = Tensor(shape);
        L.grad_w = Tensor(shape);
        by_id_[id] = layers_.size();
        layers_.push_back(std::move(L));
    };

    add("init_conv", spec.in_channels, w1, 3, 1, false);
    add("down1.conv_1", w1, w2, 3, 2, true);
    add("down1.conv_2", w2, w2, 3, 1, true);
    add("down1.down", w1, w2, 1, 2, true);
    add("down2.conv_1", w2, w2, 3, 1, true);
    add("down2.conv_2", w2, w2, 3, 1, true);
    add("down3.conv_1", w2, w2, 3, 2, true);
    add("down3.conv_2", w2, w2, 3, 1, true);
    add("down3.down", w2, w2, 1, 2, true);
    add("down4.conv_1", w2, w2, 3, 1, true);
    add("down4.conv_2", w2, w2, 3, 1, true);
    add("down5.conv_1", w2, w3, 3, 2, true);
    add("down5.conv_2", w3, w3, 3, 1, true);
    add("down5.down", w2, w3, 1, 2, true);
    add("down6.conv_1", w3, w3, 3, 1, true);
    add("down6.conv_2", w3, w3, 3, 1, true);
    add("up1.up", w3, w2, 1, 1, true);
    add("up1.conv_1", w2, w2, 3, 1, true);
    add("up1.conv_2", w2, w2, 3, 1, true);
    add("up2.up", w2, w2, 1, 1, true);
    add("up2.conv_1", w2, w2, 3, 1, true);
    add("up2.conv_2", w2, w2, 3, 1, true);
    add("up3.up", w2, w1, 1, 1, true);
    add("up3.conv_1", w1, w1, 3, 1, true);
    add("up3.conv_2", w1, w1, 3, 1, true);
    add("out", w1, spec.out_channels, 1, 1, false);

    ctxs_.resize(layers_.size());
}

UNet build_unet(const NetworkSpec& spec) { return UNet(spec); }

ConvLayer& UNet::layer(const std::string& id) {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw std::invalid_argument("unknown layer id '" + id + "'");
    return layers_[it->second];
}

const ConvLayer& UNet::layer(const std::string& id) const {
    return const_cast<UNet*>(this)->layer(id);
}

int64_t UNet::param_count() const {
    int64_t n = 0;
    for (const auto& L : layers_) n += L.weight_count();
    return n;
}

int64_t UNet::trainable_param_count() const {
    int64_t n = 0;
    for (const auto& L : layers_)
        if (L.trainable) n += L.weight_count();
    return n;
}

std::vector<std::pair<std::string, std::vector<int64_t>>> UNet::param_shape_inventory() const {
    std::vector<std::pair<std::string, std::vector<int64_t>>> inv;
    for (const auto& L : layers_) inv.emplace_back(L.id, L.w.dims);
    return inv;
}

void UNet::sample_all_weights(Rng& rng) {
    if (spec_.mode != NetMode::variational)
        throw std::logic_error("sample_all_weights: deterministic network");
    for (auto& L : layers_) {
        rng.fill_normal(L.noise);
        for (int64_t i = 0; i < L.w.numel(); ++i)
            L.w[i] = L.mu[i] + std::exp(clamp_log_sigma(L.log_sigma[i])) * L.noise[i];
    }
}

void UNet::set_weights_to_mean() {
    if (spec_.mode != NetMode::variational)
        throw std::logic_error("set_weights_to_mean: deterministic network");
    for (auto& L : layers_) {
        L.noise.zero();
        L.w = L.mu;
    }
}

void UNet::zero_grad() {
    for (auto& L : layers_) {
        L.grad_w.zero();
        if (spec_.mode == NetMode::variational) {
            L.grad_mu.zero();
            L.grad_log_sigma.zero();
        }
    }
}

void UNet::fold_weight_grads() {
    if (spec_.mode != NetMode::variational) return;
    for (auto& L : layers_) {
        if (!L.trainable) continue;
        for (int64_t i = 0; i < L.w.numel(); ++i) {
            L.grad_mu[i] += L.grad_w[i];
            L.grad_log_sigma[i] += L.grad_w[i] * (L.w[i] - L.mu[i]);
        }
    }
}

Tensor UNet::conv_block_forward(ConvLayer& L, const Tensor& x, bool grad) {
    BlockCtx& ctx = ctxs_[by_id_[L.id]];
    Conv3dSpec sp{L.k, L.stride, L.k == 3 ? 1 : 0};
    if (!L.has_norm) {
        if (grad) ctx.conv_in = x;
        return conv3d_forward(x, L.w, nullptr, sp);
    }
    Tensor xn = instance_norm_forward(x, kInstanceNormEps, grad ? &ctx.norm : nullptr);
    Tensor a = relu_forward(xn);
    return conv3d_forward(a, L.w, nullptr, sp);
}

Tensor UNet::conv_block_backward(ConvLayer& L, BlockCtx& ctx, const Tensor& grad_y) {
    Conv3dSpec sp{L.k, L.stride, L.k == 3 ? 1 : 0};
    const bool need_gx = (L.id != "init_conv");
    if (!L.has_norm) {
        Tensor gx;
        if (need_gx) gx = Tensor(ctx.conv_in.dims);
        conv3d_backward(ctx.conv_in, L.w, sp, grad_y, need_gx ? &gx : nullptr,
                        L.trainable ? &L.grad_w : nullptr, nullptr);
        return gx;
    }
    Tensor a = relu_forward(ctx.norm.xhat);  // conv input, recomputed
    Tensor ga(a.dims);
    conv3d_backward(a, L.w, sp, grad_y, &ga, L.trainable ? &L.grad_w : nullptr, nullptr);
    Tensor gn = relu_backward(a, ga);
    return instance_norm_backward(ctx.norm, gn);
}

Tensor UNet::forward(const Tensor& x, bool grad_enabled) {
    if (x.ndim() != 5) throw std::invalid_argument("forward: expected [N,C,D,H,W] input");
    if (x.dim(1) != spec_.in_channels)
        throw std::invalid_argument("forward: expected " + std::to_string(spec_.in_channels) +
                                    " input channels, got " + std::to_string(x.dim(1)));
    if (x.dim(2) < 8 || x.dim(3) < 8 || x.dim(4) < 8)
        throw std::invalid_argument("forward: each spatial dim must be >= 8, got " + shape_str(x));

    have_cache_ = grad_enabled;
    last_trace_.input = {x.dim(2), x.dim(3), x.dim(4)};

    auto L = [&](const char* id) -> ConvLayer& { return layers_[by_id_[id]]; };

    // encoder
    Tensor a0 = conv_block_forward(L("init_conv"), x, grad_enabled);
    Tensor t = conv_block_forward(L("down1.conv_1"), a0, grad_enabled);
    t = conv_block_forward(L("down1.conv_2"), t, grad_enabled);
    Tensor e1 = conv_block_forward(L("down1.down"), a0, grad_enabled);
    add_inplace(e1, t);

    t = conv_block_forward(L("down2.conv_1"), e1, grad_enabled);
    t = conv_block_forward(L("down2.conv_2"), t, grad_enabled);
    Tensor e2 = e1;
    add_inplace(e2, t);

    t = conv_block_forward(L("down3.conv_1"), e2, grad_enabled);
    t = conv_block_forward(L("down3.conv_2"), t, grad_enabled);
    Tensor e3 = conv_block_forward(L("down3.down"), e2, grad_enabled);
    add_inplace(e3, t);

    t = conv_block_forward(L("down4.conv_1"), e3, grad_enabled);
    t = conv_block_forward(L("down4.conv_2"), t, grad_enabled);
    Tensor e4 = e3;
    add_inplace(e4, t);

    t = conv_block_forward(L("down5.conv_1"), e4, grad_enabled);
    t = conv_block_forward(L("down5.conv_2"), t, grad_enabled);
    Tensor e5 = conv_block_forward(L("down5.down"), e4, grad_enabled);
    add_inplace(e5, t);

    t = conv_block_forward(L("down6.conv_1"), e5, grad_enabled);
    t = conv_block_forward(L("down6.conv_2"), t, grad_enabled);
    Tensor e6 = e5;
    add_inplace(e6, t);
    last_trace_.bottleneck = {e6.dim(2), e6.dim(3), e6.dim(4)};

    // decoder
    auto up_block = [&](const char* up_id, const char* c1_id, const char* c2_id, const Tensor& in,
                        const Tensor& skip, int slot) {
        Tensor g = conv_block_forward(L(up_id), in, grad_enabled);
        up_in_dims_[slot] = g.dims;
        g = upsample_trilinear2x_forward(g);
        pre_crop_dims_[slot] = g.dims;
        g = crop_to(g, skip.dim(2), skip.dim(3), skip.dim(4));
        add_inplace(g, skip);
        Tensor h = conv_block_forward(L(c1_id), g, grad_enabled);
        h = conv_block_forward(L(c2_id), h, grad_enabled);
        add_inplace(h, g);
        return h;
    };

    Tensor u1 = up_block("up1.up", "up1.conv_1", "up1.conv_2", e6, e4, 0);
    Tensor u2 = up_block("up2.up", "up2.conv_1", "up2.conv_2", u1, e2, 1);
    Tensor u3 = up_block("up3.up", "up3.conv_1", "up3.conv_2", u2, a0, 2);

    Tensor logits = conv_block_forward(L("out"), u3, grad_enabled);
    last_trace_.output = {logits.dim(2), logits.dim(3), logits.dim(4)};
    return logits;
}

void UNet::backward(const Tensor& grad_logits) {
    if (!have_cache_) throw std::logic_error("backward: forward was not run with grad enabled");
    auto Lr = [&](const char* id) -> ConvLayer& { return layers_[by_id_[id]]; };
    auto Cx = [&](const char* id) -> BlockCtx& { return ctxs_[by_id_[id]]; };

    Tensor g_u3 = conv_block_backward(Lr("out"), Cx("out"), grad_logits);

    auto up_backward = [&](const char* up_id, const char* c1_id, const char* c2_id,
                           const Tensor& g_out, int slot, Tensor& g_skip) {
        // out = h + conv2(conv1(h)); h = crop(upsample(cb(in))) + skip
        Tensor g = conv_block_backward(Lr(c2_id), Cx(c2_id), g_out);
        g = conv_block_backward(Lr(c1_id), Cx(c1_id), g);
        add_inplace(g, g_out);  // residual
        g_skip = g;
        Tensor gp = crop_to_backward(pre_crop_dims_[slot], g);
        gp = upsample_trilinear2x_backward(up_in_dims_[slot], gp);
        return conv_block_backward(Lr(up_id), Cx(up_id), gp);
    };

    Tensor g_skip_a0, g_skip_e2, g_skip_e4;
    Tensor g_u2 = up_backward("up3.up", "up3.conv_1", "up3.conv_2", g_u3, 2, g_skip_a0);
    Tensor g_u1 = up_backward("up2.up", "up2.conv_1", "up2.conv_2", g_u2, 1, g_skip_e2);
    Tensor g_e6 = up_backward("up1.up", "up1.conv_1", "up1.conv_2", g_u1, 0, g_skip_e4);

    // down6 (plain residual)
    Tensor g = conv_block_backward(Lr("down6.conv_2"), Cx("down6.conv_2"), g_e6);
    Tensor g_e5 = conv_block_backward(Lr("down6.conv_1"), Cx("down6.conv_1"), g);
    add_inplace(g_e5, g_e6);

    // down5 (strided): e5 = conv2(conv1(e4)) + down(e4)
    g = conv_block_backward(Lr("down5.conv_2"), Cx("down5.conv_2"), g_e5);
    Tensor g_e4 = conv_block_backward(Lr("down5.conv_1"), Cx("down5.conv_1"), g);
    add_inplace(g_e4, conv_block_backward(Lr("down5.down"), Cx("down5.down"), g_e5));
    add_inplace(g_e4, g_skip_e4);

    // down4
    g = conv_block_backward(Lr("down4.conv_2"), Cx("down4.conv_2"), g_e4);
    Tensor g_e3 = conv_block_backward(Lr("down4.conv_1"), Cx("down4.conv_1"), g);
    add_inplace(g_e3, g_e4);

    // down3 (strided)
    g = conv_block_backward(Lr("down3.conv_2"), Cx("down3.conv_2"), g_e3);
    Tensor g_e2 = conv_block_backward(Lr("down3.conv_1"), Cx("down3.conv_1"), g);
    add_inplace(g_e2, conv_block_backward(Lr("down3.down"), Cx("down3.down"), g_e3));
    add_inplace(g_e2, g_skip_e2);

    // down2
    g = conv_block_backward(Lr("down2.conv_2"), Cx("down2.conv_2"), g_e2);
    Tensor g_e1 = conv_block_backward(Lr("down2.conv_1"), Cx("down2.conv_1"), g);
    add_inplace(g_e1, g_e2);

    // down1 (strided)
    g = conv_block_backward(Lr("down1.conv_2"), Cx("down1.conv_2"), g_e1);
    Tensor g_a0 = conv_block_backward(Lr("down1.conv_1"), Cx("down1.conv_1"), g);
    add_inplace(g_a0, conv_block_backward(Lr("down1.down"), Cx("down1.down"), g_e1));
    add_inplace(g_a0, g_skip_a0);

    conv_block_backward(Lr("init_conv"), Cx("init_conv"), g_a0);

    if (spec_.mode == NetMode::variational) fold_weight_grads();
}

void freeze_middle(UNet& net) {
    if (net.mode() == NetMode::variational)
        throw ConfigError("freeze_middle: variational networks are not supported");
    static const char* kept[] = {"init_conv", "down1.conv_1", "down1.conv_2", "down1.down",
                                 "up3.up",    "up3.conv_1",   "up3.conv_2",   "out"};
    for (auto& L : net.layers()) {
        L.trainable = false;
        for (const char* id : kept)
            if (L.id == id) L.trainable = true;
    }
}

void unfreeze_all(UNet& net) {
    for (auto& L : net.layers()) L.trainable = true;
}

void he_init(UNet& net, Rng& rng) {
    for (auto& L : net.layers()) {
        const real sigma = std::sqrt(2.0 / (static_cast<real>(L.c_in) * L.k * L.k * L.k));
        Tensor& target = net.mode() == NetMode::variational ? L.mu : L.w;
        rng.fill_normal(target, 0.0, sigma);
        if (net.mode() == NetMode::variational) L.log_sigma.fill(kInitLogSigma);
    }
}

}  // namespace dwp
