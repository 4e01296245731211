#include "dwp/kernel_vae.hpp"

#include <cmath>
#include <stdexcept>

namespace dwp {

struct KernelVAE::EncodeCtx {
    Tensor x;        // input kernels
    Tensor a1, a2, a3;  // post-ELU activations (conv inputs / flatten input)
    MaxPoolCtx pool1, pool2;
    Tensor flat;     // [n, 128]
};

struct KernelVAE::DecodeCtx {
    Tensor z;
    Tensor f;            // linear output reshaped to [n,128,1,1,1]
    Tensor b1, b2, b3, b4;  // post-ELU activations
    Tensor t_mu, t_ls;   // tanh outputs
};

KernelVAE::~KernelVAE() = default;
KernelVAE::KernelVAE(KernelVAE&&) noexcept = default;
KernelVAE& KernelVAE::operator=(KernelVAE&&) noexcept = default;

KernelVAE::KernelVAE(const KernelVAESpec& spec) : spec_(spec) {
    if (spec.latent_dim < 1) throw std::invalid_argument("KernelVAE: latent_dim must be >= 1");
    enc1_ = make_conv(1, 32, 3);
    enc2_ = make_conv(32, 64, 3);
    enc3_ = make_conv(64, 128, 1);
    latent_mu_ = make_linear(128, spec.latent_dim);
    latent_ls_ = make_linear(128, spec.latent_dim);
    dec_lin_ = make_linear(spec.latent_dim, 128);
    dec_conv_ = make_conv(128, 128, 3);
    dec_t1_ = make_tconv(128, 128, 3);
    dec_t2_ = make_tconv(128, 64, 1);
    dec_t3_ = make_tconv(64, 32, 1);
    recon_mu_ = make_tconv(32, 1, 1);
    recon_ls_ = make_tconv(32, 1, 1);
}

KernelVAE::Layer KernelVAE::make_conv(int cin, int cout, int k) {
    Layer L;
    L.w = Tensor({cout, cin, k, k, k});
    L.b = Tensor({cout});
    L.gw = Tensor(L.w.dims);
    L.gb = Tensor(L.b.dims);
    return L;
}

// transposed conv weights live as [c_in, c_out, k, k, k]
KernelVAE::Layer KernelVAE::make_tconv(int cin, int cout, int k) {
    Layer L;
    L.w = Tensor({cin, cout, k, k, k});
    L.b = Tensor({cout});
    L.gw = Tensor(L.w.dims);
    L.gb = Tensor(L.b.dims);
    return L;
}

KernelVAE::Layer KernelVAE::make_linear(int in, int out) {
    Layer L;
    L.w = Tensor({out, in});
    L.b = Tensor({out});
    L.gw = Tensor(L.w.dims);
    L.gb = Tensor(L.b.dims);
    return L;
}

void KernelVAE::init_params(Rng& rng) {
    auto he = [&](Layer& L, int fan_in) {
        rng.fill_normal(L.w, 0.0, std::sqrt(2.0 / static_cast<real>(fan_in)));
        L.b.zero();
    };
    he(enc1_, 1 * 27);
    he(enc2_, 32 * 27);
    he(enc3_, 64);
    he(latent_mu_, 128);
    he(latent_ls_, 128);
    he(dec_lin_, spec_.latent_dim);
    he(dec_conv_, 128 * 27);
    he(dec_t1_, 128 * 27);
    he(dec_t2_, 128);
    he(dec_t3_, 64);
    he(recon_mu_, 32);
    he(recon_ls_, 32);
}

std::vector<NamedParam> KernelVAE::encoder_params() {
    return {
        {"enc1.w", &enc1_.w, &enc1_.gw},           {"enc1.b", &enc1_.b, &enc1_.gb},
        {"enc2.w", &enc2_.w, &enc2_.gw},           {"enc2.b", &enc2_.b, &enc2_.gb},
        {"enc3.w", &enc3_.w, &enc3_.gw},           {"enc3.b", &enc3_.b, &enc3_.gb},
        {"latent_mu.w", &latent_mu_.w, &latent_mu_.gw}, {"latent_mu.b", &latent_mu_.b, &latent_mu_.gb},
        {"latent_ls.w", &latent_ls_.w, &latent_ls_.gw}, {"latent_ls.b", &latent_ls_.b, &latent_ls_.gb},
    };
}

std::vector<NamedParam> KernelVAE::decoder_params() {
    return {
        {"dec_lin.w", &dec_lin_.w, &dec_lin_.gw},   {"dec_lin.b", &dec_lin_.b, &dec_lin_.gb},
        {"dec_conv.w", &dec_conv_.w, &dec_conv_.gw}, {"dec_conv.b", &dec_conv_.b, &dec_conv_.gb},
        {"dec_t1.w", &dec_t1_.w, &dec_t1_.gw},       {"dec_t1.b", &dec_t1_.b, &dec_t1_.gb},
        {"dec_t2.w", &dec_t2_.w, &dec_t2_.gw},       {"dec_t2.b", &dec_t2_.b, &dec_t2_.gb},
        {"dec_t3.w", &dec_t3_.w, &dec_t3_.gw},       {"dec_t3.b", &dec_t3_.b, &dec_t3_.gb},
        {"recon_mu.w", &recon_mu_.w, &recon_mu_.gw}, {"recon_mu.b", &recon_mu_.b, &recon_mu_.gb},
        {"recon_ls.w", &recon_ls_.w, &recon_ls_.gw}, {"recon_ls.b", &recon_ls_.b, &recon_ls_.gb},
    };
}

std::vector<NamedParam> KernelVAE::all_params() {
    auto ps = encoder_params();
    auto ds = decoder_params();
    ps.insert(ps.end(), ds.begin(), ds.end());
    return ps;
}

void KernelVAE::zero_grad() {
    for (auto& p : all_params()) p.grad->zero();
}

KernelVAE::Codes KernelVAE::encode(const Tensor& kernels, bool grad) {
    if (kernels.ndim() != 5 || kernels.dim(1) != 1 || kernels.dim(2) != 3 || kernels.dim(3) != 3 ||
        kernels.dim(4) != 3)
        throw std::invalid_argument("encode: expected [n,1,3,3,3] kernels, got " + shape_str(kernels));

    auto ctx = std::make_unique<EncodeCtx>();
    Conv3dSpec k3{3, 1, 1}, k1{1, 1, 0};

    Tensor y = conv3d_forward(kernels, enc1_.w, &enc1_.b, k3);          // [n,32,3,3,3]
    y = maxpool3d_forward(y, grad ? &ctx->pool1 : nullptr);             // [n,32,2,2,2]
    Tensor a1 = elu_forward(y);
    y = conv3d_forward(a1, enc2_.w, &enc2_.b, k3);                      // [n,64,2,2,2]
    y = maxpool3d_forward(y, grad ? &ctx->pool2 : nullptr);             // [n,64,1,1,1]
    Tensor a2 = elu_forward(y);
    y = conv3d_forward(a2, enc3_.w, &enc3_.b, k1);                      // [n,128,1,1,1]
    Tensor a3 = elu_forward(y);
    Tensor flat = a3;
    flat.reshape({a3.dim(0), 128});

    Codes out;
    out.mu = linear_forward(flat, latent_mu_.w, &latent_mu_.b);
    out.log_sigma = linear_forward(flat, latent_ls_.w, &latent_ls_.b);
    if (grad) {
        ctx->x = kernels;
        ctx->a1 = std::move(a1);
        ctx->a2 = std::move(a2);
        ctx->a3 = std::move(a3);
        ctx->flat = std::move(flat);
        enc_ctx_ = std::move(ctx);
    }
    return out;
}

Tensor KernelVAE::encode_backward(const Tensor& grad_mu, const Tensor& grad_log_sigma) {
    if (!enc_ctx_) throw std::logic_error("encode_backward: no cached forward");
    EncodeCtx& ctx = *enc_ctx_;
    Conv3dSpec k3{3, 1, 1}, k1{1, 1, 0};

    Tensor g_flat({ctx.flat.dim(0), ctx.flat.dim(1)});
    linear_backward(ctx.flat, latent_mu_.w, grad_mu, &g_flat, &latent_mu_.gw, &latent_mu_.gb);
    linear_backward(ctx.flat, latent_ls_.w, grad_log_sigma, &g_flat, &latent_ls_.gw, &latent_ls_.gb);

    g_flat.reshape(ctx.a3.dims);
    Tensor g = elu_backward(ctx.a3, g_flat);
    Tensor g_a2(ctx.a2.dims);
    conv3d_backward(ctx.a2, enc3_.w, k1, g, &g_a2, &enc3_.gw, &enc3_.gb);
    g = elu_backward(ctx.a2, g_a2);
    g = maxpool3d_backward(ctx.pool2, g);
    Tensor g_a1(ctx.a1.dims);
    conv3d_backward(ctx.a1, enc2_.w, k3, g, &g_a1, &enc2_.gw, &enc2_.gb);
    g = elu_backward(ctx.a1, g_a1);
    g = maxpool3d_backward(ctx.pool1, g);
    Tensor g_x(ctx.x.dims);
    conv3d_backward(ctx.x, enc1_.w, k3, g, &g_x, &enc1_.gw, &enc1_.gb);
    enc_ctx_.reset();
    return g_x;
}

KernelVAE::Recon KernelVAE::decode(const Tensor& z, bool grad) {
    if (z.ndim() != 2 || z.dim(1) != spec_.latent_dim)
        throw std::invalid_argument("decode: expected [n," + std::to_string(spec_.latent_dim) +
                                    "] latents, got " + shape_str(z));
    auto ctx = std::make_unique<DecodeCtx>();
    Conv3dSpec k3{3, 1, 1};

    Tensor f = linear_forward(z, dec_lin_.w, &dec_lin_.b);  // [n,128]
    f.reshape({z.dim(0), 128, 1, 1, 1});
    Tensor y = conv3d_forward(f, dec_conv_.w, &dec_conv_.b, k3);  // [n,128,1,1,1]
    Tensor b1 = elu_forward(y);
    y = conv_transpose3d_forward(b1, dec_t1_.w, &dec_t1_.b, 3);   // [n,128,3,3,3]
    Tensor b2 = elu_forward(y);
    y = conv_transpose3d_forward(b2, dec_t2_.w, &dec_t2_.b, 1);   // [n,64,3,3,3]
    Tensor b3 = elu_forward(y);
    y = conv_transpose3d_forward(b3, dec_t3_.w, &dec_t3_.b, 1);   // [n,32,3,3,3]
    Tensor b4 = elu_forward(y);
    Tensor t_mu = tanh_forward(conv_transpose3d_forward(b4, recon_mu_.w, &recon_mu_.b, 1));
    Tensor t_ls = tanh_forward(conv_transpose3d_forward(b4, recon_ls_.w, &recon_ls_.b, 1));

    Recon out;
    out.mu = t_mu;
    out.log_sigma = Tensor(t_ls.dims);
    for (int64_t i = 0; i < t_ls.numel(); ++i)
        out.log_sigma[i] = decoder_log_sigma_from_tanh(t_ls[i]);
    if (grad) {
        ctx->z = z;
        ctx->f = std::move(f);
        ctx->b1 = std::move(b1);
        ctx->b2 = std::move(b2);
        ctx->b3 = std::move(b3);
        ctx->b4 = std::move(b4);
        ctx->t_mu = out.mu;
        ctx->t_ls = std::move(t_ls);
        dec_ctx_ = std::move(ctx);
    }
    return out;
}

Tensor KernelVAE::decode_backward(const Tensor& grad_mu, const Tensor& grad_log_sigma,
                                  bool accumulate_params) {
    if (!dec_ctx_) throw std::logic_error("decode_backward: no cached forward");
    DecodeCtx& ctx = *dec_ctx_;
    Conv3dSpec k3{3, 1, 1};
    auto gw = [&](Layer& L) { return accumulate_params ? &L.gw : nullptr; };
    auto gb = [&](Layer& L) { return accumulate_params ? &L.gb : nullptr; };

    // heads: affine log-sigma map then tanh
    Tensor g_tls(grad_log_sigma.dims);
    const real half_range = 0.5 * (kDecoderLogSigmaHi - kDecoderLogSigmaLo);
    for (int64_t i = 0; i < g_tls.numel(); ++i) g_tls[i] = grad_log_sigma[i] * half_range;
    Tensor g_pre_ls = tanh_backward(ctx.t_ls, g_tls);
    Tensor g_pre_mu = tanh_backward(ctx.t_mu, grad_mu);

    Tensor g_b4(ctx.b4.dims);
    conv_transpose3d_backward(ctx.b4, recon_mu_.w, 1, g_pre_mu, &g_b4, gw(recon_mu_), gb(recon_mu_));
    conv_transpose3d_backward(ctx.b4, recon_ls_.w, 1, g_pre_ls, &g_b4, gw(recon_ls_), gb(recon_ls_));

    Tensor g = elu_backward(ctx.b4, g_b4);
    Tensor g_b3(ctx.b3.dims);
    conv_transpose3d_backward(ctx.b3, dec_t3_.w, 1, g, &g_b3, gw(dec_t3_), gb(dec_t3_));
    g = elu_backward(ctx.b3, g_b3);
    Tensor g_b2(ctx.b2.dims);
    conv_transpose3d_backward(ctx.b2, dec_t2_.w, 1, g, &g_b2, gw(dec_t2_), gb(dec_t2_));
    g = elu_backward(ctx.b2, g_b2);
    Tensor g_b1(ctx.b1.dims);
    conv_transpose3d_backward(ctx.b1, dec_t1_.w, 3, g, &g_b1, gw(dec_t1_), gb(dec_t1_));
    g = elu_backward(ctx.b1, g_b1);
    Tensor g_f(ctx.f.dims);
    conv3d_backward(ctx.f, dec_conv_.w, k3, g, &g_f, gw(dec_conv_), gb(dec_conv_));
    g_f.reshape({ctx.z.dim(0), 128});
    Tensor g_z({ctx.z.dim(0), ctx.z.dim(1)});
    linear_backward(ctx.z, dec_lin_.w, g_f, &g_z, gw(dec_lin_), gb(dec_lin_));
    dec_ctx_.reset();
    return g_z;
}

}  // namespace dwp
