#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dwp/nn.hpp"
#include "dwp/rng.hpp"

namespace dwp {

struct KernelVAESpec {
    int latent_dim = 6;
};

/// Named parameter handle used by the optimizer and the checkpoint writer.
struct NamedParam {
    std::string name;
    Tensor* value;
    Tensor* grad;
};

/// Variational autoencoder over single 3x3x3 kernels. Encoder maps
/// [n,1,3,3,3] -> (mu_z, log_sigma_z) of the latent dimension; decoder maps
/// z -> (mu_w, log_sigma_w) with Tanh-bounded heads. The latent prior is a
/// standard normal.
class KernelVAE {
public:
    explicit KernelVAE(const KernelVAESpec& spec = {});
    ~KernelVAE();
    KernelVAE(KernelVAE&&) noexcept;
    KernelVAE& operator=(KernelVAE&&) noexcept;
    KernelVAE(const KernelVAE&) = delete;
    KernelVAE& operator=(const KernelVAE&) = delete;

    int latent_dim() const { return spec_.latent_dim; }
    const KernelVAESpec& spec() const { return spec_; }

    void init_params(Rng& rng);

    /// Encoder parameters (psi): trained both in VAE pretraining and during
    /// target-domain variational inference.
    std::vector<NamedParam> encoder_params();
    /// Decoder parameters (phi): frozen during target-domain training.
    std::vector<NamedParam> decoder_params();
    std::vector<NamedParam> all_params();

    void zero_grad();

    struct Codes {
        Tensor mu;         // [n, latent]
        Tensor log_sigma;  // [n, latent]
    };
    struct Recon {
        Tensor mu;         // [n, 1, 3, 3, 3], in (-1, 1)
        Tensor log_sigma;  // [n, 1, 3, 3, 3], affinely mapped into [-4, 1]
    };

    /// grad=true keeps caches for the matching backward call. Each
    /// encode/decode pair of calls must be matched with its backward before
    /// the next forward.
    Codes encode(const Tensor& kernels, bool grad = false);
    Recon decode(const Tensor& z, bool grad = false);

    /// Backward through the encoder; accumulates psi grads, returns grad wrt
    /// the input kernels.
    Tensor encode_backward(const Tensor& grad_mu, const Tensor& grad_log_sigma);
    /// Backward through the decoder; returns grad wrt z. accumulate_params
    /// false skips phi gradients (they stay untouched).
    Tensor decode_backward(const Tensor& grad_mu, const Tensor& grad_log_sigma,
                           bool accumulate_params);

private:
    struct Layer {
        Tensor w, b, gw, gb;
    };
    Layer make_conv(int cin, int cout, int k);
    Layer make_tconv(int cin, int cout, int k);
    Layer make_linear(int in, int out);

    KernelVAESpec spec_;

    // encoder
    Layer enc1_, enc2_, enc3_;
    Layer latent_mu_, latent_ls_;
    // decoder
    Layer dec_lin_, dec_conv_, dec_t1_, dec_t2_, dec_t3_;
    Layer recon_mu_, recon_ls_;

    struct EncodeCtx;
    struct DecodeCtx;
    std::unique_ptr<EncodeCtx> enc_ctx_;
    std::unique_ptr<DecodeCtx> dec_ctx_;
};

/// log sigma range of the decoder's Tanh-squashed head.
constexpr real kDecoderLogSigmaLo = -4.0;
constexpr real kDecoderLogSigmaHi = 1.0;

inline real decoder_log_sigma_from_tanh(real t) {
    return 0.5 * (kDecoderLogSigmaLo + kDecoderLogSigmaHi) +
           0.5 * (kDecoderLogSigmaHi - kDecoderLogSigmaLo) * t;
}

}  // namespace dwp
