#pragma once

#include "dwp/tensor.hpp"

namespace dwp {

/// Mean-field Gaussian over one layer's kernel tensor. The distribution
/// factorizes per entry, so per-slice quantities are sums over the slice's
/// entries. Scale is parametrized as log sigma (unconstrained).
struct GaussianPosterior {
    Tensor mu;
    Tensor log_sigma;

    GaussianPosterior() = default;
    GaussianPosterior(Tensor mu_, Tensor log_sigma_);

    int64_t numel() const { return mu.numel(); }
};

/// Explicit Gaussian prior used for layers not covered by a learned prior.
struct GaussianPrior {
    real mu0 = 0.0;
    real sigma0 = 1.0;
};

/// Numerical floor/ceiling on log sigma used inside all operations.
constexpr real kLogSigmaMin = -20.0;
constexpr real kLogSigmaMax = 5.0;

inline real clamp_log_sigma(real ls) {
    return ls < kLogSigmaMin ? kLogSigmaMin : (ls > kLogSigmaMax ? kLogSigmaMax : ls);
}

/// w = mu + exp(log_sigma) * noise, elementwise. Noise is supplied by the
/// caller (reparametrization trick).
Tensor sample_weights(const GaussianPosterior& post, const Tensor& noise);

/// Log-density of w under the posterior, summed over entries.
real log_q(const GaussianPosterior& post, const Tensor& w);

/// Differential entropy, summed over entries.
real entropy(const GaussianPosterior& post);

/// Closed-form KL(post || prior) for diagonal Gaussians, summed over entries.
real gaussian_kl(const GaussianPosterior& post, const GaussianPrior& prior);

/// Analytic gradient of log_q wrt (mu, log_sigma), w held fixed.
void log_q_grad(const GaussianPosterior& post, const Tensor& w, Tensor* grad_mu,
                Tensor* grad_log_sigma);

}  // namespace dwp
