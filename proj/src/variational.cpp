#include "dwp/variational.hpp"

#include <cmath>
#include <stdexcept>

namespace dwp {

namespace {
constexpr real kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)
}

GaussianPosterior::GaussianPosterior(Tensor mu_, Tensor log_sigma_)
    : mu(std::move(mu_)), log_sigma(std::move(log_sigma_)) {
    check_same_shape(mu, log_sigma, "GaussianPosterior");
}

Tensor sample_weights(const GaussianPosterior& post, const Tensor& noise) {
    check_same_shape(post.mu, noise, "sample_weights");
    Tensor w(post.mu.dims);
    const int64_t n = w.numel();
    for (int64_t i = 0; i < n; ++i) {
        real sigma = std::exp(clamp_log_sigma(post.log_sigma[i]));
        w[i] = post.mu[i] + sigma * noise[i];
    }
    return w;
}

real log_q(const GaussianPosterior& post, const Tensor& w) {
    check_same_shape(post.mu, w, "log_q");
    const int64_t n = w.numel();
    real acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        real ls = clamp_log_sigma(post.log_sigma[i]);
        real z = (w[i] - post.mu[i]) * std::exp(-ls);
        acc += -ls - 0.5 * kLog2Pi - 0.5 * z * z;
    }
    return acc;
}

real entropy(const GaussianPosterior& post) {
    real acc = 0.0;
    for (int64_t i = 0; i < post.numel(); ++i)
        acc += clamp_log_sigma(post.log_sigma[i]) + 0.5 * (1.0 + kLog2Pi);
    return acc;
}

void log_q_grad(const GaussianPosterior& post, const Tensor& w, Tensor* grad_mu,
                Tensor* grad_log_sigma) {
    check_same_shape(post.mu, w, "log_q_grad");
    for (int64_t i = 0; i < w.numel(); ++i) {
        const real ls = clamp_log_sigma(post.log_sigma[i]);
        const real z = (w[i] - post.mu[i]) * std::exp(-ls);
        if (grad_mu) (*grad_mu)[i] = z * std::exp(-ls);
        if (grad_log_sigma) (*grad_log_sigma)[i] = -1.0 + z * z;
    }
}

real gaussian_kl(const GaussianPosterior& post, const GaussianPrior& prior) {
    if (!(prior.sigma0 > 0.0)) throw std::invalid_argument("gaussian_kl: sigma0 must be positive");
    const real log_s0 = std::log(prior.sigma0);
    const real inv_2v0 = 0.5 / (prior.sigma0 * prior.sigma0);
    real acc = 0.0;
    for (int64_t i = 0; i < post.numel(); ++i) {
        real ls = clamp_log_sigma(post.log_sigma[i]);
        real var = std::exp(2.0 * ls);
        real dm = post.mu[i] - prior.mu0;
        acc += (log_s0 - ls) + (var + dm * dm) * inv_2v0 - 0.5;
    }
    return acc;
}

}  // namespace dwp
