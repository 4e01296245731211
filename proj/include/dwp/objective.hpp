#pragma once

#include <map>
#include <string>
#include <vector>

#include "dwp/data.hpp"
#include "dwp/kernel_bank.hpp"
#include "dwp/kernel_vae.hpp"
#include "dwp/optim.hpp"
#include "dwp/unet.hpp"
#include "dwp/variational.hpp"

namespace dwp {

/// Latent-variable prior seen by the single-slice KL estimator: an encoder
/// r(z|w), a decoder p(w|z) with diagonal Gaussian output, and a standard
/// normal latent prior. Implemented by KernelVAE and by analytic models in
/// tests.
class LatentModel {
public:
    virtual ~LatentModel() = default;
    virtual int w_dim() const = 0;
    virtual int z_dim() const = 0;
    virtual void encode_point(const std::vector<real>& w, std::vector<real>& mu_z,
                              std::vector<real>& ls_z) = 0;
    virtual void decode_point(const std::vector<real>& z, std::vector<real>& mu_w,
                              std::vector<real>& ls_w) = 0;
};

/// Adapter exposing a KernelVAE as a LatentModel (w_dim 27).
class KernelVAEModel : public LatentModel {
public:
    explicit KernelVAEModel(KernelVAE& vae) : vae_(vae) {}
    int w_dim() const override { return 27; }
    int z_dim() const override { return vae_.latent_dim(); }
    void encode_point(const std::vector<real>& w, std::vector<real>& mu_z,
                      std::vector<real>& ls_z) override;
    void decode_point(const std::vector<real>& z, std::vector<real>& mu_w,
                      std::vector<real>& ls_w) override;

private:
    KernelVAE& vae_;
};

/// Single-sample estimate of the KL upper bound for one kernel slice:
/// log q(w^) + log r(z^|w^) - log p(z^) - log p(w^|z^), with w^ and z^ drawn
/// by reparametrization from the supplied noise.
real kl_approx_slice(const GaussianPosterior& post_slice, LatentModel& model, const Tensor& noise_w,
                     const Tensor& noise_z);

/// Learned priors per resolution group plus the explicit Gaussian fallback
/// for layers outside the kernel-3 set. Normalization constants map network
/// kernels into the VAE's Tanh-bounded range.
struct PriorBundle {
    std::map<int, KernelVAE> vaes;
    LayerGroupMap group_map;
    std::map<int, std::pair<real, real>> norm;  // group -> (shift, scale)
    GaussianPrior fallback{0.0, 1.0};

    /// All-fallback bundle (no learned priors).
    static PriorBundle fallback_only(GaussianPrior prior = {0.0, 1.0});

    bool uses_vae(const ConvLayer& layer) const;
    /// Throws ConfigError when a kernel-3 layer has no VAE/group entry while
    /// learned priors are active.
    void check_covers(const SegNet& net) const;
};

void save_bundle(const PriorBundle& bundle, const std::string& path);
PriorBundle load_bundle(const std::string& path);

struct ElboStats {
    real objective = 0.0;  // data_term - kl_term, the maximized quantity
    real data_term = 0.0;  // (N/M) * sum of per-sample log-likelihood surrogate
    real kl_term = 0.0;    // summed single-sample KL estimates
};

/// Approximate ELBO over one minibatch. Samples weights and latent noise from
/// `rng`, so fixing the rng seed fixes the estimate. With do_backward,
/// gradients are accumulated into the posterior (theta) and the VAE encoders
/// (psi); decoder parameters receive none.
ElboStats elbo_approx(SegNet& net, PriorBundle& bundle, const std::vector<const Volume*>& batch,
                      int64_t dataset_size, Rng& rng, bool do_backward);

/// One gradient ascent step on elbo_approx. The optimizer must hold theta and
/// psi only.
ElboStats train_dwp_step(SegNet& net, PriorBundle& bundle, const std::vector<const Volume*>& batch,
                         int64_t dataset_size, Adam& opt, Rng& rng);

struct VaeHyperparams {
    int batch_size = 20;
    real lr0 = 1e-3;
    int plateau_patience = 15;
    real plateau_factor = 0.1;
    real plateau_min_delta = 1e-4;
    real stop_lr = 1e-6;
    int max_epochs = 500;
    int latent_dim = 6;
};

/// Trains a kernel VAE on [n,1,3,3,3] kernels by maximizing the standard VAE
/// bound (Gaussian reconstruction log-density minus KL to the unit normal).
KernelVAE train_vae(const Tensor& kernels, const VaeHyperparams& hp, Rng& rng,
                    std::vector<real>* epoch_losses = nullptr);

/// Mean per-kernel squared error of the deterministic reconstruction
/// (encode mean -> decode mean), plus the mean per-kernel entry variance.
struct ReconReport {
    real mse = 0.0;
    real kernel_variance = 0.0;
};
ReconReport vae_reconstruction_report(KernelVAE& vae, const Tensor& kernels);

/// Builds a full prior bundle from a normalized kernel bank: one VAE per
/// group, trained on that group's kernels.
PriorBundle build_prior_bundle(const KernelBank& normalized_bank, const VaeHyperparams& hp,
                               uint64_t seed, int64_t max_kernels_per_group = 0,
                               std::vector<std::string>* log_lines = nullptr);

}  // namespace dwp
