#include "dwp/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dwp/errors.hpp"
#include "dwp/losses.hpp"
#include "dwp/serialize.hpp"

namespace dwp {

namespace {
constexpr real kLog2Pi = 1.8378770664093454835606594728112;
}

void KernelVAEModel::encode_point(const std::vector<real>& w, std::vector<real>& mu_z,
                                  std::vector<real>& ls_z) {
    Tensor x({1, 1, 3, 3, 3});
    std::copy(w.begin(), w.end(), x.v.begin());
    auto codes = vae_.encode(x, false);
    mu_z.assign(codes.mu.v.begin(), codes.mu.v.end());
    ls_z.assign(codes.log_sigma.v.begin(), codes.log_sigma.v.end());
}

void KernelVAEModel::decode_point(const std::vector<real>& z, std::vector<real>& mu_w,
                                  std::vector<real>& ls_w) {
    Tensor zt({1, static_cast<int64_t>(z.size())});
    std::copy(z.begin(), z.end(), zt.v.begin());
    auto recon = vae_.decode(zt, false);
    mu_w.assign(recon.mu.v.begin(), recon.mu.v.end());
    ls_w.assign(recon.log_sigma.v.begin(), recon.log_sigma.v.end());
}

real kl_approx_slice(const GaussianPosterior& post_slice, LatentModel& model, const Tensor& noise_w,
                     const Tensor& noise_z) {
    if (post_slice.numel() != model.w_dim())
        throw std::invalid_argument("kl_approx_slice: posterior size != model w_dim");
    check_same_shape(post_slice.mu, noise_w, "kl_approx_slice");
    if (noise_z.numel() != model.z_dim())
        throw std::invalid_argument("kl_approx_slice: noise_z size != model z_dim");

    Tensor w_hat = sample_weights(post_slice, noise_w);
    const real logq = log_q(post_slice, w_hat);

    std::vector<real> mu_z, ls_z;
    model.encode_point(w_hat.v, mu_z, ls_z);

    real logr = 0.0, logpz = 0.0;
    std::vector<real> z_hat(mu_z.size());
    for (size_t i = 0; i < z_hat.size(); ++i) {
        const real nz = noise_z[static_cast<int64_t>(i)];
        z_hat[i] = mu_z[i] + std::exp(ls_z[i]) * nz;
        logr += -ls_z[i] - 0.5 * kLog2Pi - 0.5 * nz * nz;
        logpz += -0.5 * kLog2Pi - 0.5 * z_hat[i] * z_hat[i];
    }

    std::vector<real> mu_w, ls_w;
    model.decode_point(z_hat, mu_w, ls_w);
    real logpw = 0.0;
    for (size_t i = 0; i < mu_w.size(); ++i) {
        const real r = (w_hat.v[i] - mu_w[i]) * std::exp(-ls_w[i]);
        logpw += -ls_w[i] - 0.5 * kLog2Pi - 0.5 * r * r;
    }
    return logq + logr - logpz - logpw;
}

PriorBundle PriorBundle::fallback_only(GaussianPrior prior) {
    PriorBundle b;
    b.group_map = resolution_group_map();
    b.fallback = prior;
    return b;
}

bool PriorBundle::uses_vae(const ConvLayer& layer) const {
    if (vaes.empty() || !layer.is_kernel3()) return false;
    auto it = group_map.groups.find(layer.id);
    if (it == group_map.groups.end()) return false;
    return vaes.count(it->second) > 0;
}

void PriorBundle::check_covers(const SegNet& net) const {
    if (vaes.empty()) return;  // fallback-only mode
    for (const auto& L : net.layers()) {
        if (!L.is_kernel3()) continue;
        auto it = group_map.groups.find(L.id);
        if (it == group_map.groups.end())
            throw ConfigError("prior bundle: no group for layer " + L.id);
        if (!vaes.count(it->second))
            throw ConfigError("prior bundle: no VAE for group " + std::to_string(it->second) +
                              " (layer " + L.id + ")");
        if (!norm.count(it->second))
            throw ConfigError("prior bundle: no normalization constants for group " +
                              std::to_string(it->second));
    }
}

namespace {

// Accumulates the sampled KL estimate and its gradients for all slices of
// one group through the group's VAE, batched.
real group_kl_term(PriorBundle& bundle, int group, const std::vector<ConvLayer*>& group_layers,
                   Rng& rng, bool do_backward) {
    KernelVAE& vae = bundle.vaes.at(group);
    const auto [shift, scale] = bundle.norm.at(group);
    if (!(scale > 0.0)) throw std::invalid_argument("prior bundle: scale must be positive");
    const real log_scale = std::log(scale);
    const int zd = vae.latent_dim();

    int64_t n_slices = 0;
    for (auto* L : group_layers) n_slices += int64_t(L->c_out) * L->c_in;

    // normalized sample w^_n = (w^ - shift) * scale; the affine change of
    // variables cancels between log q and log p, so the whole estimate is
    // computed in the normalized space.
    Tensor khat({n_slices, 1, 3, 3, 3});
    real logq = 0.0;
    {
        int64_t off = 0;
        for (auto* L : group_layers) {
            for (int64_t i = 0; i < L->w.numel(); ++i) {
                khat.v[static_cast<size_t>(off + i)] = (L->w[i] - shift) * scale;
                const real ls_n = clamp_log_sigma(L->log_sigma[i]) + log_scale;
                const real n = L->noise[i];
                logq += -ls_n - 0.5 * kLog2Pi - 0.5 * n * n;
            }
            off += L->w.numel();
        }
    }

    auto codes = vae.encode(khat, do_backward);
    Tensor noise_z({n_slices, zd});
    rng.fill_normal(noise_z);

    Tensor z_hat({n_slices, zd});
    real logr = 0.0, logpz = 0.0;
    for (int64_t i = 0; i < z_hat.numel(); ++i) {
        const real ls = codes.log_sigma[i];
        z_hat[i] = codes.mu[i] + std::exp(ls) * noise_z[i];
        logr += -ls - 0.5 * kLog2Pi - 0.5 * noise_z[i] * noise_z[i];
        logpz += -0.5 * kLog2Pi - 0.5 * z_hat[i] * z_hat[i];
    }

    auto recon = vae.decode(z_hat, do_backward);
    real logpw = 0.0;
    for (int64_t i = 0; i < khat.numel(); ++i) {
        const real r = (khat[i] - recon.mu[i]) * std::exp(-recon.log_sigma[i]);
        logpw += -recon.log_sigma[i] - 0.5 * kLog2Pi - 0.5 * r * r;
    }

    const real kl = logq + logr - logpz - logpw;
    if (!do_backward) return kl;

    // backward: d(kl)/d(...) of the loss contribution +kl
    Tensor g_mu_w(recon.mu.dims), g_ls_w(recon.mu.dims), g_khat(khat.dims);
    for (int64_t i = 0; i < khat.numel(); ++i) {
        const real inv_var = std::exp(-2.0 * recon.log_sigma[i]);
        const real diff = khat[i] - recon.mu[i];
        g_mu_w[i] = -diff * inv_var;
        g_ls_w[i] = 1.0 - diff * diff * inv_var;
        g_khat[i] = diff * inv_var;  // direct term of -log p(w|z)
    }
    // decoder is frozen: propagate into z only
    Tensor g_z = vae.decode_backward(g_mu_w, g_ls_w, /*accumulate_params=*/false);

    Tensor g_mu_z({n_slices, zd}), g_ls_z({n_slices, zd});
    for (int64_t i = 0; i < g_z.numel(); ++i) {
        g_z[i] += z_hat[i];  // from -log p(z)
        g_mu_z[i] = g_z[i];
        g_ls_z[i] = g_z[i] * (z_hat[i] - codes.mu[i]) - 1.0;  // chain + d(log r)/d ls_z
    }
    add_inplace(g_khat, vae.encode_backward(g_mu_z, g_ls_z));

    {
        int64_t off = 0;
        for (auto* L : group_layers) {
            if (!L->trainable) {
                off += L->w.numel();
                continue;
            }
            for (int64_t i = 0; i < L->w.numel(); ++i) {
                const real g = g_khat.v[static_cast<size_t>(off + i)];
                L->grad_mu[i] += g * scale;
                // w^_n - mu_n = scale*(w - mu); log q contributes -1 per entry
                L->grad_log_sigma[i] += g * scale * (L->w[i] - L->mu[i]) - 1.0;
            }
            off += L->w.numel();
        }
    }
    return kl;
}

real fallback_kl_term(ConvLayer& L, const GaussianPrior& prior, bool do_backward) {
    const real log_s0 = std::log(prior.sigma0);
    const real inv_v0 = 1.0 / (prior.sigma0 * prior.sigma0);
    real kl = 0.0;
    for (int64_t i = 0; i < L.w.numel(); ++i) {
        const real ls = clamp_log_sigma(L.log_sigma[i]);
        const real n = L.noise[i];
        const real d0 = L.w[i] - prior.mu0;
        kl += (-ls - 0.5 * kLog2Pi - 0.5 * n * n) - (-log_s0 - 0.5 * kLog2Pi - 0.5 * d0 * d0 * inv_v0);
        if (do_backward && L.trainable) {
            L.grad_mu[i] += d0 * inv_v0;
            L.grad_log_sigma[i] += d0 * inv_v0 * (L.w[i] - L.mu[i]) - 1.0;
        }
    }
    return kl;
}

}  // namespace

ElboStats elbo_approx(SegNet& net, PriorBundle& bundle, const std::vector<const Volume*>& batch,
                      int64_t dataset_size, Rng& rng, bool do_backward) {
    if (batch.empty()) throw std::invalid_argument("elbo_approx: empty batch");
    const int64_t m = static_cast<int64_t>(batch.size());
    if (dataset_size < m) throw std::invalid_argument("elbo_approx: dataset size N < batch size M");
    if (net.mode() != NetMode::variational)
        throw std::invalid_argument("elbo_approx: network must be variational");
    bundle.check_covers(net);

    net.sample_all_weights(rng);

    // data term
    const Tensor& first = batch[0]->intensities;
    Tensor x({m, 1, first.dim(0), first.dim(1), first.dim(2)});
    for (int64_t i = 0; i < m; ++i) {
        const Tensor& vol = batch[static_cast<size_t>(i)]->intensities;
        check_same_shape(vol, first, "elbo_approx batch");
        std::copy(vol.v.begin(), vol.v.end(), x.v.begin() + i * vol.numel());
    }
    Tensor logits = net.forward(x, do_backward);
    Tensor probs = softmax2_forward(logits);

    const int64_t sp = probs.numel() / m;
    std::vector<PredictionPair> pairs(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
        auto& p = pairs[static_cast<size_t>(i)];
        p.probs = Tensor({first.dim(0), first.dim(1), first.dim(2)});
        std::copy(probs.v.begin() + i * sp, probs.v.begin() + (i + 1) * sp, p.probs.v.begin());
        p.target = batch[static_cast<size_t>(i)]->mask;
    }
    // Per-sample surrogate log-likelihood: voxel_count * combined loss. The
    // combined loss is per-voxel-mean reduced, so the voxel factor restores
    // likelihood scale (a cross-entropy summed over voxels) while keeping the
    // 0.99/0.01 balance independent of the volume size. Without it the KL
    // term, summed over every kernel slice, swamps the data term and the
    // posterior collapses onto the prior.
    const real scale_n = static_cast<real>(dataset_size) * static_cast<real>(sp);
    const real data_loss = scale_n * combined_loss(pairs);  // (N/M) * sum over batch

    if (do_backward) {
        auto grads = combined_loss_grad(pairs);  // grad of the batch mean
        Tensor gp(probs.dims);
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < sp; ++j)
                gp.v[static_cast<size_t>(i * sp + j)] =
                    scale_n * grads[static_cast<size_t>(i)][j];
        Tensor glogits = softmax2_backward(probs, gp);
        net.backward(glogits);
    }

    // KL term: group kernel-3 layers by their prior group, fallback otherwise
    real kl_sum = 0.0;
    std::map<int, std::vector<ConvLayer*>> grouped;
    for (auto& L : net.layers()) {
        if (bundle.uses_vae(L))
            grouped[bundle.group_map.groups.at(L.id)].push_back(&L);
        else
            kl_sum += fallback_kl_term(L, bundle.fallback, do_backward);
    }
    for (auto& [g, ls] : grouped) kl_sum += group_kl_term(bundle, g, ls, rng, do_backward);

    ElboStats st;
    st.data_term = -data_loss;
    st.kl_term = kl_sum;
    st.objective = st.data_term - st.kl_term;
    return st;
}

ElboStats train_dwp_step(SegNet& net, PriorBundle& bundle, const std::vector<const Volume*>& batch,
                         int64_t dataset_size, Adam& opt, Rng& rng) {
    net.zero_grad();
    for (auto& [g, vae] : bundle.vaes) vae.zero_grad();
    ElboStats st = elbo_approx(net, bundle, batch, dataset_size, rng, true);
    opt.step();
    return st;
}

KernelVAE train_vae(const Tensor& kernels, const VaeHyperparams& hp, Rng& rng,
                    std::vector<real>* epoch_losses) {
    if (kernels.ndim() != 5 || kernels.dim(1) != 1 || kernels.dim(2) != 3)
        throw std::invalid_argument("train_vae: expected [n,1,3,3,3] kernels");
    const int64_t n = kernels.dim(0);
    if (n < 2 * hp.batch_size)
        throw std::invalid_argument("train_vae: need at least 2 batches of kernels, got " +
                                    std::to_string(n));

    KernelVAE vae(KernelVAESpec{hp.latent_dim});
    vae.init_params(rng);
    Adam opt;
    opt.lr = hp.lr0;
    std::vector<ParamRef> refs;
    for (auto& p : vae.all_params()) refs.push_back({p.value, p.grad});
    opt.add_params(refs);
    PlateauState sched = plateau_init(hp.lr0, hp.plateau_patience, hp.plateau_factor,
                                      hp.plateau_min_delta, hp.stop_lr);

    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
        rng.shuffle(order);
        real epoch_loss = 0.0;
        int64_t n_batches = 0;
        for (int64_t start = 0; start + hp.batch_size <= n; start += hp.batch_size) {
            const int64_t b = hp.batch_size;
            Tensor x({b, 1, 3, 3, 3});
            for (int64_t i = 0; i < b; ++i)
                std::copy(kernels.v.begin() + order[static_cast<size_t>(start + i)] * 27,
                          kernels.v.begin() + (order[static_cast<size_t>(start + i)] + 1) * 27,
                          x.v.begin() + i * 27);

            vae.zero_grad();
            auto codes = vae.encode(x, true);
            Tensor noise_z({b, hp.latent_dim});
            rng.fill_normal(noise_z);
            Tensor z({b, hp.latent_dim});
            for (int64_t i = 0; i < z.numel(); ++i)
                z[i] = codes.mu[i] + std::exp(codes.log_sigma[i]) * noise_z[i];
            auto recon = vae.decode(z, true);

            const real inv_b = 1.0 / static_cast<real>(b);
            real recon_nll = 0.0;
            Tensor g_mu_w(recon.mu.dims), g_ls_w(recon.mu.dims);
            for (int64_t i = 0; i < x.numel(); ++i) {
                const real inv_var = std::exp(-2.0 * recon.log_sigma[i]);
                const real diff = x[i] - recon.mu[i];
                recon_nll += recon.log_sigma[i] + 0.5 * kLog2Pi + 0.5 * diff * diff * inv_var;
                g_mu_w[i] = -diff * inv_var * inv_b;
                g_ls_w[i] = (1.0 - diff * diff * inv_var) * inv_b;
            }
            Tensor g_z = vae.decode_backward(g_mu_w, g_ls_w, /*accumulate_params=*/true);

            real kl = 0.0;
            Tensor g_mu_z(codes.mu.dims), g_ls_z(codes.mu.dims);
            for (int64_t i = 0; i < codes.mu.numel(); ++i) {
                const real var = std::exp(2.0 * codes.log_sigma[i]);
                kl += 0.5 * (var + codes.mu[i] * codes.mu[i] - 1.0) - codes.log_sigma[i];
                g_mu_z[i] = g_z[i] + codes.mu[i] * inv_b;
                g_ls_z[i] = g_z[i] * (z[i] - codes.mu[i]) + (var - 1.0) * inv_b;
            }
            vae.encode_backward(g_mu_z, g_ls_z);
            opt.step();

            epoch_loss += (recon_nll + kl) * inv_b;
            ++n_batches;
        }
        epoch_loss /= static_cast<real>(n_batches);
        if (epoch_losses) epoch_losses->push_back(epoch_loss);
        auto dec = plateau_step(sched, epoch_loss);
        opt.lr = dec.lr;
        if (dec.stop) break;
    }
    return vae;
}

ReconReport vae_reconstruction_report(KernelVAE& vae, const Tensor& kernels) {
    const int64_t n = kernels.dim(0);
    auto codes = vae.encode(kernels, false);
    auto recon = vae.decode(codes.mu, false);
    ReconReport rep;
    for (int64_t i = 0; i < n; ++i) {
        real mse = 0.0, mean = 0.0, var = 0.0;
        for (int64_t j = 0; j < 27; ++j) {
            const real x = kernels[i * 27 + j];
            const real d = x - recon.mu[i * 27 + j];
            mse += d * d;
            mean += x;
        }
        mean /= 27.0;
        for (int64_t j = 0; j < 27; ++j) {
            const real d = kernels[i * 27 + j] - mean;
            var += d * d;
        }
        rep.mse += mse / 27.0;
        rep.kernel_variance += var / 27.0;
    }
    rep.mse /= static_cast<real>(n);
    rep.kernel_variance /= static_cast<real>(n);
    return rep;
}

PriorBundle build_prior_bundle(const KernelBank& bank, const VaeHyperparams& hp, uint64_t seed,
                               int64_t max_kernels_per_group, std::vector<std::string>* log_lines) {
    PriorBundle bundle;
    bundle.group_map = resolution_group_map();
    for (const auto& [g, kernels] : bank.groups) {
        if (kernels.dim(0) == 0)
            throw ConfigError("build_prior_bundle: group " + std::to_string(g) + " is empty");
        Tensor train_set = kernels;
        if (max_kernels_per_group > 0 && kernels.dim(0) > max_kernels_per_group) {
            // deterministic subsample
            Rng sub(derive_seed(seed, "subsample", g));
            std::vector<int64_t> idx(static_cast<size_t>(kernels.dim(0)));
            std::iota(idx.begin(), idx.end(), 0);
            sub.shuffle(idx);
            train_set = Tensor({max_kernels_per_group, 1, 3, 3, 3});
            for (int64_t i = 0; i < max_kernels_per_group; ++i)
                std::copy(kernels.v.begin() + idx[static_cast<size_t>(i)] * 27,
                          kernels.v.begin() + (idx[static_cast<size_t>(i)] + 1) * 27,
                          train_set.v.begin() + i * 27);
        }
        Rng rng(derive_seed(seed, "vae", g));
        std::vector<real> losses;
        KernelVAE vae = train_vae(train_set, hp, rng, &losses);
        auto rep = vae_reconstruction_report(vae, train_set);
        if (log_lines)
            log_lines->push_back("group " + std::to_string(g) + ": kernels=" +
                                 std::to_string(train_set.dim(0)) + " epochs=" +
                                 std::to_string(losses.size()) + " recon_mse=" +
                                 std::to_string(rep.mse) + " kernel_var=" +
                                 std::to_string(rep.kernel_variance));
        bundle.vaes.emplace(g, std::move(vae));
        bundle.norm[g] = bank.norm.at(g);
    }
    return bundle;
}

void save_bundle(const PriorBundle& bundle, const std::string& path) {
    BinWriter w(path);
    w.bytes("DWPP", 4);
    w.u32(kBundleVersion);
    w.u32(static_cast<uint32_t>(bundle.group_map.groups.size()));
    for (const auto& [layer, g] : bundle.group_map.groups) {
        w.str(layer);
        w.u32(static_cast<uint32_t>(g));
    }
    w.f64(bundle.fallback.mu0);
    w.f64(bundle.fallback.sigma0);
    w.u32(static_cast<uint32_t>(bundle.vaes.size()));
    for (auto& [g, vae] : const_cast<PriorBundle&>(bundle).vaes) {
        w.u32(static_cast<uint32_t>(g));
        const auto [shift, scale] = bundle.norm.at(g);
        w.f64(shift);
        w.f64(scale);
        w.u32(static_cast<uint32_t>(vae.latent_dim()));
        auto params = vae.all_params();
        w.u32(static_cast<uint32_t>(params.size()));
        for (const auto& p : params) {
            w.str(p.name);
            w.tensor_f32(*p.value);
        }
    }
}

PriorBundle load_bundle(const std::string& path) {
    BinReader r(path);
    r.header("DWPP", kBundleVersion);
    PriorBundle bundle;
    const uint32_t n_map = r.u32();
    for (uint32_t i = 0; i < n_map; ++i) {
        std::string layer = r.str();
        bundle.group_map.groups[layer] = static_cast<int>(r.u32());
    }
    bundle.fallback.mu0 = r.f64();
    bundle.fallback.sigma0 = r.f64();
    const uint32_t n_vaes = r.u32();
    for (uint32_t i = 0; i < n_vaes; ++i) {
        const int g = static_cast<int>(r.u32());
        const real shift = r.f64();
        const real scale = r.f64();
        const int latent = static_cast<int>(r.u32());
        KernelVAE vae(KernelVAESpec{latent});
        const uint32_t n_params = r.u32();
        auto params = vae.all_params();
        for (uint32_t j = 0; j < n_params; ++j) {
            const std::string name = r.str();
            Tensor t = r.tensor_f32();
            bool found = false;
            for (auto& p : params)
                if (p.name == name) {
                    if (p.value->dims != t.dims)
                        throw IoError("bundle '" + path + "': shape mismatch for " + name);
                    *p.value = std::move(t);
                    found = true;
                    break;
                }
            if (!found) throw IoError("bundle '" + path + "': unknown parameter " + name);
        }
        bundle.norm[g] = {shift, scale};
        bundle.vaes.emplace(g, std::move(vae));
    }
    return bundle;
}

}  // namespace dwp
