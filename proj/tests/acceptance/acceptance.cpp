// Acceptance suite: runs the pinned structural, oracle and end-to-end checks
// and prints one pass/fail line per criterion. Exit code is the number of
// failed criteria. `--only N` runs a single criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "dwp/data.hpp"
#include "dwp/errors.hpp"
#include "dwp/experiments.hpp"
#include "dwp/kernel_bank.hpp"
#include "dwp/losses.hpp"
#include "dwp/objective.hpp"
#include "dwp/serialize.hpp"
#include "dwp/unet.hpp"
#include "dwp/variational.hpp"
#include "test_util.hpp"
#include "tiny_net.hpp"

using namespace dwp;
namespace fs = std::filesystem;

namespace {

struct Check {
    int id;
    std::string name;
    std::function<bool(std::string&)> run;
};

#define REQUIRE_MSG(cond, msg_expr)                  \
    do {                                             \
        if (!(cond)) {                               \
            std::ostringstream _os;                  \
            _os << msg_expr;                         \
            detail = _os.str();                      \
            return false;                            \
        }                                            \
    } while (0)

// ---- criterion 1: parameter count --------------------------------------

bool c1_param_count(std::string& detail) {
    UNet net(NetworkSpec::paper());
    const int64_t count = net.param_count();
    std::ostringstream os;
    os << "paper-config parameters = " << count;
    detail = os.str();
    return count == 726480;
}

// ---- criterion 2: shape fidelity ----------------------------------------

bool c2_shapes(std::string& detail) {
    // width-independent analytic trace at the paper configuration
    auto tr = trace_shapes(152, 184, 144);
    REQUIRE_MSG((tr.bottleneck == std::array<int64_t, 3>{19, 23, 18}),
                "analytic bottleneck mismatch");

    // real forward at full resolution (toy widths carry the same topology)
    UNet net(NetworkSpec::toy());
    Rng rng(1);
    he_init(net, rng);
    Tensor x({1, 1, 152, 184, 144});
    Rng xr(2);
    xr.fill_normal(x);
    Tensor y = net.forward(x, false);
    const auto& t = net.last_trace();
    std::ostringstream os;
    os << "bottleneck [" << t.bottleneck[0] << "," << t.bottleneck[1] << "," << t.bottleneck[2]
       << "], output [" << y.dim(2) << "," << y.dim(3) << "," << y.dim(4) << "]";
    detail = os.str();
    return t.bottleneck == std::array<int64_t, 3>{19, 23, 18} && y.dim(2) == 152 &&
           y.dim(3) == 184 && y.dim(4) == 144;
}

// ---- criterion 3: metric identity ---------------------------------------

bool c3_metric_identity(std::string& detail) {
    Rng rng(3);
    real worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        Tensor a({64}), b({64});
        for (int64_t i = 0; i < 64; ++i) {
            a[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
            b[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
        }
        const real d = dsc(a, b), j = iou(a, b);
        worst = std::max(worst, std::abs(d - 2.0 * j / (1.0 + j)));
    }
    std::ostringstream os;
    os << "max |DSC - 2IoU/(1+IoU)| = " << worst;
    detail = os.str();
    return worst < 1e-12;
}

// ---- criterion 4: gaussian oracles ---------------------------------------

bool c4_gaussian(std::string& detail) {
    GaussianPosterior p27(Tensor::zeros({27}), Tensor::zeros({27}));
    const real ent = entropy(p27);
    const real lq = log_q(p27, Tensor::zeros({27}));
    GaussianPosterior p1(Tensor::full({1}, 1.0), Tensor::zeros({1}));
    const real kl = gaussian_kl(p1, GaussianPrior{0.0, 1.0});
    std::ostringstream os;
    os << "entropy=" << ent << " logq=" << lq << " kl=" << kl;
    detail = os.str();
    return std::abs(ent - 38.311340) < 1e-6 && std::abs(lq - (-24.811340)) < 1e-6 &&
           std::abs(kl - 0.5) < 1e-6;
}

// ---- criterion 5: KL^approx tightness and bound --------------------------

class LinearGaussianModel : public LatentModel {
public:
    LinearGaussianModel(real a, real v) : a_(a), ls_(0.5 * std::log(v)) {}
    int w_dim() const override { return 1; }
    int z_dim() const override { return 1; }
    void encode_point(const std::vector<real>& w, std::vector<real>& mu_z,
                      std::vector<real>& ls_z) override {
        mu_z = {a_ * w[0]};
        ls_z = {ls_};
    }
    void decode_point(const std::vector<real>& z, std::vector<real>& mu_w,
                      std::vector<real>& ls_w) override {
        mu_w = {z[0]};
        ls_w = {0.0};
    }

private:
    real a_, ls_;
};

constexpr real kTrueKl = 0.0965735903;

struct McStats {
    real mean, se;
};

McStats oracle_stats(LatentModel& model, uint64_t seed, int n = 100000) {
    GaussianPosterior q(Tensor::zeros({1}), Tensor::zeros({1}));
    Rng rng(seed);
    Tensor nw({1}), nz({1});
    real sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        nw[0] = rng.normal();
        nz[0] = rng.normal();
        const real est = kl_approx_slice(q, model, nw, nz);
        sum += est;
        sum2 += est * est;
    }
    McStats st;
    st.mean = sum / n;
    st.se = std::sqrt((sum2 / n - st.mean * st.mean) / n);
    return st;
}

bool c5_kl_bound(std::string& detail) {
    LinearGaussianModel exact(0.5, 0.5);
    auto st = oracle_stats(exact, 2024);
    std::ostringstream os;
    os << "exact-encoder mean=" << st.mean << " (true " << kTrueKl << ")";
    if (std::abs(st.mean - kTrueKl) >= 0.01 * kTrueKl) {
        detail = os.str() + " outside 1%";
        return false;
    }
    Rng mis(77);
    for (int trial = 0; trial < 10; ++trial) {
        const real da = (mis.uniform() < 0.5 ? -1.0 : 1.0) * mis.uniform(0.1, 0.3);
        const real vf = mis.uniform() < 0.5 ? mis.uniform(1.5, 3.0) : mis.uniform(0.3, 0.7);
        LinearGaussianModel wrong(0.5 + da, 0.5 * vf);
        auto ms = oracle_stats(wrong, 1000 + static_cast<uint64_t>(trial));
        if (!(ms.mean - kTrueKl > 3.0 * ms.se)) {
            std::ostringstream bad;
            bad << "mismatch trial " << trial << " not above the bound: mean=" << ms.mean;
            detail = bad.str();
            return false;
        }
    }
    detail = os.str() + "; 10 mismatched encoders strictly above";
    return true;
}

// ---- criterion 6: gradient correctness ------------------------------------

bool c6_gradients(std::string& detail) {
    // combined loss wrt probabilities
    Rng rng(6);
    std::vector<PredictionPair> pairs;
    for (int i = 0; i < 2; ++i) {
        PredictionPair p;
        p.probs = Tensor({40});
        p.target = Tensor({40});
        for (int64_t j = 0; j < 40; ++j) {
            p.probs[j] = 0.05 + 0.9 * rng.uniform();
            p.target[j] = rng.uniform() < 0.3 ? 1.0 : 0.0;
        }
        pairs.push_back(std::move(p));
    }
    auto grads = combined_loss_grad(pairs);
    auto floss = [&]() { return combined_loss(pairs); };
    real worst = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i)
        worst = std::max(worst, test::max_grad_rel_err(floss, pairs[i].probs, grads[i], 5));
    REQUIRE_MSG(worst < 1e-4, "combined_loss grad rel err " << worst);

    // approximate ELBO on a 2-layer toy net, fixed noise
    test::TinySegNet net(2);
    Rng init(31);
    net.init(init);
    for (auto& L : net.layers()) L.log_sigma.fill(-1.5);
    PriorBundle bundle;
    bundle.group_map.groups = {{"tiny.conv_a", 1}, {"tiny.conv_b", 1}};
    {
        KernelVAE vae;
        Rng vr(55);
        vae.init_params(vr);
        bundle.vaes.emplace(1, std::move(vae));
        bundle.norm[1] = {0.02, 1.4};
    }
    DomainPreset preset = DomainPreset::tumor_like();
    preset.shape = {8, 8, 8};
    preset.radius_lo = 1.4;
    preset.radius_hi = 2.2;
    auto vols = generate(preset, 2, 8);
    std::vector<const Volume*> batch{&vols[0], &vols[1]};
    const uint64_t seed = 999;
    auto felbo = [&]() {
        Rng r(seed);
        return elbo_approx(net, bundle, batch, 3, r, false).objective;
    };
    net.zero_grad();
    bundle.vaes.at(1).zero_grad();
    Rng r(seed);
    elbo_approx(net, bundle, batch, 3, r, true);
    real worst_elbo = 0.0;
    for (auto& L : net.layers()) {
        Tensor neg_mu(L.grad_mu.dims), neg_ls(L.grad_log_sigma.dims);
        for (int64_t i = 0; i < neg_mu.numel(); ++i) {
            neg_mu[i] = -L.grad_mu[i];
            neg_ls[i] = -L.grad_log_sigma[i];
        }
        const int64_t stride = std::max<int64_t>(1, L.mu.numel() / 8);
        worst_elbo = std::max(worst_elbo, test::max_grad_rel_err(felbo, L.mu, neg_mu, stride));
        worst_elbo =
            std::max(worst_elbo, test::max_grad_rel_err(felbo, L.log_sigma, neg_ls, stride));
    }
    std::ostringstream os;
    os << "combined_loss rel err " << worst << ", elbo rel err " << worst_elbo;
    detail = os.str();
    return worst_elbo < 1e-4;
}

// ---- criterion 7: scheduler traces ----------------------------------------

std::vector<int> schedule_drops(const std::vector<real>& losses, std::vector<real>* lrs = nullptr,
                                int* stop_epoch = nullptr) {
    PlateauState st = plateau_init(1e-3, 10, 0.1, 1e-4, 1e-6);
    std::vector<int> drops;
    for (size_t i = 0; i < losses.size(); ++i) {
        auto dec = plateau_step(st, losses[i]);
        if (dec.dropped) {
            drops.push_back(static_cast<int>(i) + 1);
            if (lrs) lrs->push_back(dec.lr);
        }
        if (dec.stop && stop_epoch && *stop_epoch < 0) *stop_epoch = static_cast<int>(i) + 1;
    }
    return drops;
}

bool c7_scheduler(std::string& detail) {
    // flat stream
    std::vector<real> lrs;
    int stop = -1;
    auto drops = schedule_drops(std::vector<real>(40, 1.0), &lrs, &stop);
    REQUIRE_MSG((drops == std::vector<int>{11, 22, 33}), "flat stream drops wrong");
    REQUIRE_MSG(stop == 33, "flat stream stop epoch " << stop);
    REQUIRE_MSG(std::abs(lrs[0] - 1e-4) < 1e-15 && std::abs(lrs[1] - 1e-5) < 1e-16 &&
                    std::abs(lrs[2] - 1e-6) < 1e-17,
                "lr sequence wrong");

    // strictly improving
    std::vector<real> improving;
    for (int i = 0; i < 100; ++i) improving.push_back(1.0 - 0.01 * i);
    REQUIRE_MSG(schedule_drops(improving).empty(), "improving stream dropped");

    // noisy flat: oscillation below min_delta
    std::vector<real> noisy;
    for (int i = 0; i < 40; ++i) noisy.push_back(1.0 + 4e-5 * std::sin(0.8 * i));
    REQUIRE_MSG((schedule_drops(noisy) == std::vector<int>{11, 22, 33}), "noisy-flat drops wrong");

    // NaN stream counts as no improvement
    std::vector<real> nans(40, std::nan(""));
    nans[0] = 1.0;
    REQUIRE_MSG((schedule_drops(nans) == std::vector<int>{11, 22, 33}), "nan stream drops wrong");

    // staircase: improvement every 12 epochs
    std::vector<real> stair;
    real level = 1.0;
    for (int i = 0; i < 24; ++i) {
        if (i % 12 == 0) level -= 0.01;
        stair.push_back(level);
    }
    REQUIRE_MSG((schedule_drops(stair) == std::vector<int>{11, 23}), "staircase drops wrong");

    detail = "5 canned streams reproduced exactly";
    return true;
}

// ---- criterion 8: frozen-parameter guarantees ------------------------------

bool c8_frozen(std::string& detail) {
    DomainPreset preset = DomainPreset::tumor_like();
    preset.shape = {12, 12, 12};
    preset.radius_lo = 2.0;
    preset.radius_hi = 4.0;
    auto vols = generate(preset, 8, 18);
    std::vector<Volume> train(vols.begin(), vols.begin() + 5);
    std::vector<Volume> val(vols.begin() + 5, vols.end());
    NetworkSpec sp;
    sp.base_widths = {2, 4, 8};

    // PRf: middle layers bit-identical after a full training run
    UNet net(sp);
    Rng init(21);
    he_init(net, init);
    freeze_middle(net);
    std::vector<Tensor> frozen;
    for (auto& L : net.layers())
        if (!L.trainable) frozen.push_back(L.w);
    TrainHyperparams hp;
    hp.max_epochs = 6;
    Rng rng(22);
    train_deterministic(net, train, val, hp, rng);
    size_t fi = 0;
    bool moved_any = false;
    for (auto& L : net.layers()) {
        if (!L.trainable)
            REQUIRE_MSG(L.w.v == frozen[fi++].v, "frozen layer " << L.id << " changed");
        else if (L.id == "init_conv")
            moved_any = true;
    }
    REQUIRE_MSG(moved_any, "no trainable layer found");

    // DWP: decoder parameters bit-identical after a full training run
    NetworkSpec vsp = sp;
    vsp.mode = NetMode::variational;
    UNet vnet(vsp);
    Rng vinit(23);
    he_init(vnet, vinit);
    UNet source(sp);
    Rng sinit(24);
    he_init(source, sinit);
    KernelBank bank = normalize(collect(source, resolution_group_map(), "acc"));
    VaeHyperparams vhp;
    vhp.max_epochs = 2;
    vhp.batch_size = 4;
    PriorBundle bundle = build_prior_bundle(bank, vhp, 25, 64);
    std::vector<Tensor> phi;
    for (auto& [g, vae] : bundle.vaes)
        for (auto& p : vae.decoder_params()) phi.push_back(*p.value);
    hp.max_epochs = 3;
    Rng drng(26);
    train_dwp(vnet, bundle, train, val, hp, drng);
    size_t pi = 0;
    for (auto& [g, vae] : bundle.vaes)
        for (auto& p : vae.decoder_params())
            REQUIRE_MSG(p.value->v == phi[pi++].v, "decoder param " << p.name << " changed");

    detail = "PRf middle layers and DWP decoders bit-identical";
    return true;
}

// ---- criterion 9: serialization ------------------------------------------

bool c9_serialization(std::string& detail) {
    const fs::path dir = fs::temp_directory_path() / "dwp_acceptance_io";
    fs::create_directories(dir);
    auto read_all = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::vector<char>((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
    };

    // checkpoint
    NetworkSpec sp = NetworkSpec::toy(NetMode::variational);
    UNet net(sp);
    Rng rng(31);
    he_init(net, rng);
    save_checkpoint(net, (dir / "a.dwpc").string());
    UNet loaded = load_checkpoint((dir / "a.dwpc").string());
    save_checkpoint(loaded, (dir / "b.dwpc").string());
    REQUIRE_MSG(read_all(dir / "a.dwpc") == read_all(dir / "b.dwpc"), "checkpoint not bit-exact");

    // bank
    UNet det(NetworkSpec::toy());
    Rng rng2(32);
    he_init(det, rng2);
    KernelBank bank = normalize(collect(det, resolution_group_map(), "acc"));
    save_bank(bank, (dir / "a.dwpb").string());
    KernelBank lbank = load_bank((dir / "a.dwpb").string());
    save_bank(lbank, (dir / "b.dwpb").string());
    REQUIRE_MSG(read_all(dir / "a.dwpb") == read_all(dir / "b.dwpb"), "bank not bit-exact");

    // bundle
    PriorBundle bundle;
    bundle.group_map = resolution_group_map();
    for (int g = 1; g <= 2; ++g) {
        KernelVAE vae;
        Rng vr(40 + static_cast<uint64_t>(g));
        vae.init_params(vr);
        bundle.vaes.emplace(g, std::move(vae));
        bundle.norm[g] = {0.01, 1.1};
    }
    save_bundle(bundle, (dir / "a.dwpp").string());
    PriorBundle lb = load_bundle((dir / "a.dwpp").string());
    save_bundle(lb, (dir / "b.dwpp").string());
    REQUIRE_MSG(read_all(dir / "a.dwpp") == read_all(dir / "b.dwpp"), "bundle not bit-exact");

    // volume
    auto vols = generate(DomainPreset::tumor_like(), 1, 33);
    save_volume(vols[0], (dir / "a.dwpv").string());
    Volume lv = load_volume((dir / "a.dwpv").string());
    save_volume(lv, (dir / "b.dwpv").string());
    REQUIRE_MSG(read_all(dir / "a.dwpv") == read_all(dir / "b.dwpv"), "volume not bit-exact");

    // corrupted headers raise typed errors
    auto corrupt = [&](const char* magic) {
        std::ofstream out(dir / "bad.bin", std::ios::binary);
        out.write(magic, 4);
        uint32_t v = 77;
        out.write(reinterpret_cast<const char*>(&v), 4);
    };
    int caught = 0;
    corrupt("DWPC");
    try {
        load_checkpoint((dir / "bad.bin").string());
    } catch (const VersionError&) {
        ++caught;
    }
    corrupt("XXXX");
    try {
        load_bank((dir / "bad.bin").string());
    } catch (const VersionError&) {
        ++caught;
    }
    corrupt("DWPP");
    try {
        load_bundle((dir / "bad.bin").string());
    } catch (const VersionError&) {
        ++caught;
    }
    corrupt("DWPV");
    try {
        load_volume((dir / "bad.bin").string());
    } catch (const VersionError&) {
        ++caught;
    }
    fs::remove_all(dir);
    REQUIRE_MSG(caught == 4, "typed corruption errors missing (" << caught << "/4)");
    detail = "checkpoint, bank, bundle, volume bit-exact; corrupt headers rejected";
    return true;
}

// ---- criterion 10: prior quality ------------------------------------------

Tensor oriented_blob_bank(int n, uint64_t seed) {
    // axis-aligned anisotropic Gaussian bumps with signed amplitude: the
    // family has ~6 degrees of freedom (center, two widths, amplitude)
    Rng rng(seed);
    Tensor kernels({n, 1, 3, 3, 3});
    for (int i = 0; i < n; ++i) {
        const real cd = rng.uniform(0.7, 1.3), ch = rng.uniform(0.7, 1.3),
                   cw = rng.uniform(0.7, 1.3);
        const real sa = rng.uniform(0.55, 1.1);  // width in d and h
        const real sb = rng.uniform(0.55, 1.1);  // width in w
        const real amp = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 0.9);
        for (int d = 0; d < 3; ++d)
            for (int h = 0; h < 3; ++h)
                for (int w = 0; w < 3; ++w) {
                    const real dd = (d - cd) / sa, dh = (h - ch) / sa, dw = (w - cw) / sb;
                    kernels[((int64_t(i)) * 27) + d * 9 + h * 3 + w] =
                        amp * std::exp(-0.5 * (dd * dd + dh * dh + dw * dw));
                }
    }
    return kernels;
}

bool c10_prior_quality(std::string& detail) {
    Tensor kernels = oriented_blob_bank(320, 101);
    VaeHyperparams hp;
    hp.max_epochs = 220;
    Rng rng(102);
    KernelVAE vae = train_vae(kernels, hp, rng);
    auto rep = vae_reconstruction_report(vae, kernels);
    std::ostringstream os;
    os << "recon mse " << rep.mse << " vs 0.1 * kernel variance "
       << 0.1 * rep.kernel_variance;
    detail = os.str();
    return rep.mse < 0.1 * rep.kernel_variance;
}

// ---- criterion 11: end-to-end soft ordering --------------------------------

bool c11_end_to_end(std::string& detail) {
    const uint64_t seed = 42;

    // source domain: 40 volumes, two networks, one cyclical restart each
    auto source = generate(DomainPreset::ms_like(), 40, derive_seed(seed, "source-data"));
    std::vector<Volume> src_train(source.begin(), source.end() - 4);
    std::vector<Volume> src_val(source.end() - 4, source.end());

    NetworkSpec spec = NetworkSpec::toy();
    TrainHyperparams src_hp;
    src_hp.max_epochs = 10;

    std::vector<KernelBank> banks;
    for (int i = 0; i < 2; ++i) {
        UNet net(spec);
        Rng init(derive_seed(seed, "src-init", i));
        he_init(net, init);
        Rng rng(derive_seed(seed, "src-train", i));
        auto snaps = train_with_restarts(net, src_train, src_val, src_hp, 1, rng);
        for (size_t c = 0; c < snaps.size(); ++c) {
            UNet snap(spec);
            size_t k = 0;
            for (auto& L : snap.layers()) L.w = snaps[c].weights[k++];
            banks.push_back(collect(snap, resolution_group_map(),
                                    "src" + std::to_string(i) + "c" + std::to_string(c)));
        }
    }
    KernelBank bank = normalize(merge(banks));
    VaeHyperparams vhp;
    vhp.max_epochs = 30;
    PriorBundle bundle = build_prior_bundle(bank, vhp, derive_seed(seed, "prior"), 400);

    const fs::path dir = fs::temp_directory_path() / "dwp_acceptance_e2e";
    fs::create_directories(dir);
    const std::string bundle_path = (dir / "prior.dwpp").string();
    save_bundle(bundle, bundle_path);

    // target domain: train size 4, fixed test size 20, three splits
    auto target = generate(DomainPreset::tumor_like(), 30, derive_seed(seed, "target-data"));
    ExperimentConfig cfg;
    cfg.train_sizes = {4};
    cfg.test_size = 20;
    cfg.n_splits = 3;
    cfg.seed = seed;
    cfg.hp.max_epochs = 20;
    cfg.net_spec = spec;

    cfg.method = Method::RI;
    RunResult ri = run_protocol(cfg, target);
    cfg.method = Method::DWP;
    cfg.prior_bundle = bundle_path;
    RunResult dwp = run_protocol(cfg, target);
    fs::remove_all(dir);

    const real ri_dsc = ri.aggregates.at(0).dsc_mean;
    const real dwp_dsc = dwp.aggregates.at(0).dsc_mean;
    std::ostringstream os;
    os << "mean DSC over 3 splits: dwp=" << dwp_dsc << " ri=" << ri_dsc
       << " (require dwp >= ri - 0.02)";
    detail = os.str();
    return dwp_dsc >= ri_dsc - 0.02;
}

}  // namespace

int main(int argc, char** argv) {
    int only = -1;
    for (int i = 1; i < argc; ++i)
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);

    std::vector<Check> checks = {
        {1, "architecture fidelity (726480 parameters)", c1_param_count},
        {2, "shape fidelity ([152,184,144] -> [19,23,18] -> [152,184,144])", c2_shapes},
        {3, "metric identity (DSC = 2IoU/(1+IoU), 1000 pairs)", c3_metric_identity},
        {4, "gaussian oracles (entropy, log-density, KL)", c4_gaussian},
        {5, "KL^approx tightness and upper bound", c5_kl_bound},
        {6, "gradient correctness (finite differences)", c6_gradients},
        {7, "plateau scheduler traces", c7_scheduler},
        {8, "frozen-parameter guarantees (PRf middle, DWP decoder)", c8_frozen},
        {9, "serialization round trips and typed errors", c9_serialization},
        {10, "prior quality (VAE reconstruction on a structured bank)", c10_prior_quality},
        {11, "end-to-end ordering (DWP vs RI on the synthetic benchmark)", c11_end_to_end},
    };

    int failures = 0;
    for (auto& c : checks) {
        if (only > 0 && c.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = false;
        try {
            ok = c.run(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] criterion %2d: %s - %s (%.1fs)\n", ok ? "PASS" : "FAIL", c.id,
                    c.name.c_str(), detail.c_str(), secs);
        std::fflush(stdout);
        if (!ok) ++failures;
    }
    return failures;
}
