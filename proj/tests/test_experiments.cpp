#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "dwp/errors.hpp"
#include "dwp/experiments.hpp"
#include "dwp/serialize.hpp"

using namespace dwp;
namespace fs = std::filesystem;

namespace {

DomainPreset small_tumor() {
    DomainPreset p = DomainPreset::tumor_like();
    p.shape = {16, 16, 16};
    p.radius_lo = 2.5;
    p.radius_hi = 4.5;
    p.noise_sigma = 0.05;
    return p;
}

NetworkSpec small_net(NetMode mode = NetMode::deterministic) {
    NetworkSpec sp;
    sp.base_widths = {2, 4, 8};
    sp.mode = mode;
    return sp;
}

std::vector<PredictionPair> threshold_pairs(const std::vector<Volume>& vols, real level) {
    std::vector<PredictionPair> pairs;
    for (const auto& v : vols) {
        PredictionPair p;
        p.probs = threshold_mask(v.intensities, level);
        p.target = v.mask;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

}  // namespace

TEST_CASE("synthetic task is separable by plain thresholding") {
    auto vols = generate(small_tumor(), 10, 77);
    MetricReport r = evaluate_pairs(threshold_pairs(vols, 0.5), 0.5);
    CHECK(r.dsc_mean > 0.9);
}

TEST_CASE("loss decreases over the first training steps on a fixed batch") {
    auto vols = generate(small_tumor(), 2, 78);
    UNet net(small_net());
    Rng rng(1);
    he_init(net, rng);

    Adam opt;
    opt.lr = 1e-3;
    std::vector<ParamRef> refs;
    for (auto& L : net.layers()) refs.push_back({&L.w, &L.grad_w});
    opt.add_params(refs);

    Tensor x({2, 1, 16, 16, 16});
    for (int i = 0; i < 2; ++i)
        std::copy(vols[i].intensities.v.begin(), vols[i].intensities.v.end(),
                  x.v.begin() + i * vols[i].intensities.numel());

    std::vector<real> losses;
    for (int step = 0; step < 5; ++step) {
        net.zero_grad();
        Tensor probs = softmax2_forward(net.forward(x, true));
        std::vector<PredictionPair> pairs(2);
        const int64_t sp = probs.numel() / 2;
        for (int i = 0; i < 2; ++i) {
            pairs[i].probs = Tensor(vols[i].mask.dims);
            std::copy(probs.v.begin() + i * sp, probs.v.begin() + (i + 1) * sp,
                      pairs[i].probs.v.begin());
            pairs[i].target = vols[i].mask;
        }
        losses.push_back(combined_loss(pairs));
        auto grads = combined_loss_grad(pairs);
        Tensor gp(probs.dims);
        for (int i = 0; i < 2; ++i)
            std::copy(grads[i].v.begin(), grads[i].v.end(), gp.v.begin() + i * sp);
        net.backward(softmax2_backward(probs, gp));
        opt.step();
    }
    CHECK(losses.back() < losses.front());
}

TEST_CASE("train_deterministic reaches high validation DSC on the toy task") {
    auto vols = generate(small_tumor(), 13, 79);
    std::vector<Volume> train(vols.begin(), vols.begin() + 10);
    std::vector<Volume> val(vols.begin() + 10, vols.end());

    UNet net(small_net());
    Rng init(2);
    he_init(net, init);
    TrainHyperparams hp;
    hp.max_epochs = 40;
    Rng rng(3);
    train_deterministic(net, train, val, hp, rng);
    MetricReport r = evaluate(net, val, 0.5);
    CHECK(r.dsc_mean > 0.8);
}

TEST_CASE("train_deterministic: max_epochs 0 returns the network unchanged") {
    auto vols = generate(small_tumor(), 3, 80);
    UNet net(small_net());
    Rng init(4);
    he_init(net, init);
    std::vector<Tensor> before;
    for (auto& L : net.layers()) before.push_back(L.w);
    TrainHyperparams hp;
    hp.max_epochs = 0;
    Rng rng(5);
    train_deterministic(net, {vols[0], vols[1]}, {vols[2]}, hp, rng);
    size_t i = 0;
    for (auto& L : net.layers()) CHECK(L.w.v == before[i++].v);

    CHECK_THROWS_AS(train_deterministic(net, {}, {vols[2]}, hp, rng), std::invalid_argument);
}

TEST_CASE("frozen middle layers stay bit-identical through training") {
    auto vols = generate(small_tumor(), 5, 81);
    UNet net(small_net());
    Rng init(6);
    he_init(net, init);
    freeze_middle(net);
    CHECK(net.trainable_param_count() < net.param_count());

    std::vector<Tensor> frozen_before;
    for (auto& L : net.layers())
        if (!L.trainable) frozen_before.push_back(L.w);

    TrainHyperparams hp;
    hp.max_epochs = 3;
    Rng rng(7);
    train_deterministic(net, {vols[0], vols[1], vols[2]}, {vols[3]}, hp, rng);

    size_t i = 0;
    for (auto& L : net.layers())
        if (!L.trainable) CHECK(L.w.v == frozen_before[i++].v);
    // the first block did move
    CHECK(net.layer("init_conv").trainable);
}

TEST_CASE("split_indices: disjoint, method-independent, deterministic") {
    for (int split = 0; split < 3; ++split) {
        auto a = split_indices(30, 10, 6, split, 99);
        auto b = split_indices(30, 10, 6, split, 99);
        CHECK(a.test == b.test);
        CHECK(a.train == b.train);
        CHECK(a.val == b.val);

        std::set<int64_t> test_set(a.test.begin(), a.test.end());
        for (int64_t i : a.train) CHECK(test_set.count(i) == 0);
        for (int64_t i : a.val) CHECK(test_set.count(i) == 0);
        CHECK(a.test.size() == 10);
        CHECK(a.train.size() + a.val.size() == 6);
        CHECK(a.val.size() == 1);

        // same test indices regardless of the train size
        auto c = split_indices(30, 10, 3, split, 99);
        CHECK(c.test == a.test);
    }
    auto d0 = split_indices(30, 10, 6, 0, 99);
    auto d1 = split_indices(30, 10, 6, 1, 99);
    CHECK(d0.test != d1.test);
    CHECK_THROWS_AS(split_indices(10, 8, 6, 0, 1), ConfigError);
}

TEST_CASE("run_protocol bookkeeping and determinism (random init)") {
    auto dataset = generate(small_tumor(), 16, 82);
    ExperimentConfig cfg;
    cfg.method = Method::RI;
    cfg.train_sizes = {4};
    cfg.test_size = 6;
    cfg.n_splits = 3;
    cfg.seed = 11;
    cfg.hp.max_epochs = 2;
    cfg.net_spec = small_net();

    RunResult r = run_protocol(cfg, dataset);
    CHECK(r.records.size() == 3);
    REQUIRE(r.aggregates.size() == 1);
    CHECK(r.aggregates[0].n_splits == 3);
    CHECK(r.aggregates[0].method == "ri");
    for (const auto& rec : r.records) CHECK(rec.report.per_image.size() == 6);

    // mean over splits matches the records
    real mean = 0.0;
    for (const auto& rec : r.records) mean += rec.report.dsc_mean;
    mean /= 3.0;
    CHECK(r.aggregates[0].dsc_mean == doctest::Approx(mean).epsilon(1e-12));

    RunResult r2 = run_protocol(cfg, dataset);
    CHECK(std::abs(r2.aggregates[0].dsc_mean - r.aggregates[0].dsc_mean) < 1e-6);
}

TEST_CASE("run_protocol validates prerequisites before training") {
    auto dataset = generate(small_tumor(), 12, 83);
    ExperimentConfig cfg;
    cfg.method = Method::PR;
    cfg.train_sizes = {4};
    cfg.test_size = 6;
    cfg.net_spec = small_net();
    CHECK_THROWS_AS(run_protocol(cfg, dataset), ConfigError);
    cfg.method = Method::DWP;
    CHECK_THROWS_AS(run_protocol(cfg, dataset), ConfigError);
    cfg.method = Method::RI;
    cfg.train_sizes = {100};
    CHECK_THROWS_AS(run_protocol(cfg, dataset), ConfigError);
}

TEST_CASE("run result json round-trip and table format") {
    RunResult r;
    SplitRecord rec;
    rec.method = "ri";
    rec.train_size = 4;
    rec.split = 0;
    rec.report.dsc_mean = 0.74;
    rec.report.dsc_std = 0.01;
    rec.report.iou_mean = 0.6;
    rec.report.iou_std = 0.02;
    rec.report.per_image = {{0.74, 0.59}};
    r.records.push_back(rec);
    Aggregate a;
    a.method = "ri";
    a.train_size = 4;
    a.n_splits = 1;
    a.dsc_mean = 0.74;
    a.dsc_std = 0.013;
    r.aggregates.push_back(a);

    RunResult back = run_result_from_json(run_result_to_json(r));
    CHECK(back.records.size() == 1);
    CHECK(back.records[0].report.dsc_mean == doctest::Approx(0.74));
    CHECK(back.aggregates[0].dsc_std == doctest::Approx(0.013));

    const std::string table = format_table({r});
    CHECK(table.find("0.74 (0.01)") != std::string::npos);
    CHECK(table.find("unet-ri") != std::string::npos);

    CHECK_THROWS_AS(run_result_from_json("{\"schema_version\": 99, \"records\": []}"), VersionError);
    CHECK_THROWS_AS(run_result_from_json("not json"), IoError);
}

TEST_CASE("train_with_restarts produces one snapshot per convergence") {
    auto vols = generate(small_tumor(), 6, 84);
    std::vector<Volume> train(vols.begin(), vols.begin() + 4);
    std::vector<Volume> val(vols.begin() + 4, vols.end());
    UNet net(small_net());
    Rng init(8);
    he_init(net, init);
    TrainHyperparams hp;
    hp.max_epochs = 2;
    Rng rng(9);
    auto snaps = train_with_restarts(net, train, val, hp, 1, rng);
    CHECK(snaps.size() == 2);
    CHECK(snaps[0].weights.size() == net.layers().size());
    // distinct checkpoints
    bool any_diff = false;
    for (size_t i = 0; i < snaps[0].weights.size(); ++i)
        if (snaps[0].weights[i].v != snaps[1].weights[i].v) any_diff = true;
    CHECK(any_diff);
}
