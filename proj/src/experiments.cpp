#include "dwp/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dwp/errors.hpp"
#include "dwp/serialize.hpp"

namespace dwp {

using json = nlohmann::json;

std::string method_name(Method m) {
    switch (m) {
        case Method::RI: return "ri";
        case Method::PR: return "pr";
        case Method::PRf: return "prf";
        case Method::DWP: return "dwp";
    }
    return "?";
}

Method method_from_name(const std::string& name) {
    if (name == "ri") return Method::RI;
    if (name == "pr") return Method::PR;
    if (name == "prf") return Method::PRf;
    if (name == "dwp") return Method::DWP;
    throw ConfigError("unknown method '" + name + "' (expected ri, pr, prf or dwp)");
}

namespace {

Tensor batch_tensor(const std::vector<Volume>& vols, const std::vector<int64_t>& idx) {
    const Tensor& first = vols[static_cast<size_t>(idx[0])].intensities;
    Tensor x({static_cast<int64_t>(idx.size()), 1, first.dim(0), first.dim(1), first.dim(2)});
    for (size_t i = 0; i < idx.size(); ++i) {
        const Tensor& v = vols[static_cast<size_t>(idx[i])].intensities;
        check_same_shape(v, first, "batch");
        std::copy(v.v.begin(), v.v.end(), x.v.begin() + static_cast<int64_t>(i) * v.numel());
    }
    return x;
}

std::vector<PredictionPair> probs_to_pairs(const Tensor& probs, const std::vector<Volume>& vols,
                                           const std::vector<int64_t>& idx) {
    const int64_t m = probs.dim(0);
    const int64_t sp = probs.numel() / m;
    std::vector<PredictionPair> pairs(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
        auto& p = pairs[static_cast<size_t>(i)];
        const Volume& vol = vols[static_cast<size_t>(idx[static_cast<size_t>(i)])];
        p.probs = Tensor(vol.mask.dims);
        std::copy(probs.v.begin() + i * sp, probs.v.begin() + (i + 1) * sp, p.probs.v.begin());
        p.target = vol.mask;
    }
    return pairs;
}

real eval_loss(UNet& net, const std::vector<Volume>& vols) {
    real acc = 0.0;
    for (const auto& v : vols) {
        Tensor x({1, 1, v.intensities.dim(0), v.intensities.dim(1), v.intensities.dim(2)});
        x.v = v.intensities.v;
        Tensor probs = softmax2_forward(net.forward(x, false));
        PredictionPair p;
        p.probs = Tensor(v.mask.dims);
        p.probs.v = probs.v;
        p.target = v.mask;
        acc += combined_loss({p});
    }
    return acc / static_cast<real>(vols.size());
}

std::vector<Tensor> snapshot_weights(const UNet& net) {
    std::vector<Tensor> ws;
    for (const auto& L : net.layers()) {
        if (net.mode() == NetMode::variational) {
            ws.push_back(L.mu);
            ws.push_back(L.log_sigma);
        } else {
            ws.push_back(L.w);
        }
    }
    return ws;
}

void restore_weights(UNet& net, const std::vector<Tensor>& ws) {
    size_t i = 0;
    for (auto& L : net.layers()) {
        if (net.mode() == NetMode::variational) {
            L.mu = ws[i++];
            L.log_sigma = ws[i++];
        } else {
            L.w = ws[i++];
        }
    }
}

std::vector<std::vector<int64_t>> epoch_batches(int64_t n, int batch_size, Rng& rng) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<std::vector<int64_t>> batches;
    for (int64_t s = 0; s < n; s += batch_size) {
        std::vector<int64_t> b(order.begin() + s,
                               order.begin() + std::min<int64_t>(n, s + batch_size));
        batches.push_back(std::move(b));
    }
    return batches;
}

void log_epoch(const TrainLog& log, const std::string& tag, int epoch, real lr, real train_loss,
               real val_loss) {
    if (!log) return;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "#epoch %s epoch=%d lr=%.3e train_loss=%.6f val_loss=%.6f",
                  tag.c_str(), epoch, lr, train_loss, val_loss);
    log(buf);
}

}  // namespace

void train_deterministic(UNet& net, const std::vector<Volume>& train, const std::vector<Volume>& val,
                         const TrainHyperparams& hp, Rng& rng, const TrainLog& log) {
    if (train.empty() || val.empty())
        throw std::invalid_argument("train_deterministic: empty train or validation set");
    if (hp.max_epochs == 0) return;

    Adam opt;
    opt.lr = hp.lr0;
    std::vector<ParamRef> refs;
    for (auto& L : net.layers())
        if (L.trainable) refs.push_back({&L.w, &L.grad_w});
    opt.add_params(refs);
    PlateauState sched = plateau_init(hp.lr0, hp.plateau_patience, hp.plateau_factor,
                                      hp.plateau_min_delta, hp.stop_lr);

    real best_val = std::numeric_limits<real>::infinity();
    std::vector<Tensor> best = snapshot_weights(net);

    for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
        real train_loss = 0.0;
        auto batches = epoch_batches(static_cast<int64_t>(train.size()), hp.batch_size, rng);
        for (const auto& bidx : batches) {
            net.zero_grad();
            Tensor x = batch_tensor(train, bidx);
            Tensor probs = softmax2_forward(net.forward(x, true));
            auto pairs = probs_to_pairs(probs, train, bidx);
            train_loss += combined_loss(pairs) * static_cast<real>(bidx.size());

            auto grads = combined_loss_grad(pairs);
            Tensor gp(probs.dims);
            const int64_t sp = probs.numel() / probs.dim(0);
            for (size_t i = 0; i < grads.size(); ++i)
                std::copy(grads[i].v.begin(), grads[i].v.end(),
                          gp.v.begin() + static_cast<int64_t>(i) * sp);
            net.backward(softmax2_backward(probs, gp));
            opt.step();
        }
        train_loss /= static_cast<real>(train.size());

        const real val_loss = eval_loss(net, val);
        if (val_loss < best_val) {
            best_val = val_loss;
            best = snapshot_weights(net);
        }
        auto dec = plateau_step(sched, val_loss);
        opt.lr = dec.lr;
        log_epoch(log, "mode=det", epoch, dec.lr, train_loss, val_loss);
        if (dec.stop) break;
    }
    restore_weights(net, best);
}

void train_dwp(UNet& net, PriorBundle& bundle, const std::vector<Volume>& train,
               const std::vector<Volume>& val, const TrainHyperparams& hp, Rng& rng,
               const TrainLog& log) {
    if (train.empty() || val.empty())
        throw std::invalid_argument("train_dwp: empty train or validation set");
    if (net.mode() != NetMode::variational)
        throw std::invalid_argument("train_dwp: network must be variational");
    bundle.check_covers(net);
    if (hp.max_epochs == 0) return;

    Adam opt;
    opt.lr = hp.lr0;
    std::vector<ParamRef> refs;
    for (auto& L : net.layers())
        if (L.trainable) {
            refs.push_back({&L.mu, &L.grad_mu});
            refs.push_back({&L.log_sigma, &L.grad_log_sigma});
        }
    for (auto& [g, vae] : bundle.vaes)
        for (auto& p : vae.encoder_params()) refs.push_back({p.value, p.grad});
    opt.add_params(refs);
    PlateauState sched = plateau_init(hp.lr0, hp.plateau_patience, hp.plateau_factor,
                                      hp.plateau_min_delta, hp.stop_lr);

    const int64_t n = static_cast<int64_t>(train.size());
    real best_val = std::numeric_limits<real>::infinity();
    std::vector<Tensor> best = snapshot_weights(net);

    for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
        real objective = 0.0;
        auto batches = epoch_batches(n, hp.batch_size, rng);
        for (const auto& bidx : batches) {
            std::vector<const Volume*> batch;
            for (int64_t i : bidx) batch.push_back(&train[static_cast<size_t>(i)]);
            auto st = train_dwp_step(net, bundle, batch, n, opt, rng);
            objective += st.objective;
        }
        objective /= static_cast<real>(batches.size());

        net.set_weights_to_mean();
        const real val_loss = eval_loss(net, val);
        if (val_loss < best_val) {
            best_val = val_loss;
            best = snapshot_weights(net);
        }
        auto dec = plateau_step(sched, val_loss);
        opt.lr = dec.lr;
        log_epoch(log, "mode=dwp", epoch, dec.lr, -objective, val_loss);
        if (dec.stop) break;
    }
    restore_weights(net, best);
    net.set_weights_to_mean();
}

MetricReport evaluate(UNet& net, const std::vector<Volume>& test, real threshold, int mc_samples,
                      Rng* rng) {
    if (test.empty()) throw std::invalid_argument("evaluate: empty test set");
    if (net.mode() == NetMode::variational && mc_samples == 0) net.set_weights_to_mean();
    std::vector<PredictionPair> pairs;
    for (const auto& v : test) {
        Tensor x({1, 1, v.intensities.dim(0), v.intensities.dim(1), v.intensities.dim(2)});
        x.v = v.intensities.v;
        PredictionPair p;
        p.target = v.mask;
        if (net.mode() == NetMode::variational && mc_samples > 0) {
            if (!rng) throw std::invalid_argument("evaluate: mc_samples needs an rng");
            Tensor acc(v.mask.dims);
            for (int s = 0; s < mc_samples; ++s) {
                net.sample_all_weights(*rng);
                Tensor probs = softmax2_forward(net.forward(x, false));
                for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += probs[i];
            }
            for (int64_t i = 0; i < acc.numel(); ++i) acc[i] /= static_cast<real>(mc_samples);
            p.probs = std::move(acc);
        } else {
            Tensor probs = softmax2_forward(net.forward(x, false));
            p.probs = Tensor(v.mask.dims);
            p.probs.v = probs.v;
        }
        pairs.push_back(std::move(p));
    }
    return evaluate_pairs(pairs, threshold);
}

std::vector<SourceSnapshot> train_with_restarts(UNet& net, const std::vector<Volume>& train,
                                                const std::vector<Volume>& val,
                                                const TrainHyperparams& hp, int restarts, Rng& rng,
                                                const TrainLog& log) {
    std::vector<SourceSnapshot> snaps;
    for (int cycle = 0; cycle <= restarts; ++cycle) {
        train_deterministic(net, train, val, hp, rng, log);
        SourceSnapshot s;
        s.weights = snapshot_weights(net);
        s.val_dsc = evaluate(net, val, 0.5).dsc_mean;
        snaps.push_back(std::move(s));
        // continue from the converged weights with lr reset to lr0
    }
    return snaps;
}

SplitIndices split_indices(int64_t dataset_size, int test_size, int train_size, int split,
                           uint64_t seed) {
    if (train_size + test_size > dataset_size)
        throw ConfigError("split: train size + test size exceeds dataset size");
    // depends only on (seed, split), never on the method or train size
    Rng rng(derive_seed(seed, "split", split));
    std::vector<int64_t> perm(static_cast<size_t>(dataset_size));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);

    SplitIndices out;
    out.test.assign(perm.begin(), perm.begin() + test_size);
    std::vector<int64_t> sel(perm.begin() + test_size, perm.begin() + test_size + train_size);
    if (sel.size() >= 2) {
        // carve 20% (at least one image) for validation
        const size_t n_val = std::max<size_t>(1, sel.size() / 5);
        out.train.assign(sel.begin(), sel.end() - static_cast<long>(n_val));
        out.val.assign(sel.end() - static_cast<long>(n_val), sel.end());
    } else {
        out.train = sel;
        out.val = sel;
    }
    return out;
}

namespace {

Aggregate aggregate_records(const std::vector<SplitRecord>& records, const std::string& method,
                            int train_size) {
    Aggregate a;
    a.method = method;
    a.train_size = train_size;
    std::vector<real> ds, is;
    for (const auto& r : records)
        if (r.method == method && r.train_size == train_size) {
            ds.push_back(r.report.dsc_mean);
            is.push_back(r.report.iou_mean);
        }
    a.n_splits = static_cast<int>(ds.size());
    if (ds.empty()) return a;
    const real n = static_cast<real>(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
        a.dsc_mean += ds[i];
        a.iou_mean += is[i];
    }
    a.dsc_mean /= n;
    a.iou_mean /= n;
    for (size_t i = 0; i < ds.size(); ++i) {
        a.dsc_std += (ds[i] - a.dsc_mean) * (ds[i] - a.dsc_mean);
        a.iou_std += (is[i] - a.iou_mean) * (is[i] - a.iou_mean);
    }
    a.dsc_std = std::sqrt(a.dsc_std / n);
    a.iou_std = std::sqrt(a.iou_std / n);
    return a;
}

}  // namespace

RunResult run_protocol(const ExperimentConfig& cfg, const std::vector<Volume>& dataset,
                       const TrainLog& log) {
    // validate prerequisites before any training
    if ((cfg.method == Method::PR || cfg.method == Method::PRf) && cfg.source_checkpoint.empty())
        throw ConfigError(method_name(cfg.method) + " requires a source checkpoint");
    if (cfg.method == Method::DWP && cfg.prior_bundle.empty())
        throw ConfigError("dwp requires a prior bundle");
    for (int m : cfg.train_sizes)
        if (m + cfg.test_size > static_cast<int>(dataset.size()))
            throw ConfigError("train size " + std::to_string(m) + " + test size " +
                              std::to_string(cfg.test_size) + " exceeds dataset size " +
                              std::to_string(dataset.size()));

    std::optional<UNet> source;
    if (cfg.method == Method::PR || cfg.method == Method::PRf)
        source.emplace(load_checkpoint(cfg.source_checkpoint));
    if (cfg.method == Method::DWP) (void)load_bundle(cfg.prior_bundle);  // fail fast

    const std::string mname = method_name(cfg.method);
    RunResult result;
    for (int m : cfg.train_sizes) {
        for (int split = 0; split < cfg.n_splits; ++split) {
            auto idx = split_indices(static_cast<int64_t>(dataset.size()), cfg.test_size, m, split,
                                     cfg.seed);
            std::vector<Volume> test, train_set, val_set;
            for (int64_t i : idx.test) test.push_back(dataset[static_cast<size_t>(i)]);
            for (int64_t i : idx.train) train_set.push_back(dataset[static_cast<size_t>(i)]);
            for (int64_t i : idx.val) val_set.push_back(dataset[static_cast<size_t>(i)]);

            const std::string tag = mname + " size=" + std::to_string(m) +
                                    " split=" + std::to_string(split);
            TrainLog tagged;
            if (log)
                tagged = [&log, tag](const std::string& line) { log(line + " run=" + tag); };

            Rng init_rng(derive_seed(cfg.seed, mname + "-init", split));
            Rng train_rng(derive_seed(cfg.seed, mname + "-train-" + std::to_string(m), split));

            SplitRecord rec;
            rec.method = mname;
            rec.train_size = m;
            rec.split = split;

            if (cfg.method == Method::DWP) {
                NetworkSpec sp = cfg.net_spec;
                sp.mode = NetMode::variational;
                UNet net(sp);
                he_init(net, init_rng);
                PriorBundle bundle = load_bundle(cfg.prior_bundle);
                train_dwp(net, bundle, train_set, val_set, cfg.hp, train_rng, tagged);
                rec.report = evaluate(net, test, cfg.threshold, cfg.eval_mc_samples, &train_rng);
            } else {
                NetworkSpec sp = cfg.net_spec;
                sp.mode = NetMode::deterministic;
                UNet net(sp);
                if (cfg.method == Method::RI) {
                    he_init(net, init_rng);
                } else {
                    if (source->spec().base_widths != sp.base_widths)
                        throw ConfigError("source checkpoint widths do not match the run spec");
                    for (size_t i = 0; i < net.layers().size(); ++i)
                        net.layers()[i].w = source->layers()[i].w;
                    if (cfg.method == Method::PRf) {
                        freeze_middle(net);
                        if (log)
                            log("# prf trainable params: " +
                                std::to_string(net.trainable_param_count()) + " of " +
                                std::to_string(net.param_count()));
                    }
                }
                train_deterministic(net, train_set, val_set, cfg.hp, train_rng, tagged);
                rec.report = evaluate(net, test, cfg.threshold);
            }
            result.records.push_back(std::move(rec));
        }
        result.aggregates.push_back(aggregate_records(result.records, mname, m));
    }
    return result;
}

std::string run_result_to_json(const RunResult& r) {
    json j;
    j["schema_version"] = kResultsVersion;
    j["records"] = json::array();
    for (const auto& rec : r.records) {
        json pi = json::array();
        for (const auto& [d, i] : rec.report.per_image) pi.push_back({d, i});
        j["records"].push_back({{"method", rec.method},
                                {"train_size", rec.train_size},
                                {"split", rec.split},
                                {"dsc_mean", rec.report.dsc_mean},
                                {"dsc_std", rec.report.dsc_std},
                                {"iou_mean", rec.report.iou_mean},
                                {"iou_std", rec.report.iou_std},
                                {"per_image", pi}});
    }
    j["aggregates"] = json::array();
    for (const auto& a : r.aggregates)
        j["aggregates"].push_back({{"method", a.method},
                                   {"train_size", a.train_size},
                                   {"n_splits", a.n_splits},
                                   {"dsc_mean", a.dsc_mean},
                                   {"dsc_std", a.dsc_std},
                                   {"iou_mean", a.iou_mean},
                                   {"iou_std", a.iou_std}});
    return j.dump(2);
}

RunResult run_result_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("results file: invalid json: ") + e.what());
    }
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != int(kResultsVersion))
        throw VersionError("results file: unsupported schema version");
    RunResult r;
    for (const auto& rec : j["records"]) {
        SplitRecord s;
        s.method = rec["method"].get<std::string>();
        s.train_size = rec["train_size"].get<int>();
        s.split = rec["split"].get<int>();
        s.report.dsc_mean = rec["dsc_mean"].get<real>();
        s.report.dsc_std = rec["dsc_std"].get<real>();
        s.report.iou_mean = rec["iou_mean"].get<real>();
        s.report.iou_std = rec["iou_std"].get<real>();
        for (const auto& pi : rec["per_image"])
            s.report.per_image.emplace_back(pi[0].get<real>(), pi[1].get<real>());
        r.records.push_back(std::move(s));
    }
    for (const auto& a : j["aggregates"]) {
        Aggregate g;
        g.method = a["method"].get<std::string>();
        g.train_size = a["train_size"].get<int>();
        g.n_splits = a["n_splits"].get<int>();
        g.dsc_mean = a["dsc_mean"].get<real>();
        g.dsc_std = a["dsc_std"].get<real>();
        g.iou_mean = a["iou_mean"].get<real>();
        g.iou_std = a["iou_std"].get<real>();
        r.aggregates.push_back(std::move(g));
    }
    return r;
}

std::string format_table(const std::vector<RunResult>& results) {
    std::vector<std::string> methods;
    std::vector<int> sizes;
    for (const auto& r : results)
        for (const auto& a : r.aggregates) {
            if (std::find(methods.begin(), methods.end(), a.method) == methods.end())
                methods.push_back(a.method);
            if (std::find(sizes.begin(), sizes.end(), a.train_size) == sizes.end())
                sizes.push_back(a.train_size);
        }
    std::sort(sizes.begin(), sizes.end());

    std::ostringstream os;
    os << "DSC (mean over splits, std in parentheses)\n";
    os << "train_size";
    for (const auto& m : methods) os << "\tunet-" << m;
    os << "\n";
    char cell[64];
    for (int s : sizes) {
        os << s;
        for (const auto& m : methods) {
            bool found = false;
            for (const auto& r : results)
                for (const auto& a : r.aggregates)
                    if (a.method == m && a.train_size == s) {
                        std::snprintf(cell, sizeof(cell), "%.2f (%.2f)", a.dsc_mean, a.dsc_std);
                        os << "\t" << cell;
                        found = true;
                    }
            if (!found) os << "\t-";
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace dwp
