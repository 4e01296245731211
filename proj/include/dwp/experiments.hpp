#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dwp/data.hpp"
#include "dwp/losses.hpp"
#include "dwp/objective.hpp"
#include "dwp/optim.hpp"
#include "dwp/unet.hpp"

namespace dwp {

struct TrainHyperparams {
    int batch_size = 2;
    real lr0 = 1e-3;
    int plateau_patience = 10;
    real plateau_factor = 0.1;
    real plateau_min_delta = 1e-4;
    real stop_lr = 1e-6;
    int max_epochs = 500;
};

enum class Method { RI, PR, PRf, DWP };
std::string method_name(Method m);
Method method_from_name(const std::string& name);

using TrainLog = std::function<void(const std::string&)>;

/// Adam + plateau schedule on the combined Dice/CE loss; returns the network
/// at its best validation loss. max_epochs == 0 returns the input unchanged.
void train_deterministic(UNet& net, const std::vector<Volume>& train, const std::vector<Volume>& val,
                         const TrainHyperparams& hp, Rng& rng, const TrainLog& log = {});

/// Variational training against the prior bundle (updates posterior
/// parameters and VAE encoders; decoders stay frozen). Validation uses the
/// posterior mean weights.
void train_dwp(UNet& net, PriorBundle& bundle, const std::vector<Volume>& train,
               const std::vector<Volume>& val, const TrainHyperparams& hp, Rng& rng,
               const TrainLog& log = {});

/// Per-image DSC/IoU on a test set. Variational nets predict with posterior
/// mean weights unless mc_samples > 0, in which case probabilities are
/// averaged over sampled forwards.
MetricReport evaluate(UNet& net, const std::vector<Volume>& test, real threshold,
                      int mc_samples = 0, Rng* rng = nullptr);

/// Trains one network to convergence `1 + restarts` times under cyclical lr
/// resets, snapshotting best-validation weights at each convergence.
struct SourceSnapshot {
    std::vector<Tensor> weights;  // per-layer w
    real val_dsc = 0.0;
};
std::vector<SourceSnapshot> train_with_restarts(UNet& net, const std::vector<Volume>& train,
                                                const std::vector<Volume>& val,
                                                const TrainHyperparams& hp, int restarts, Rng& rng,
                                                const TrainLog& log = {});

struct ExperimentConfig {
    Method method = Method::RI;
    std::vector<int> train_sizes{5, 10, 15, 20};
    int test_size = 50;
    int n_splits = 3;
    uint64_t seed = 0;
    std::string source_checkpoint;  // PR / PRf
    std::string prior_bundle;       // DWP
    TrainHyperparams hp;
    real threshold = 0.5;
    int eval_mc_samples = 0;
    NetworkSpec net_spec = NetworkSpec::toy();
};

/// Index selection for one split: test indices are fixed by (seed, split)
/// alone, so they are identical across methods and train sizes; train and
/// validation are carved from the remaining pool.
struct SplitIndices {
    std::vector<int64_t> test;
    std::vector<int64_t> train;
    std::vector<int64_t> val;
};
SplitIndices split_indices(int64_t dataset_size, int test_size, int train_size, int split,
                           uint64_t seed);

struct SplitRecord {
    std::string method;
    int train_size = 0;
    int split = 0;
    MetricReport report;
};

struct Aggregate {
    std::string method;
    int train_size = 0;
    int n_splits = 0;
    real dsc_mean = 0.0, dsc_std = 0.0;
    real iou_mean = 0.0, iou_std = 0.0;
};

struct RunResult {
    std::vector<SplitRecord> records;
    std::vector<Aggregate> aggregates;
};

/// Full protocol for one method: per (train size, split) select disjoint
/// train/test indices with a split-specific seed, build and train the network
/// for the method, evaluate on the fixed test set, and aggregate across
/// splits. Prerequisites (checkpoint / bundle) are validated before any
/// training starts.
RunResult run_protocol(const ExperimentConfig& cfg, const std::vector<Volume>& dataset,
                       const TrainLog& log = {});

std::string run_result_to_json(const RunResult& r);
RunResult run_result_from_json(const std::string& text);

/// Rows per train size, one column per method, cells "mean (std)".
std::string format_table(const std::vector<RunResult>& results);

}  // namespace dwp
