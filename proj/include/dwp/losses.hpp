#pragma once

#include <string>
#include <vector>

#include "dwp/tensor.hpp"

namespace dwp {

/// Soft prediction vs binary target for one volume. probs entries in [0,1],
/// target entries in {0,1}, shapes equal.
struct PredictionPair {
    Tensor probs;   // [D, H, W]
    Tensor target;  // [D, H, W]
};

struct MetricReport {
    real dsc_mean = 0.0, dsc_std = 0.0;
    real iou_mean = 0.0, iou_std = 0.0;
    std::vector<std::pair<real, real>> per_image;  // (dsc, iou)

    std::string to_csv() const;
};

constexpr real kProbEps = 1e-7;   // probability clip for cross-entropy
constexpr real kDiceSmooth = 1.0; // additive smoothing in soft Dice

/// Per-voxel mean binary cross-entropy, probabilities clipped to
/// [kProbEps, 1 - kProbEps].
real ce_loss(const PredictionPair& pair);
real ce_loss(const std::vector<PredictionPair>& pairs);  // mean over images

/// Mean over images of (1 - soft DSC), soft DSC smoothed by kDiceSmooth.
real dice_loss(const std::vector<PredictionPair>& pairs);

/// 0.99 * dice + 0.01 * ce.
real combined_loss(const std::vector<PredictionPair>& pairs);
constexpr real kDiceWeight = 0.99;
constexpr real kCeWeight = 0.01;

/// Gradient of combined_loss wrt each pair's probs (same order as input).
std::vector<Tensor> combined_loss_grad(const std::vector<PredictionPair>& pairs);
/// Per-image combined loss values (0.99*(1-softDSC_i) + 0.01*ce_i).
std::vector<real> combined_loss_per_image(const std::vector<PredictionPair>& pairs);

/// Hard Dice similarity coefficient; 1.0 when both masks are empty.
real dsc(const Tensor& pred_mask, const Tensor& target);
/// Hard intersection-over-union; 1.0 when both masks are empty.
real iou(const Tensor& pred_mask, const Tensor& target);

Tensor threshold_mask(const Tensor& probs, real threshold);

/// Per-image dsc/iou from thresholded probabilities; means and population
/// standard deviations over the set.
MetricReport evaluate_pairs(const std::vector<PredictionPair>& pairs, real threshold);

}  // namespace dwp
