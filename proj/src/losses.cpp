#include "dwp/losses.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dwp {

namespace {

void check_pair(const PredictionPair& p, const char* what) {
    check_same_shape(p.probs, p.target, what);
    if (p.probs.numel() == 0) throw std::invalid_argument(std::string(what) + ": empty volume");
}

real clip_prob(real p) {
    return p < kProbEps ? kProbEps : (p > 1.0 - kProbEps ? 1.0 - kProbEps : p);
}

struct DiceParts {
    real inter;  // sum p*y
    real total;  // sum p + sum y
};

DiceParts dice_parts(const PredictionPair& pair) {
    DiceParts d{0.0, 0.0};
    const int64_t n = pair.probs.numel();
    for (int64_t i = 0; i < n; ++i) {
        d.inter += pair.probs[i] * pair.target[i];
        d.total += pair.probs[i] + pair.target[i];
    }
    return d;
}

real soft_dice(const DiceParts& d) { return (2.0 * d.inter + kDiceSmooth) / (d.total + kDiceSmooth); }

}  // namespace

std::string MetricReport::to_csv() const {
    std::ostringstream os;
    os.precision(9);
    os << "dsc_mean,dsc_std,iou_mean,iou_std,n_images\n";
    os << dsc_mean << "," << dsc_std << "," << iou_mean << "," << iou_std << "," << per_image.size()
       << "\n";
    os << "image,dsc,iou\n";
    for (size_t i = 0; i < per_image.size(); ++i)
        os << i << "," << per_image[i].first << "," << per_image[i].second << "\n";
    return os.str();
}

real ce_loss(const PredictionPair& pair) {
    check_pair(pair, "ce_loss");
    const int64_t n = pair.probs.numel();
    real acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const real p = clip_prob(pair.probs[i]);
        const real y = pair.target[i];
        acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    return acc / static_cast<real>(n);
}

real ce_loss(const std::vector<PredictionPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("ce_loss: empty batch");
    real acc = 0.0;
    for (const auto& p : pairs) acc += ce_loss(p);
    return acc / static_cast<real>(pairs.size());
}

real dice_loss(const std::vector<PredictionPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("dice_loss: empty batch");
    real acc = 0.0;
    for (const auto& p : pairs) {
        check_pair(p, "dice_loss");
        acc += 1.0 - soft_dice(dice_parts(p));
    }
    return acc / static_cast<real>(pairs.size());
}

real combined_loss(const std::vector<PredictionPair>& pairs) {
    return kDiceWeight * dice_loss(pairs) + kCeWeight * ce_loss(pairs);
}

std::vector<real> combined_loss_per_image(const std::vector<PredictionPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("combined_loss: empty batch");
    std::vector<real> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs)
        out.push_back(kDiceWeight * (1.0 - soft_dice(dice_parts(p))) + kCeWeight * ce_loss(p));
    return out;
}

std::vector<Tensor> combined_loss_grad(const std::vector<PredictionPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("combined_loss_grad: empty batch");
    const real inv_b = 1.0 / static_cast<real>(pairs.size());
    std::vector<Tensor> grads;
    grads.reserve(pairs.size());
    for (const auto& pair : pairs) {
        check_pair(pair, "combined_loss_grad");
        const int64_t n = pair.probs.numel();
        Tensor g(pair.probs.dims);
        const DiceParts d = dice_parts(pair);
        const real denom = d.total + kDiceSmooth;
        const real num = 2.0 * d.inter + kDiceSmooth;
        const real inv_n = 1.0 / static_cast<real>(n);
        for (int64_t i = 0; i < n; ++i) {
            const real y = pair.target[i];
            // d(1 - softDSC)/dp = -(2*y*denom - num) / denom^2
            const real g_dice = -(2.0 * y * denom - num) / (denom * denom);
            const real p = pair.probs[i];
            real g_ce = 0.0;
            if (p > kProbEps && p < 1.0 - kProbEps)
                g_ce = (-y / p + (1.0 - y) / (1.0 - p)) * inv_n;
            g[i] = inv_b * (kDiceWeight * g_dice + kCeWeight * g_ce);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

namespace {

struct Counts {
    int64_t tp = 0, fp = 0, fn = 0;
};

Counts mask_counts(const Tensor& pred, const Tensor& target) {
    check_same_shape(pred, target, "metric");
    Counts c;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const bool p = pred[i] != 0.0;
        const bool t = target[i] != 0.0;
        c.tp += p && t;
        c.fp += p && !t;
        c.fn += !p && t;
    }
    return c;
}

}  // namespace

real dsc(const Tensor& pred_mask, const Tensor& target) {
    const Counts c = mask_counts(pred_mask, target);
    const int64_t denom = 2 * c.tp + c.fn + c.fp;
    if (denom == 0) return 1.0;  // both masks empty
    return 2.0 * static_cast<real>(c.tp) / static_cast<real>(denom);
}

real iou(const Tensor& pred_mask, const Tensor& target) {
    const Counts c = mask_counts(pred_mask, target);
    const int64_t denom = c.tp + c.fn + c.fp;
    if (denom == 0) return 1.0;
    return static_cast<real>(c.tp) / static_cast<real>(denom);
}

Tensor threshold_mask(const Tensor& probs, real threshold) {
    Tensor m(probs.dims);
    for (int64_t i = 0; i < probs.numel(); ++i) m[i] = probs[i] >= threshold ? 1.0 : 0.0;
    return m;
}

MetricReport evaluate_pairs(const std::vector<PredictionPair>& pairs, real threshold) {
    if (pairs.empty()) throw std::invalid_argument("evaluate: empty test set");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw std::invalid_argument("evaluate: threshold must be in (0,1)");
    MetricReport r;
    for (const auto& p : pairs) {
        Tensor m = threshold_mask(p.probs, threshold);
        r.per_image.emplace_back(dsc(m, p.target), iou(m, p.target));
    }
    const real n = static_cast<real>(r.per_image.size());
    for (const auto& [d, i] : r.per_image) {
        r.dsc_mean += d;
        r.iou_mean += i;
    }
    r.dsc_mean /= n;
    r.iou_mean /= n;
    for (const auto& [d, i] : r.per_image) {
        r.dsc_std += (d - r.dsc_mean) * (d - r.dsc_mean);
        r.iou_std += (i - r.iou_mean) * (i - r.iou_mean);
    }
    r.dsc_std = std::sqrt(r.dsc_std / n);
    r.iou_std = std::sqrt(r.iou_std / n);
    return r;
}

}  // namespace dwp
