#pragma once

#include <array>
#include <string>
#include <vector>

#include "dwp/rng.hpp"
#include "dwp/tensor.hpp"

namespace dwp {

struct Volume {
    Tensor intensities;  // [D, H, W]
    Tensor mask;         // [D, H, W], entries in {0, 1}
    std::string domain;
    uint64_t seed = 0;
};

/// Synthetic lesion-volume family. Lesions are spherical Gaussian bumps; the
/// ground-truth mask is the half-peak support, so the generator knows the
/// exact mask with no thresholding drift.
struct DomainPreset {
    std::string name;
    std::array<int64_t, 3> shape{32, 32, 32};
    int lesions_lo = 1, lesions_hi = 1;
    real radius_lo = 4.0, radius_hi = 8.0;  // half-peak radius, voxels
    real contrast = 1.0;                    // bump peak over background
    real noise_sigma = 0.12;

    /// Source domain stand-in: many small lesions.
    static DomainPreset ms_like();
    /// Target domain stand-in: a single large blob.
    static DomainPreset tumor_like();
    static DomainPreset by_name(const std::string& name);
};

std::vector<Volume> generate(const DomainPreset& preset, int n, uint64_t seed);

void save_volume(const Volume& v, const std::string& path);
Volume load_volume(const std::string& path);

/// Center crop-or-pad to target shape (pad with zeros, mask with background),
/// then optional per-volume z-score of intensities.
Volume preprocess(const Volume& v, const std::array<int64_t, 3>& target_shape, bool normalize);

}  // namespace dwp
