#pragma once

#include <map>
#include <string>
#include <vector>

#include "dwp/tensor.hpp"
#include "dwp/unet.hpp"

namespace dwp {

/// Harvested 3x3x3 kernel slices grouped by resolution group. Kernels are
/// stored per group as [n, 1, 3, 3, 3]; norm maps stored values back to the
/// original scale via x = stored / scale + shift.
struct KernelBank {
    std::map<int, Tensor> groups;
    std::map<int, std::pair<real, real>> norm;  // group -> (shift, scale)
    std::vector<std::pair<std::string, std::string>> provenance_table;  // (checkpoint id, layer id)
    std::map<int, std::vector<uint32_t>> provenance;  // per-kernel index into the table

    int64_t total_kernels() const;
    bool is_normalized(int group) const;
};

/// Extracts every 3x3x3 kernel slice (one per in/out channel pair) from the
/// network's kernel-3 layers and assigns each to its resolution group.
KernelBank collect(const UNet& net, const LayerGroupMap& group_map, const std::string& checkpoint_id);

KernelBank merge(const std::vector<KernelBank>& banks);

/// Per-group affine map of stored values into [-0.99, 0.99]; constants
/// compose so provenance to original kernels stays invertible. Constant
/// (zero-range) groups get scale 1 and shift = mean.
KernelBank normalize(const KernelBank& bank);
Tensor denormalize_group(const KernelBank& bank, int group);

void save_bank(const KernelBank& bank, const std::string& path);
KernelBank load_bank(const std::string& path);

constexpr real kNormBound = 0.99;

}  // namespace dwp
