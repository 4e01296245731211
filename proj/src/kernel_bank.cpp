#include "dwp/kernel_bank.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dwp/serialize.hpp"

namespace dwp {

int64_t KernelBank::total_kernels() const {
    int64_t n = 0;
    for (const auto& [g, t] : groups) n += t.dim(0);
    return n;
}

bool KernelBank::is_normalized(int group) const {
    auto it = norm.find(group);
    return it != norm.end() && (it->second.first != 0.0 || it->second.second != 1.0);
}

KernelBank collect(const UNet& net, const LayerGroupMap& group_map, const std::string& checkpoint_id) {
    KernelBank bank;
    // first pass: per-group counts
    std::map<int, int64_t> counts;
    for (const auto& L : net.layers()) {
        if (!L.is_kernel3()) continue;
        counts[group_map.group_of(L.id)] += int64_t(L.c_out) * L.c_in;
    }
    for (const auto& [g, n] : counts) {
        bank.groups[g] = Tensor({n, 1, 3, 3, 3});
        bank.norm[g] = {0.0, 1.0};
        bank.provenance[g] = {};
        bank.provenance[g].reserve(static_cast<size_t>(n));
    }
    std::map<int, int64_t> cursor;
    for (const auto& L : net.layers()) {
        if (!L.is_kernel3()) continue;
        const int g = group_map.group_of(L.id);
        bank.provenance_table.emplace_back(checkpoint_id, L.id);
        const auto prov_idx = static_cast<uint32_t>(bank.provenance_table.size() - 1);
        Tensor& dst = bank.groups[g];
        const Tensor& src = net.mode() == NetMode::variational ? L.mu : L.w;
        // one slice per (output channel, input channel) pair, 27 entries each
        const int64_t n_slices = int64_t(L.c_out) * L.c_in;
        std::copy(src.v.begin(), src.v.end(), dst.v.begin() + cursor[g] * 27);
        for (int64_t s = 0; s < n_slices; ++s) bank.provenance[g].push_back(prov_idx);
        cursor[g] += n_slices;
    }
    return bank;
}

KernelBank merge(const std::vector<KernelBank>& banks) {
    if (banks.empty()) return {};
    KernelBank out;
    for (const auto& b : banks) {
        const uint32_t table_base = static_cast<uint32_t>(out.provenance_table.size());
        out.provenance_table.insert(out.provenance_table.end(), b.provenance_table.begin(),
                                    b.provenance_table.end());
        for (const auto& [g, t] : b.groups) {
            if (b.is_normalized(g) || (out.norm.count(g) && out.is_normalized(g)))
                throw std::invalid_argument("merge: merge raw banks before normalization");
            auto it = out.groups.find(g);
            if (it == out.groups.end()) {
                out.groups[g] = t;
                out.norm[g] = {0.0, 1.0};
                out.provenance[g] = {};
            } else {
                Tensor& dst = it->second;
                Tensor merged({dst.dim(0) + t.dim(0), 1, 3, 3, 3});
                std::copy(dst.v.begin(), dst.v.end(), merged.v.begin());
                std::copy(t.v.begin(), t.v.end(), merged.v.begin() + dst.numel());
                dst = std::move(merged);
            }
            for (uint32_t idx : b.provenance.at(g)) out.provenance[g].push_back(table_base + idx);
        }
    }
    return out;
}

KernelBank normalize(const KernelBank& bank) {
    if (bank.groups.empty()) throw std::invalid_argument("normalize: empty bank");
    KernelBank out = bank;
    for (auto& [g, t] : out.groups) {
        real lo = t.v.empty() ? 0.0 : t.v[0], hi = lo, mean = 0.0;
        for (real x : t.v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            mean += x;
        }
        if (!t.v.empty()) mean /= static_cast<real>(t.v.size());
        real shift, scale;
        if (hi - lo < 1e-12) {
            shift = mean;
            scale = 1.0;
        } else {
            shift = 0.5 * (lo + hi);
            scale = 2.0 * kNormBound / (hi - lo);
        }
        for (real& x : t.v) x = (x - shift) * scale;
        // compose with any existing map: stored_old = (orig - s0) * c0
        const auto [s0, c0] = out.norm[g];
        out.norm[g] = {s0 + shift / c0, c0 * scale};
    }
    return out;
}

Tensor denormalize_group(const KernelBank& bank, int group) {
    const Tensor& t = bank.groups.at(group);
    const auto [shift, scale] = bank.norm.at(group);
    Tensor out = t;
    for (real& x : out.v) x = x / scale + shift;
    return out;
}

void save_bank(const KernelBank& bank, const std::string& path) {
    BinWriter w(path);
    w.bytes("DWPB", 4);
    w.u32(kBankVersion);
    w.u32(static_cast<uint32_t>(bank.provenance_table.size()));
    for (const auto& [ckpt, layer] : bank.provenance_table) {
        w.str(ckpt);
        w.str(layer);
    }
    w.u32(static_cast<uint32_t>(bank.groups.size()));
    for (const auto& [g, t] : bank.groups) {
        w.u32(static_cast<uint32_t>(g));
        w.u64(static_cast<uint64_t>(t.dim(0)));
        const auto [shift, scale] = bank.norm.at(g);
        w.f64(shift);
        w.f64(scale);
        const auto& prov = bank.provenance.at(g);
        for (uint32_t idx : prov) w.u32(idx);
        w.tensor_f32(t);
    }
}

KernelBank load_bank(const std::string& path) {
    BinReader r(path);
    r.header("DWPB", kBankVersion);
    KernelBank bank;
    const uint32_t n_prov = r.u32();
    bank.provenance_table.reserve(n_prov);
    for (uint32_t i = 0; i < n_prov; ++i) {
        std::string ckpt = r.str();
        std::string layer = r.str();
        bank.provenance_table.emplace_back(std::move(ckpt), std::move(layer));
    }
    const uint32_t n_groups = r.u32();
    for (uint32_t i = 0; i < n_groups; ++i) {
        const int g = static_cast<int>(r.u32());
        const int64_t count = static_cast<int64_t>(r.u64());
        const real shift = r.f64();
        const real scale = r.f64();
        std::vector<uint32_t> prov(static_cast<size_t>(count));
        for (auto& idx : prov) {
            idx = r.u32();
            if (idx >= n_prov) throw IoError("bank '" + path + "': provenance index out of range");
        }
        Tensor t = r.tensor_f32();
        if (t.ndim() != 5 || t.dim(0) != count || t.dim(2) != 3)
            throw IoError("bank '" + path + "': corrupt group array");
        bank.groups[g] = std::move(t);
        bank.norm[g] = {shift, scale};
        bank.provenance[g] = std::move(prov);
    }
    return bank;
}

}  // namespace dwp
