#include "dwp/data.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dwp/serialize.hpp"

namespace dwp {

DomainPreset DomainPreset::ms_like() {
    DomainPreset p;
    p.name = "ms-like";
    p.lesions_lo = 6;
    p.lesions_hi = 12;
    p.radius_lo = 1.3;
    p.radius_hi = 2.3;
    p.contrast = 1.0;
    p.noise_sigma = 0.08;
    return p;
}

DomainPreset DomainPreset::tumor_like() {
    DomainPreset p;
    p.name = "tumor-like";
    p.lesions_lo = 1;
    p.lesions_hi = 1;
    p.radius_lo = 4.0;
    p.radius_hi = 8.0;
    p.contrast = 1.0;
    p.noise_sigma = 0.05;
    return p;
}

DomainPreset DomainPreset::by_name(const std::string& name) {
    if (name == "ms-like") return ms_like();
    if (name == "tumor-like") return tumor_like();
    throw std::invalid_argument("unknown preset '" + name + "' (expected ms-like or tumor-like)");
}

std::vector<Volume> generate(const DomainPreset& preset, int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
    if (preset.radius_lo < 1.0) throw std::invalid_argument("generate: lesion radius must be >= 1 voxel");
    {
        const real max_margin = preset.radius_hi + 1.0;
        const int64_t min_dim = std::min({preset.shape[0], preset.shape[1], preset.shape[2]});
        if (2.0 * max_margin >= static_cast<real>(min_dim - 1))
            throw std::invalid_argument("generate: lesion radius too large for the volume shape");
    }
    if (preset.contrast <= preset.noise_sigma)
        std::fprintf(stderr, "warning: preset '%s' has contrast <= noise sigma; task may be unlearnable\n",
                     preset.name.c_str());

    // half-peak radius R corresponds to Gaussian sigma R / sqrt(2 ln 2)
    const real half_peak = std::sqrt(2.0 * std::log(2.0));
    const int64_t D = preset.shape[0], H = preset.shape[1], W = preset.shape[2];

    std::vector<Volume> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const uint64_t vseed = derive_seed(seed, "volume", i);
        Rng rng(vseed);
        Volume v;
        v.domain = preset.name;
        v.seed = vseed;
        v.intensities = Tensor({D, H, W});
        v.mask = Tensor({D, H, W});

        const int n_lesions = static_cast<int>(rng.uniform_int(preset.lesions_lo, preset.lesions_hi));
        for (int l = 0; l < n_lesions; ++l) {
            const real r = rng.uniform(preset.radius_lo, preset.radius_hi);
            const real margin = r + 1.0;
            const real cd = rng.uniform(margin, static_cast<real>(D - 1) - margin);
            const real ch = rng.uniform(margin, static_cast<real>(H - 1) - margin);
            const real cw = rng.uniform(margin, static_cast<real>(W - 1) - margin);
            const real sigma = r / half_peak;
            const real inv_2s2 = 1.0 / (2.0 * sigma * sigma);
            const int64_t lo_d = std::max<int64_t>(0, static_cast<int64_t>(cd - 3 * r));
            const int64_t hi_d = std::min<int64_t>(D - 1, static_cast<int64_t>(cd + 3 * r) + 1);
            const int64_t lo_h = std::max<int64_t>(0, static_cast<int64_t>(ch - 3 * r));
            const int64_t hi_h = std::min<int64_t>(H - 1, static_cast<int64_t>(ch + 3 * r) + 1);
            const int64_t lo_w = std::max<int64_t>(0, static_cast<int64_t>(cw - 3 * r));
            const int64_t hi_w = std::min<int64_t>(W - 1, static_cast<int64_t>(cw + 3 * r) + 1);
            for (int64_t d = lo_d; d <= hi_d; ++d)
                for (int64_t h = lo_h; h <= hi_h; ++h)
                    for (int64_t w = lo_w; w <= hi_w; ++w) {
                        const real dd = static_cast<real>(d) - cd;
                        const real dh = static_cast<real>(h) - ch;
                        const real dw = static_cast<real>(w) - cw;
                        const real dist2 = dd * dd + dh * dh + dw * dw;
                        const int64_t idx = (d * H + h) * W + w;
                        v.intensities[idx] += preset.contrast * std::exp(-dist2 * inv_2s2);
                        if (dist2 <= r * r) v.mask[idx] = 1.0;
                    }
        }
        for (int64_t j = 0; j < v.intensities.numel(); ++j)
            v.intensities[j] += preset.noise_sigma * rng.normal();
        out.push_back(std::move(v));
    }
    return out;
}

void save_volume(const Volume& v, const std::string& path) {
    BinWriter w(path);
    w.bytes("DWPV", 4);
    w.u32(kVolumeVersion);
    w.str(v.domain);
    w.u64(v.seed);
    if (v.intensities.ndim() != 3) throw std::invalid_argument("save_volume: expected [D,H,W]");
    check_same_shape(v.intensities, v.mask, "save_volume");
    for (int i = 0; i < 3; ++i) w.u64(static_cast<uint64_t>(v.intensities.dim(i)));
    w.u8(0);  // dtype tag: float32
    std::vector<float> buf(v.intensities.v.size());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(v.intensities.v[i]);
    w.bytes(buf.data(), buf.size() * 4);
    std::vector<uint8_t> mb(v.mask.v.size());
    for (size_t i = 0; i < mb.size(); ++i) mb[i] = v.mask.v[i] != 0.0 ? 1 : 0;
    w.bytes(mb.data(), mb.size());
}

Volume load_volume(const std::string& path) {
    BinReader r(path);
    r.header("DWPV", kVolumeVersion);
    Volume v;
    v.domain = r.str();
    v.seed = r.u64();
    std::vector<int64_t> dims(3);
    for (auto& d : dims) d = static_cast<int64_t>(r.u64());
    if (dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
        throw IoError("volume '" + path + "': zero-sized volume");
    if (r.u8() != 0) throw VersionError("volume '" + path + "': unknown dtype tag");
    v.intensities = Tensor(dims);
    std::vector<float> buf(v.intensities.v.size());
    r.bytes(buf.data(), buf.size() * 4);
    for (size_t i = 0; i < buf.size(); ++i) v.intensities.v[i] = static_cast<double>(buf[i]);
    v.mask = Tensor(dims);
    std::vector<uint8_t> mb(v.mask.v.size());
    r.bytes(mb.data(), mb.size());
    for (size_t i = 0; i < mb.size(); ++i) v.mask.v[i] = mb[i] ? 1.0 : 0.0;
    return v;
}

namespace {

Tensor crop_or_pad(const Tensor& t, const std::array<int64_t, 3>& target) {
    const int64_t sd = t.dim(0), sh = t.dim(1), sw = t.dim(2);
    const int64_t td = target[0], th = target[1], tw = target[2];
    if (sd == td && sh == th && sw == tw) return t;
    Tensor out({td, th, tw});
    // copy window: for each axis, source offset when cropping, dest offset
    // when padding (both centered)
    const int64_t n = std::min(sd, td), m = std::min(sh, th), k = std::min(sw, tw);
    const int64_t so_d = sd > td ? (sd - td) / 2 : 0, do_d = td > sd ? (td - sd) / 2 : 0;
    const int64_t so_h = sh > th ? (sh - th) / 2 : 0, do_h = th > sh ? (th - sh) / 2 : 0;
    const int64_t so_w = sw > tw ? (sw - tw) / 2 : 0, do_w = tw > sw ? (tw - sw) / 2 : 0;
    for (int64_t d = 0; d < n; ++d)
        for (int64_t h = 0; h < m; ++h)
            for (int64_t w = 0; w < k; ++w)
                out[((do_d + d) * th + do_h + h) * tw + do_w + w] =
                    t[((so_d + d) * sh + so_h + h) * sw + so_w + w];
    return out;
}

}  // namespace

Volume preprocess(const Volume& v, const std::array<int64_t, 3>& target_shape, bool normalize) {
    if (target_shape[0] < 8 || target_shape[1] < 8 || target_shape[2] < 8)
        throw std::invalid_argument("preprocess: target shape must be >= 8 per axis");
    Volume out;
    out.domain = v.domain;
    out.seed = v.seed;
    out.intensities = crop_or_pad(v.intensities, target_shape);
    out.mask = crop_or_pad(v.mask, target_shape);
    if (normalize) {
        const int64_t n = out.intensities.numel();
        real mean = 0.0;
        for (int64_t i = 0; i < n; ++i) mean += out.intensities[i];
        mean /= static_cast<real>(n);
        real var = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const real d = out.intensities[i] - mean;
            var += d * d;
        }
        var /= static_cast<real>(n);
        const real inv = 1.0 / std::sqrt(var + 1e-12);
        for (int64_t i = 0; i < n; ++i) out.intensities[i] = (out.intensities[i] - mean) * inv;
    }
    return out;
}

}  // namespace dwp
