#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dwp/data.hpp"
#include "dwp/errors.hpp"

using namespace dwp;

namespace {

int64_t count_fg(const Tensor& mask) {
    int64_t n = 0;
    for (real v : mask.v) n += v != 0.0;
    return n;
}

// flood fill over the 6-neighborhood
int connected_components(const Tensor& mask) {
    const int64_t D = mask.dim(0), H = mask.dim(1), W = mask.dim(2);
    std::vector<char> seen(static_cast<size_t>(mask.numel()), 0);
    int comps = 0;
    std::vector<int64_t> stack;
    for (int64_t s = 0; s < mask.numel(); ++s) {
        if (mask[s] == 0.0 || seen[static_cast<size_t>(s)]) continue;
        ++comps;
        stack.push_back(s);
        seen[static_cast<size_t>(s)] = 1;
        while (!stack.empty()) {
            const int64_t cur = stack.back();
            stack.pop_back();
            const int64_t d = cur / (H * W), h = (cur / W) % H, w = cur % W;
            const int64_t deltas[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                          {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
            for (auto& dl : deltas) {
                const int64_t nd = d + dl[0], nh = h + dl[1], nw = w + dl[2];
                if (nd < 0 || nd >= D || nh < 0 || nh >= H || nw < 0 || nw >= W) continue;
                const int64_t ni = (nd * H + nh) * W + nw;
                if (mask[ni] != 0.0 && !seen[static_cast<size_t>(ni)]) {
                    seen[static_cast<size_t>(ni)] = 1;
                    stack.push_back(ni);
                }
            }
        }
    }
    return comps;
}

}  // namespace

TEST_CASE("ms-like volumes: foreground fraction in (0.1%, 3%) on average") {
    auto vols = generate(DomainPreset::ms_like(), 100, 99);
    real frac = 0.0;
    for (const auto& v : vols)
        frac += static_cast<real>(count_fg(v.mask)) / static_cast<real>(v.mask.numel());
    frac /= 100.0;
    CHECK(frac > 0.001);
    CHECK(frac < 0.03);
}

TEST_CASE("tumor-like volumes: exactly one connected component") {
    auto vols = generate(DomainPreset::tumor_like(), 20, 7);
    for (const auto& v : vols) {
        CHECK(count_fg(v.mask) > 0);
        CHECK(connected_components(v.mask) == 1);
    }
}

TEST_CASE("generation is deterministic given the seed") {
    auto a = generate(DomainPreset::ms_like(), 3, 1234);
    auto b = generate(DomainPreset::ms_like(), 3, 1234);
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].intensities.v == b[i].intensities.v);
        CHECK(a[i].mask.v == b[i].mask.v);
    }
    auto c = generate(DomainPreset::ms_like(), 3, 1235);
    CHECK(a[0].intensities.v != c[0].intensities.v);
}

TEST_CASE("mask support comes from the generator, not thresholding") {
    // mask voxels sit where the noiseless bump is at least half its peak;
    // verify the mask is nonempty and contained in a ball around high values
    auto vols = generate(DomainPreset::tumor_like(), 5, 11);
    for (const auto& v : vols) {
        CHECK(count_fg(v.mask) > 30);
    }
}

TEST_CASE("volume round-trip is bit-exact") {
    namespace fs = std::filesystem;
    auto vols = generate(DomainPreset::tumor_like(), 1, 5);
    const std::string path = (fs::temp_directory_path() / "dwp_test_vol.dwpv").string();
    save_volume(vols[0], path);
    Volume loaded = load_volume(path);
    // float32 on disk: compare after one round trip through float
    Volume expect = vols[0];
    for (auto& x : expect.intensities.v) x = static_cast<double>(static_cast<float>(x));
    CHECK(loaded.intensities.v == expect.intensities.v);
    CHECK(loaded.mask.v == vols[0].mask.v);
    CHECK(loaded.domain == vols[0].domain);
    CHECK(loaded.seed == vols[0].seed);

    // second round trip is bit-stable
    const std::string path2 = path + "2";
    save_volume(loaded, path2);
    Volume again = load_volume(path2);
    CHECK(again.intensities.v == loaded.intensities.v);
    fs::remove(path);
    fs::remove(path2);
}

TEST_CASE("volume loader rejects corrupted files") {
    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "dwp_bad_vol.dwpv").string();
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("NOPE", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_volume(path), VersionError);
    {
        std::FILE* f = std::fopen(path.c_str(), "wb");
        std::fputs("DWPV", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_volume(path), IoError);
    CHECK_THROWS_AS(load_volume("/nonexistent/file.dwpv"), IoError);
    fs::remove(path);
}

TEST_CASE("preprocess: crop keeps the central cube") {
    Volume v;
    v.intensities = Tensor({40, 40, 40});
    v.mask = Tensor({40, 40, 40});
    for (int64_t i = 0; i < v.intensities.numel(); ++i) v.intensities[i] = static_cast<real>(i);
    Volume out = preprocess(v, {32, 32, 32}, false);
    CHECK(out.intensities.dims == std::vector<int64_t>{32, 32, 32});
    // corner of the crop is source index (4,4,4)
    CHECK(out.intensities[0] == v.intensities[(4 * 40 + 4) * 40 + 4]);
}

TEST_CASE("preprocess: pad with zeros and background mask") {
    Volume v;
    v.intensities = Tensor::full({24, 24, 24}, 1.0);
    v.mask = Tensor::full({24, 24, 24}, 1.0);
    Volume out = preprocess(v, {32, 32, 32}, false);
    CHECK(out.intensities.dims == std::vector<int64_t>{32, 32, 32});
    CHECK(out.intensities[0] == 0.0);
    CHECK(out.mask[0] == 0.0);
    // center preserved
    CHECK(out.intensities[(16 * 32 + 16) * 32 + 16] == 1.0);

    // idempotent at target shape
    Volume out2 = preprocess(out, {32, 32, 32}, false);
    CHECK(out2.intensities.v == out.intensities.v);
}

TEST_CASE("preprocess: z-score normalization") {
    auto vols = generate(DomainPreset::ms_like(), 1, 3);
    Volume out = preprocess(vols[0], {32, 32, 32}, true);
    real mean = 0.0, var = 0.0;
    for (real x : out.intensities.v) mean += x;
    mean /= static_cast<real>(out.intensities.numel());
    for (real x : out.intensities.v) var += (x - mean) * (x - mean);
    var /= static_cast<real>(out.intensities.numel());
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-5);
}
