#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dwp {

using real = double;

/// Dense row-major tensor of doubles. Shape is dynamic; data is a flat
/// contiguous buffer. All heavy math lives in free functions (nn.hpp).
struct Tensor {
    std::vector<int64_t> dims;
    std::vector<real> v;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape) : dims(std::move(shape)) {
        v.assign(static_cast<size_t>(count(dims)), 0.0);
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, real value) {
        Tensor t(std::move(shape));
        t.fill(value);
        return t;
    }

    static int64_t count(const std::vector<int64_t>& d) {
        int64_t n = 1;
        for (int64_t x : d) {
            if (x < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= x;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int ndim() const { return static_cast<int>(dims.size()); }
    int64_t dim(int i) const { return dims.at(static_cast<size_t>(i)); }
    bool empty() const { return v.empty(); }

    real* data() { return v.data(); }
    const real* data() const { return v.data(); }

    real& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    real operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

    void fill(real x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(0.0); }

    bool same_shape(const Tensor& o) const { return dims == o.dims; }

    void reshape(std::vector<int64_t> shape) {
        if (count(shape) != numel()) throw std::invalid_argument("tensor: reshape element count mismatch");
        dims = std::move(shape);
    }
};

inline std::string shape_str(const std::vector<int64_t>& d) {
    std::string s = "[";
    for (size_t i = 0; i < d.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(d[i]);
    }
    return s + "]";
}

inline std::string shape_str(const Tensor& t) { return shape_str(t.dims); }

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace dwp
