#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dart3d::nn {

/// Dense row-major array of doubles, up to 4 dimensions.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
    Tensor(std::vector<int> s, double fill_value)
        : shape(std::move(s)), data(numel_of(shape), fill_value) {}

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v) { return Tensor(std::move(s), v); }
    static Tensor scalar(double v) { return Tensor({1}, v); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    double& at(int i, int j) {
        assert(ndim() == 2);
        return data[static_cast<size_t>(i) * shape[1] + j];
    }
    double at(int i, int j) const {
        assert(ndim() == 2);
        return data[static_cast<size_t>(i) * shape[1] + j];
    }
    double& at(int c, int y, int x) {
        assert(ndim() == 3);
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double at(int c, int y, int x) const {
        assert(ndim() == 3);
        return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double& at(int n, int c, int y, int x) {
        assert(ndim() == 4);
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    double at(int n, int c, int y, int x) const {
        assert(ndim() == 4);
        return data[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    double max_abs() const {
        double m = 0.0;
        for (double v : data) m = std::max(m, std::fabs(v));
        return m;
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

inline Tensor uniform_tensor(std::vector<int> shape, double lo, double hi, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

inline Tensor normal_tensor(std::vector<int> shape, double mean, double stddev,
                            std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(mean, stddev);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

/// splitmix64; used to derive independent RNG streams from one master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace dart3d::nn
