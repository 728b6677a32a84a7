#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mka/rng.hpp"

namespace mka {

// Dense row-major tensor with an explicit shape. No strides or views;
// every tensor owns its storage.
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(count(shape), T(0)) {}

    Tensor(std::vector<std::size_t> s, std::vector<T> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (count(shape) != data.size()) {
            throw std::invalid_argument("tensor: shape/data size mismatch: shape holds " +
                                        std::to_string(count(shape)) + " elements, data holds " +
                                        std::to_string(data.size()));
        }
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return n;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t extent(std::size_t axis) const { return shape.at(axis); }

    T& operator()(std::size_t i) { return data[i]; }
    T operator()(std::size_t i) const { return data[i]; }

    T& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    T operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    T& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    T operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }

    T& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    T operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    static Tensor random(std::vector<std::size_t> s, Rng& rng, double lo = -1.0, double hi = 1.0) {
        Tensor t(std::move(s));
        for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

inline std::string shape_string(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

struct ModelDims {
    std::size_t d_model;
    std::size_t n_heads;
    std::size_t d_head;

    ModelDims(std::size_t d, std::size_t h, std::size_t dh) : d_model(d), n_heads(h), d_head(dh) {
        if (d == 0 || h == 0 || dh == 0 || h * dh != d) {
            throw std::invalid_argument("model dims: need n_heads*d_head == d_model, got " +
                                        std::to_string(h) + "*" + std::to_string(dh) +
                                        " != " + std::to_string(d));
        }
    }
};

// C = A B with deterministic left-to-right accumulation over the inner axis.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0]) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_string(a.shape) +
                                    " * " + shape_string(b.shape));
    }
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = &c.data[i * n];
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = a.data[i * k + p];
            const T* brow = &b.data[p * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
    return c;
}

// Row-wise softmax with max-subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& s) {
    if (s.rank() != 2) throw std::invalid_argument("softmax_rows: expected rank-2 tensor");
    for (T v : s.data)
        if (std::isnan(static_cast<double>(v)))
            throw std::invalid_argument("softmax_rows: NaN input");
    const std::size_t m = s.shape[0], n = s.shape[1];
    Tensor<T> p({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        T mx = s(i, std::size_t(0));
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, s(i, j));
        T z = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            p(i, j) = std::exp(s(i, j) - mx);
            z += p(i, j);
        }
        for (std::size_t j = 0; j < n; ++j) p(i, j) /= z;
    }
    return p;
}

// Elementwise exp(s - mu).
template <typename T>
Tensor<T> shifted_exp(const Tensor<T>& s, T mu) {
    Tensor<T> out;
    out.shape = s.shape;
    out.data.resize(s.data.size());
    for (std::size_t i = 0; i < s.data.size(); ++i)
        out.data[i] = std::exp(s.data[i] - mu);
    return out;
}

// [B,S,D] -> [B,H,S,d_h]; merge_heads is the exact inverse.
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, const ModelDims& dims) {
    if (x.rank() != 3 || x.shape[2] != dims.d_model) {
        throw std::invalid_argument("split_heads: expected [B,S," + std::to_string(dims.d_model) +
                                    "], got " + shape_string(x.shape));
    }
    const std::size_t b = x.shape[0], s = x.shape[1], h = dims.n_heads, dh = dims.d_head;
    Tensor<T> out({b, h, s, dh});
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t si = 0; si < s; ++si)
            for (std::size_t hi = 0; hi < h; ++hi)
                for (std::size_t di = 0; di < dh; ++di)
                    out(bi, hi, si, di) = x(bi, si, hi * dh + di);
    return out;
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, const ModelDims& dims) {
    if (x.rank() != 4 || x.shape[1] != dims.n_heads || x.shape[3] != dims.d_head) {
        throw std::invalid_argument("merge_heads: expected [B," + std::to_string(dims.n_heads) +
                                    ",S," + std::to_string(dims.d_head) + "], got " +
                                    shape_string(x.shape));
    }
    const std::size_t b = x.shape[0], h = x.shape[1], s = x.shape[2], dh = x.shape[3];
    Tensor<T> out({b, s, h * dh});
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t hi = 0; hi < h; ++hi)
            for (std::size_t si = 0; si < s; ++si)
                for (std::size_t di = 0; di < dh; ++di)
                    out(bi, si, hi * dh + di) = x(bi, hi, si, di);
    return out;
}

}  // namespace mka
