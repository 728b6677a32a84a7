#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "mka/tensor.hpp"

namespace mka {

inline constexpr std::size_t kNumLevels = 3;

// Affine D->3 gate; softmax on top gives the routing simplex.
template <typename T>
struct GateParams {
    Tensor<T> w;  // [D,3]
    Tensor<T> b;  // [3]

    static GateParams zeros(std::size_t d_model) {
        return {Tensor<T>({d_model, kNumLevels}), Tensor<T>({kNumLevels})};
    }

    // Seeded uniform [-0.02, 0.02] weights, zero bias.
    static GateParams init(std::size_t d_model, std::uint64_t seed) {
        GateParams p = zeros(d_model);
        Rng rng(seed);
        for (auto& v : p.w.data) v = static_cast<T>(rng.uniform(-0.02, 0.02));
        return p;
    }
};

struct RoutingPolicy {
    enum class Kind { learned_soft, fixed_uniform, hard_topk };
    Kind kind = Kind::learned_soft;
    std::size_t k = 1;  // only for hard_topk, in {1,2}

    static RoutingPolicy learned_soft() { return {Kind::learned_soft, 0}; }
    static RoutingPolicy fixed_uniform() { return {Kind::fixed_uniform, 0}; }
    static RoutingPolicy hard_topk(std::size_t k) {
        if (k != 1 && k != 2) throw std::invalid_argument("routing: hard_topk k must be 1 or 2");
        return {Kind::hard_topk, k};
    }
};

template <typename T>
struct RoutingWeights {
    Tensor<T> lambda;  // [B,S,3], each 3-vector on the simplex
};

namespace detail {

// Softmax of a 3-vector restricted to the k largest logits; excluded entries
// are exactly zero. Ties go to the lower level index.
template <typename T>
std::array<T, kNumLevels> topk_softmax3(const std::array<T, kNumLevels>& logits, std::size_t k) {
    std::array<std::size_t, kNumLevels> order{0, 1, 2};
    // sort by descending logit, ties by ascending index
    for (std::size_t i = 0; i < kNumLevels; ++i)
        for (std::size_t j = i + 1; j < kNumLevels; ++j)
            if (logits[order[j]] > logits[order[i]]) std::swap(order[i], order[j]);
    std::array<bool, kNumLevels> keep{false, false, false};
    for (std::size_t i = 0; i < k; ++i) keep[order[i]] = true;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t l = 0; l < kNumLevels; ++l)
        if (keep[l]) mx = std::max(mx, logits[l]);
    std::array<T, kNumLevels> lam{T(0), T(0), T(0)};
    T z = T(0);
    for (std::size_t l = 0; l < kNumLevels; ++l) {
        if (!keep[l]) continue;
        lam[l] = std::exp(logits[l] - mx);
        z += lam[l];
    }
    for (std::size_t l = 0; l < kNumLevels; ++l) lam[l] /= z;
    for (std::size_t l = 0; l < kNumLevels; ++l)
        if (!keep[l]) lam[l] = T(0);
    return lam;
}

template <typename T>
std::array<T, kNumLevels> softmax3(const std::array<T, kNumLevels>& logits) {
    T mx = std::max(logits[0], std::max(logits[1], logits[2]));
    std::array<T, kNumLevels> lam;
    T z = T(0);
    for (std::size_t l = 0; l < kNumLevels; ++l) {
        lam[l] = std::exp(logits[l] - mx);
        z += lam[l];
    }
    for (std::size_t l = 0; l < kNumLevels; ++l) lam[l] /= z;
    return lam;
}

}  // namespace detail

// Per-token routing weights over the three memory levels.
template <typename T>
RoutingWeights<T> gate(const Tensor<T>& q, const GateParams<T>& params, const RoutingPolicy& policy) {
    if (q.rank() != 3) throw std::invalid_argument("gate: expected [B,S,D] queries");
    const std::size_t b = q.shape[0], s = q.shape[1], d = q.shape[2];
    if (params.w.shape[0] != d)
        throw std::invalid_argument("gate: params width " + std::to_string(params.w.shape[0]) +
                                    " != query width " + std::to_string(d));
    RoutingWeights<T> rw{Tensor<T>({b, s, kNumLevels})};
    for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t t = 0; t < s; ++t) {
            if (policy.kind == RoutingPolicy::Kind::fixed_uniform) {
                for (std::size_t l = 0; l < kNumLevels; ++l)
                    rw.lambda(bi, t, l) = T(1) / T(3);
                continue;
            }
            std::array<T, kNumLevels> logits;
            for (std::size_t l = 0; l < kNumLevels; ++l) {
                T acc = params.b(l);
                for (std::size_t j = 0; j < d; ++j) acc += q(bi, t, j) * params.w(j, l);
                logits[l] = acc;
            }
            std::array<T, kNumLevels> lam = policy.kind == RoutingPolicy::Kind::hard_topk
                                                ? detail::topk_softmax3(logits, policy.k)
                                                : detail::softmax3(logits);
            for (std::size_t l = 0; l < kNumLevels; ++l) rw.lambda(bi, t, l) = lam[l];
        }
    }
    return rw;
}

template <typename T>
struct GateGradients {
    Tensor<T> dq;  // [B,S,D]
    Tensor<T> dw;  // [D,3]
    Tensor<T> db;  // [3]
};

// Exact VJP of softmax(qW+b) under learned_soft routing.
template <typename T>
GateGradients<T> gate_backward(const Tensor<T>& q, const GateParams<T>& params,
                               const RoutingPolicy& policy, const Tensor<T>& upstream) {
    if (policy.kind != RoutingPolicy::Kind::learned_soft)
        throw std::invalid_argument("gate_backward: only learned_soft routing is differentiable");
    const std::size_t b = q.shape[0], s = q.shape[1], d = q.shape[2];
    if (upstream.rank() != 3 || upstream.shape[0] != b || upstream.shape[1] != s ||
        upstream.shape[2] != kNumLevels)
        throw std::invalid_argument("gate_backward: upstream must be [B,S,3]");
    GateGradients<T> g{Tensor<T>({b, s, d}), Tensor<T>({d, kNumLevels}), Tensor<T>({kNumLevels})};
    for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t t = 0; t < s; ++t) {
            std::array<T, kNumLevels> logits;
            for (std::size_t l = 0; l < kNumLevels; ++l) {
                T acc = params.b(l);
                for (std::size_t j = 0; j < d; ++j) acc += q(bi, t, j) * params.w(j, l);
                logits[l] = acc;
            }
            auto lam = detail::softmax3(logits);
            T dot = T(0);
            for (std::size_t l = 0; l < kNumLevels; ++l) dot += upstream(bi, t, l) * lam[l];
            std::array<T, kNumLevels> dlogit;
            for (std::size_t l = 0; l < kNumLevels; ++l)
                dlogit[l] = lam[l] * (upstream(bi, t, l) - dot);
            for (std::size_t l = 0; l < kNumLevels; ++l) {
                g.db(l) += dlogit[l];
                for (std::size_t j = 0; j < d; ++j) {
                    g.dw(j, l) += q(bi, t, j) * dlogit[l];
                    g.dq(bi, t, j) += params.w(j, l) * dlogit[l];
                }
            }
        }
    }
    return g;
}

}  // namespace mka
