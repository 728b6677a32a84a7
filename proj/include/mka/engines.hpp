#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mka/memory.hpp"
#include "mka/routing.hpp"
#include "mka/tensor.hpp"

namespace mka {

template <typename T>
struct ProjectionSet {
    Tensor<T> w_q, w_k, w_v, w_o;  // each [D,D]

    static ProjectionSet identity(std::size_t d) {
        ProjectionSet p{Tensor<T>({d, d}), Tensor<T>({d, d}), Tensor<T>({d, d}), Tensor<T>({d, d})};
        for (std::size_t i = 0; i < d; ++i) {
            p.w_q(i, i) = T(1);
            p.w_k(i, i) = T(1);
            p.w_v(i, i) = T(1);
            p.w_o(i, i) = T(1);
        }
        return p;
    }

    static ProjectionSet random(std::size_t d, Rng& rng, double scale = 0.2) {
        ProjectionSet p;
        p.w_q = Tensor<T>::random({d, d}, rng, -scale, scale);
        p.w_k = Tensor<T>::random({d, d}, rng, -scale, scale);
        p.w_v = Tensor<T>::random({d, d}, rng, -scale, scale);
        p.w_o = Tensor<T>::random({d, d}, rng, -scale, scale);
        return p;
    }
};

// Which memory levels an engine keeps; dropped levels get their routing
// weight renormalized over the survivors.
struct TierSet {
    bool l1 = true, l2 = true, l3 = true;

    bool keeps(std::size_t level) const { return level == 0 ? l1 : level == 1 ? l2 : l3; }
    bool any() const { return l1 || l2 || l3; }
    std::size_t count() const { return std::size_t(l1) + std::size_t(l2) + std::size_t(l3); }
};

template <typename T>
struct EngineOptions {
    SummaryMode summary = SummaryMode::prefix_mean();
    RoutingPolicy routing = RoutingPolicy::learned_soft();
    TierSet tiers{};
    double tau = 0.0;  // <= 0 means 1/sqrt(d_head)
    const ChunkStore<T>* store = nullptr;
};

template <typename T>
T resolve_tau(double tau, const ModelDims& dims) {
    return tau > 0.0 ? static_cast<T>(tau)
                     : static_cast<T>(1.0 / std::sqrt(static_cast<double>(dims.d_head)));
}

// Append-only cache of fused keys/values plus the summary carry-over state
// needed to continue a sequence incrementally.
template <typename T>
struct FusedKvCache {
    Tensor<T> k;  // [B,H,T_past,d_h]
    Tensor<T> v;  // same shape
    std::size_t t_past = 0;

    // running L2 summary state across everything seen so far
    Tensor<T> summary_acc;  // [B,D]: running sum (prefix_mean) or current ema
    std::size_t tokens_seen = 0;

    bool empty() const { return t_past == 0; }
};

// Zero out dropped tiers and renormalize onto the surviving simplex.
template <typename T>
Tensor<T> apply_tiers(const Tensor<T>& lambda, const TierSet& tiers) {
    if (!tiers.any()) throw std::invalid_argument("tier ablation: at least one level must be kept");
    Tensor<T> out = lambda;
    const std::size_t rows = lambda.size() / kNumLevels;
    for (std::size_t r = 0; r < rows; ++r) {
        T* lam = &out.data[r * kNumLevels];
        T sum = T(0);
        for (std::size_t l = 0; l < kNumLevels; ++l) {
            if (!tiers.keeps(l)) lam[l] = T(0);
            sum += lam[l];
        }
        if (sum > T(0)) {
            for (std::size_t l = 0; l < kNumLevels; ++l) lam[l] /= sum;
        } else {
            for (std::size_t l = 0; l < kNumLevels; ++l)
                lam[l] = tiers.keeps(l) ? T(1) / static_cast<T>(tiers.count()) : T(0);
        }
    }
    return out;
}

// Row-wise projection: [B,S,D] times [D,D].
template <typename T>
Tensor<T> project(const Tensor<T>& x, const Tensor<T>& w) {
    const std::size_t b = x.shape[0], s = x.shape[1], d = x.shape[2];
    Tensor<T> flat({b * s, d}, x.data);
    Tensor<T> y = matmul(flat, w);
    y.shape = {b, s, w.shape[1]};
    return y;
}

namespace detail {

// Stable softmax attention of one query row over key rows [0, n_keys) of k/v,
// accumulated into out. Keys are addressed via a caller-provided row index.
template <typename T, typename KeyIndex>
void attend_row(const T* qrow, const Tensor<T>& k, const Tensor<T>& v, std::size_t base,
                std::size_t n_keys, std::size_t dh, T tau, KeyIndex key_row, T* out) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n_keys; ++j) {
        const T* krow = &k.data[(base + key_row(j)) * dh];
        T s = T(0);
        for (std::size_t e = 0; e < dh; ++e) s += qrow[e] * krow[e];
        s *= tau;
        mx = std::max(mx, s);
    }
    T z = T(0);
    for (std::size_t e = 0; e < dh; ++e) out[e] = T(0);
    for (std::size_t j = 0; j < n_keys; ++j) {
        const T* krow = &k.data[(base + key_row(j)) * dh];
        const T* vrow = &v.data[(base + key_row(j)) * dh];
        T s = T(0);
        for (std::size_t e = 0; e < dh; ++e) s += qrow[e] * krow[e];
        const T w = std::exp(s * tau - mx);
        z += w;
        for (std::size_t e = 0; e < dh; ++e) out[e] += w * vrow[e];
    }
    for (std::size_t e = 0; e < dh; ++e) out[e] /= z;
}

enum class LevelMask { causal, none };

// Multi-head attention of q_h [B,H,S,dh] over k_h/v_h [B,H,Sk,dh].
// causal_offset shifts query positions: query t sees keys 0..offset+t (causal)
// or all keys (none).
template <typename T>
Tensor<T> headwise_attention(const Tensor<T>& q_h, const Tensor<T>& k_h, const Tensor<T>& v_h,
                             T tau, LevelMask mask, std::size_t causal_offset = 0) {
    const std::size_t b = q_h.shape[0], h = q_h.shape[1], s = q_h.shape[2], dh = q_h.shape[3];
    const std::size_t sk = k_h.shape[2];
    Tensor<T> out({b, h, s, dh});
    for (std::size_t bi = 0; bi < b; ++bi) {
        for (std::size_t hi = 0; hi < h; ++hi) {
            const std::size_t kbase = (bi * h + hi) * sk;
            for (std::size_t t = 0; t < s; ++t) {
                const std::size_t n_keys =
                    mask == LevelMask::causal ? std::min(sk, causal_offset + t + 1) : sk;
                const T* qrow = &q_h.data[((bi * h + hi) * s + t) * dh];
                T* orow = &out.data[((bi * h + hi) * s + t) * dh];
                attend_row(qrow, k_h, v_h, kbase, n_keys, dh, tau,
                           [](std::size_t j) { return j; }, orow);
            }
        }
    }
    return out;
}

// out_h[b,h,t,:] scaled by lambda[b,t,level], accumulated into acc.
template <typename T>
void accumulate_routed(Tensor<T>& acc, const Tensor<T>& a, const Tensor<T>& lambda,
                       std::size_t level) {
    const std::size_t b = a.shape[0], h = a.shape[1], s = a.shape[2], dh = a.shape[3];
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t hi = 0; hi < h; ++hi)
            for (std::size_t t = 0; t < s; ++t) {
                const T lam = lambda(bi, t, level);
                if (lam == T(0)) continue;
                T* dst = &acc.data[((bi * h + hi) * s + t) * dh];
                const T* src = &a.data[((bi * h + hi) * s + t) * dh];
                for (std::size_t e = 0; e < dh; ++e) dst[e] += lam * src[e];
            }
}

}  // namespace detail

// Plain causal multi-head attention: the L1-only baseline every MKA variant
// must collapse to.
template <typename T>
Tensor<T> reference_causal_mha(const Tensor<T>& x, const ProjectionSet<T>& proj,
                               const ModelDims& dims, double tau = 0.0) {
    if (x.rank() != 3 || x.shape[2] != dims.d_model)
        throw std::invalid_argument("mha: expected [B,S," + std::to_string(dims.d_model) +
                                    "], got " + shape_string(x.shape));
    const T t = resolve_tau<T>(tau, dims);
    Tensor<T> q_h = split_heads(project(x, proj.w_q), dims);
    Tensor<T> k_h = split_heads(project(x, proj.w_k), dims);
    Tensor<T> v_h = split_heads(project(x, proj.w_v), dims);
    Tensor<T> a = detail::headwise_attention(q_h, k_h, v_h, t, detail::LevelMask::causal);
    return project(merge_heads(a, dims), proj.w_o);
}

template <typename T>
struct EngineResult {
    Tensor<T> o;
    FusedKvCache<T> cache;
};

// Symbolic MKA: one causal attention per memory level, outputs mixed by the
// per-token routing weights after the per-level softmax. The cache records
// only L1 keys/values.
template <typename T>
EngineResult<T> symbolic_mka_forward(const Tensor<T>& x, const ProjectionSet<T>& proj,
                                     const GateParams<T>& gate_params, const ModelDims& dims,
                                     const EngineOptions<T>& opts = {}) {
    if (x.rank() != 3 || x.shape[2] != dims.d_model)
        throw std::invalid_argument("symbolic mka: bad input shape " + shape_string(x.shape));
    const T tau = resolve_tau<T>(opts.tau, dims);
    const std::size_t b = x.shape[0], s = x.shape[1];

    Tensor<T> q = project(x, proj.w_q);
    Tensor<T> q_h = split_heads(q, dims);
    MemoryLevels<T> levels = build_levels(x, opts.summary, opts.store, &q);
    Tensor<T> lambda = apply_tiers(gate(q, gate_params, opts.routing).lambda, opts.tiers);

    const Tensor<T>* mems[kNumLevels] = {&levels.m1, &levels.m2, &levels.m3};
    const detail::LevelMask masks[kNumLevels] = {detail::LevelMask::causal,
                                                 detail::LevelMask::causal,
                                                 detail::LevelMask::none};
    Tensor<T> mixed({b, dims.n_heads, s, dims.d_head});
    FusedKvCache<T> cache;
    for (std::size_t l = 0; l < kNumLevels; ++l) {
        Tensor<T> k_h = split_heads(project(*mems[l], proj.w_k), dims);
        Tensor<T> v_h = split_heads(project(*mems[l], proj.w_v), dims);
        Tensor<T> a = detail::headwise_attention(q_h, k_h, v_h, tau, masks[l]);
        detail::accumulate_routed(mixed, a, lambda, l);
        if (l == 0) {  // cache update appends L1 KV only
            cache.k = k_h;
            cache.v = v_h;
            cache.t_past = s;
        }
    }
    return {project(merge_heads(mixed, dims), proj.w_o), std::move(cache)};
}

namespace detail {

// L2 summary of the new segment, continuing from the cache's carry-over
// state so that incremental decoding matches a full recompute exactly.
template <typename T>
Tensor<T> continued_summary(const Tensor<T>& x, const SummaryMode& mode,
                            const FusedKvCache<T>* cache, Tensor<T>& acc_out,
                            std::size_t& seen_out) {
    const std::size_t b = x.shape[0], s = x.shape[1], d = x.shape[2];
    Tensor<T> acc = (cache && cache->tokens_seen > 0) ? cache->summary_acc : Tensor<T>({b, d});
    std::size_t seen = cache ? cache->tokens_seen : 0;
    Tensor<T> m2({b, s, d});
    for (std::size_t t = 0; t < s; ++t) {
        for (std::size_t bi = 0; bi < b; ++bi) {
            if (mode.kind == SummaryMode::Kind::prefix_mean) {
                for (std::size_t j = 0; j < d; ++j) {
                    acc(bi, j) += x(bi, t, j);
                    m2(bi, t, j) = acc(bi, j) / static_cast<T>(seen + t + 1);
                }
            } else {
                const T a = static_cast<T>(mode.ema_decay);
                for (std::size_t j = 0; j < d; ++j) {
                    acc(bi, j) = (seen + t == 0) ? x(bi, t, j)
                                                 : a * acc(bi, j) + (T(1) - a) * x(bi, t, j);
                    m2(bi, t, j) = acc(bi, j);
                }
            }
        }
    }
    acc_out = std::move(acc);
    seen_out = seen + s;
    return m2;
}

template <typename T>
Tensor<T> concat_time(const Tensor<T>& past, const Tensor<T>& fresh) {
    if (past.size() == 0) return fresh;
    const std::size_t b = fresh.shape[0], h = fresh.shape[1], dh = fresh.shape[3];
    const std::size_t tp = past.shape[2], tn = fresh.shape[2];
    Tensor<T> out({b, h, tp + tn, dh});
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t hi = 0; hi < h; ++hi) {
            T* dst = &out.data[((bi * h + hi) * (tp + tn)) * dh];
            const T* p = &past.data[((bi * h + hi) * tp) * dh];
            const T* f = &fresh.data[((bi * h + hi) * tn) * dh];
            std::copy(p, p + tp * dh, dst);
            std::copy(f, f + tn * dh, dst + tp * dh);
        }
    return out;
}

}  // namespace detail

// FastMKA: route-fuse the levels per token, project once, run a single
// causal attention over the fused-KV cache. Past tokens keep the fused KV
// they were generated with.
template <typename T>
EngineResult<T> fastmka_forward(const Tensor<T>& x, const ProjectionSet<T>& proj,
                                const GateParams<T>& gate_params, const ModelDims& dims,
                                const EngineOptions<T>& opts = {},
                                const FusedKvCache<T>* cache = nullptr) {
    if (x.rank() != 3 || x.shape[2] != dims.d_model)
        throw std::invalid_argument("fastmka: bad input shape " + shape_string(x.shape));
    const std::size_t b = x.shape[0], s = x.shape[1], d = dims.d_model;
    if (s == 0) throw std::invalid_argument("fastmka: empty input segment");
    if (cache && cache->t_past > 0 &&
        (cache->k.shape[0] != b || cache->k.shape[1] != dims.n_heads ||
         cache->k.shape[3] != dims.d_head))
        throw std::invalid_argument("fastmka: cache dims inconsistent with model dims");
    const T tau = resolve_tau<T>(opts.tau, dims);

    Tensor<T> q = project(x, proj.w_q);
    Tensor<T> q_h = split_heads(q, dims);

    FusedKvCache<T> next;
    Tensor<T> m2 = detail::continued_summary(x, opts.summary, cache, next.summary_acc,
                                             next.tokens_seen);
    Tensor<T> m3({b, s, d});
    if (opts.store && !opts.store->chunks().empty()) {
        if (opts.store->dim() != d)
            throw std::invalid_argument("fastmka: store width != model width");
        for (std::size_t bi = 0; bi < b; ++bi)
            for (std::size_t t = 0; t < s; ++t)
                retrieval_row(*opts.store, &q.data[(bi * s + t) * d], d,
                              &m3.data[(bi * s + t) * d]);
    }

    Tensor<T> lambda = apply_tiers(gate(q, gate_params, opts.routing).lambda, opts.tiers);
    Tensor<T> fused({b, s, d});
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t t = 0; t < s; ++t) {
            const T l1 = lambda(bi, t, 0), l2 = lambda(bi, t, 1), l3 = lambda(bi, t, 2);
            for (std::size_t j = 0; j < d; ++j)
                fused(bi, t, j) = l1 * x(bi, t, j) + l2 * m2(bi, t, j) + l3 * m3(bi, t, j);
        }

    Tensor<T> k_h = split_heads(project(fused, proj.w_k), dims);
    Tensor<T> v_h = split_heads(project(fused, proj.w_v), dims);
    const std::size_t t_past = cache ? cache->t_past : 0;
    next.k = cache && t_past > 0 ? detail::concat_time(cache->k, k_h) : k_h;
    next.v = cache && t_past > 0 ? detail::concat_time(cache->v, v_h) : v_h;
    next.t_past = t_past + s;

    Tensor<T> a = detail::headwise_attention(q_h, next.k, next.v, tau,
                                             detail::LevelMask::causal, t_past);
    return {project(merge_heads(a, dims), proj.w_o), std::move(next)};
}

// Incremental decode: one token in, one token out. Pure; the input cache
// stays valid.
template <typename T>
EngineResult<T> fastmka_decode_step(const FusedKvCache<T>& cache, const Tensor<T>& x_t,
                                    const ProjectionSet<T>& proj, const GateParams<T>& gate_params,
                                    const ModelDims& dims, const EngineOptions<T>& opts = {}) {
    if (x_t.rank() != 3 || x_t.shape[1] != 1)
        throw std::invalid_argument("decode step: expected a single-token [B,1,D] input");
    return fastmka_forward(x_t, proj, gate_params, dims, opts, &cache);
}

// ---- Gated-mixture family ----------------------------------------------
//
// Attn(Q) = sum_l lambda_l exp(QK_l^T) V_l / sum_l lambda_l exp(QK_l^T),
// normalized after mixing (not a mixture of per-level softmax outputs).

template <typename T>
struct LevelKv {
    Tensor<T> k;  // [n_l, d], n_l may be 0
    Tensor<T> v;  // same shape
};

namespace detail {

template <typename T>
T lambda_at(const Tensor<T>& lambda, std::size_t row, std::size_t level) {
    if (lambda.rank() == 1) return lambda(level);
    return lambda(row, level);
}

template <typename T>
void check_mixture_args(const Tensor<T>& q, const std::array<LevelKv<T>, kNumLevels>& levels,
                        const Tensor<T>& lambda) {
    if (q.rank() != 2) throw std::invalid_argument("gated mixture: q must be [S,d]");
    if (!(lambda.rank() == 1 && lambda.shape[0] == kNumLevels) &&
        !(lambda.rank() == 2 && lambda.shape[0] == q.shape[0] && lambda.shape[1] == kNumLevels))
        throw std::invalid_argument("gated mixture: lambda must be [3] or [S,3]");
    for (const auto& lv : levels)
        if (lv.k.size() > 0 && lv.k.shape[1] != q.shape[1])
            throw std::invalid_argument("gated mixture: level width != query width");
}

}  // namespace detail

// Direct evaluation of the gated mixture, one global normalization per row.
template <typename T>
Tensor<T> gated_mixture_direct(const Tensor<T>& q, const std::array<LevelKv<T>, kNumLevels>& levels,
                               const Tensor<T>& lambda) {
    detail::check_mixture_args(q, levels, lambda);
    const std::size_t s = q.shape[0], d = q.shape[1];
    Tensor<T> out({s, d});
    for (std::size_t i = 0; i < s; ++i) {
        std::vector<T> num(d, T(0));
        T den = T(0);
        for (std::size_t l = 0; l < kNumLevels; ++l) {
            const T lam = detail::lambda_at(lambda, i, l);
            if (lam == T(0)) continue;
            const auto& lv = levels[l];
            const std::size_t n = lv.k.size() ? lv.k.shape[0] : 0;
            for (std::size_t j = 0; j < n; ++j) {
                T sc = T(0);
                for (std::size_t e = 0; e < d; ++e) sc += q(i, e) * lv.k(j, e);
                const T w = lam * std::exp(sc);
                den += w;
                for (std::size_t e = 0; e < d; ++e) num[e] += w * lv.v(j, e);
            }
        }
        if (!(den > T(0)))
            throw std::invalid_argument("gated mixture: degenerate denominator (all lambda zero or all levels empty)");
        for (std::size_t e = 0; e < d; ++e) out(i, e) = num[e] / den;
    }
    return out;
}

// Level-recursive accumulation of (alpha, z); same arithmetic as the direct
// form, no max shift. Overflows for large scores.
template <typename T>
Tensor<T> gated_mixture_recursive(const Tensor<T>& q,
                                  const std::array<LevelKv<T>, kNumLevels>& levels,
                                  const Tensor<T>& lambda) {
    detail::check_mixture_args(q, levels, lambda);
    const std::size_t s = q.shape[0], d = q.shape[1];
    Tensor<T> out({s, d});
    for (std::size_t i = 0; i < s; ++i) {
        std::vector<T> alpha(d, T(0));
        T z = T(0);
        bool touched = false;
        for (std::size_t l = 0; l < kNumLevels; ++l) {
            const T lam = detail::lambda_at(lambda, i, l);
            const auto& lv = levels[l];
            const std::size_t n = lv.k.size() ? lv.k.shape[0] : 0;
            if (lam == T(0) || n == 0) continue;
            touched = true;
            T level_z = T(0);
            std::vector<T> level_a(d, T(0));
            for (std::size_t j = 0; j < n; ++j) {
                T sc = T(0);
                for (std::size_t e = 0; e < d; ++e) sc += q(i, e) * lv.k(j, e);
                const T w = std::exp(sc);
                level_z += w;
                for (std::size_t e = 0; e < d; ++e) level_a[e] += w * lv.v(j, e);
            }
            z += lam * level_z;
            for (std::size_t e = 0; e < d; ++e) alpha[e] += lam * level_a[e];
        }
        if (!touched || !(z != T(0)))
            throw std::invalid_argument("gated mixture: degenerate denominator (all lambda zero or all levels empty)");
        for (std::size_t e = 0; e < d; ++e) out(i, e) = alpha[e] / z;
    }
    return out;
}

// Max-shift scan: running maximum with rescale factors applied to both the
// denominator and the value accumulator at each level.
template <typename T>
Tensor<T> gated_mixture_stable(const Tensor<T>& q, const std::array<LevelKv<T>, kNumLevels>& levels,
                               const Tensor<T>& lambda) {
    detail::check_mixture_args(q, levels, lambda);
    const std::size_t s = q.shape[0], d = q.shape[1];
    Tensor<T> out({s, d});
    std::vector<T> scores;
    for (std::size_t i = 0; i < s; ++i) {
        T mu = -std::numeric_limits<T>::infinity();
        T z = T(0);
        std::vector<T> alpha(d, T(0));
        bool touched = false;
        for (std::size_t l = 0; l < kNumLevels; ++l) {
            const T lam = detail::lambda_at(lambda, i, l);
            const auto& lv = levels[l];
            const std::size_t n = lv.k.size() ? lv.k.shape[0] : 0;
            if (lam == T(0) || n == 0) continue;
            touched = true;
            scores.resize(n);
            T level_max = -std::numeric_limits<T>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                T sc = T(0);
                for (std::size_t e = 0; e < d; ++e) sc += q(i, e) * lv.k(j, e);
                scores[j] = sc;
                level_max = std::max(level_max, sc);
            }
            const T mu_new = std::max(mu, level_max);
            const T rescale = std::isinf(mu) ? T(0) : std::exp(mu - mu_new);
            z *= rescale;
            for (std::size_t e = 0; e < d; ++e) alpha[e] *= rescale;
            for (std::size_t j = 0; j < n; ++j) {
                const T w = lam * std::exp(scores[j] - mu_new);
                z += w;
                for (std::size_t e = 0; e < d; ++e) alpha[e] += w * lv.v(j, e);
            }
            mu = mu_new;
        }
        if (!touched || !(z > T(0)))
            throw std::invalid_argument("gated mixture: degenerate denominator (all lambda zero or all levels empty)");
        for (std::size_t e = 0; e < d; ++e) out(i, e) = alpha[e] / z;
    }
    return out;
}

// ---- Block-MKA ----------------------------------------------------------

enum class BlockMode { local, global };

struct BlockPlan {
    std::size_t n = 0;       // sequence length
    std::size_t b_blk = 0;   // block size
    double tau = 0.0;        // <= 0 means 1/sqrt(d)
    BlockMode mode = BlockMode::global;
    std::size_t window = 4;  // local mode: attend this many trailing blocks
    bool pad = false;        // allow N not divisible by b_blk

    std::size_t t_blocks() const { return (n + b_blk - 1) / b_blk; }
};

// Tiled causal attention with a per-query-row online softmax scan. Global
// mode with a store adds recalled chunk KV into the same accumulators
// before normalization.
template <typename T>
Tensor<T> block_mka(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                    const BlockPlan& plan, const ChunkStore<T>* store = nullptr) {
    if (q.rank() != 2 || !q.same_shape(k) || !q.same_shape(v))
        throw std::invalid_argument("block_mka: q/k/v must share shape [N,d]");
    const std::size_t n = q.shape[0], d = q.shape[1];
    if (plan.n != n) throw std::invalid_argument("block_mka: plan.n != row count");
    if (plan.b_blk == 0) throw std::invalid_argument("block_mka: block size must be positive");
    if (n % plan.b_blk != 0 && !plan.pad)
        throw std::invalid_argument("block_mka: N=" + std::to_string(n) +
                                    " not divisible by block size " + std::to_string(plan.b_blk) +
                                    " and padding is disabled");
    if (store && store->dim() != d)
        throw std::invalid_argument("block_mka: store width != head width");
    const T tau = plan.tau > 0.0 ? static_cast<T>(plan.tau)
                                 : static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));
    const std::size_t bs = plan.b_blk;
    const std::size_t t_blocks = plan.t_blocks();

    Tensor<T> out({n, d});
    std::vector<T> scores(bs);
    for (std::size_t bi = 0; bi < t_blocks; ++bi) {
        const std::size_t j_lo =
            plan.mode == BlockMode::local && bi + 1 > plan.window ? bi + 1 - plan.window : 0;
        const std::size_t q_hi = std::min(n, (bi + 1) * bs);
        for (std::size_t gq = bi * bs; gq < q_hi; ++gq) {
            const T* qrow = &q.data[gq * d];
            T mu = -std::numeric_limits<T>::infinity();
            T z = T(0);
            T* acc = &out.data[gq * d];  // accumulate in place, divide at the end
            for (std::size_t bj = j_lo; bj <= bi; ++bj) {
                const std::size_t k_lo = bj * bs;
                const std::size_t k_hi = std::min({n, (bj + 1) * bs, gq + 1});
                if (k_hi <= k_lo) continue;
                T block_max = -std::numeric_limits<T>::infinity();
                for (std::size_t gk = k_lo; gk < k_hi; ++gk) {
                    T s = T(0);
                    const T* krow = &k.data[gk * d];
                    for (std::size_t e = 0; e < d; ++e) s += qrow[e] * krow[e];
                    scores[gk - k_lo] = s * tau;
                    block_max = std::max(block_max, scores[gk - k_lo]);
                }
                const T mu_new = std::max(mu, block_max);
                const T rescale = std::isinf(mu) ? T(0) : std::exp(mu - mu_new);
                z *= rescale;
                for (std::size_t e = 0; e < d; ++e) acc[e] *= rescale;
                for (std::size_t gk = k_lo; gk < k_hi; ++gk) {
                    const T w = std::exp(scores[gk - k_lo] - mu_new);
                    z += w;
                    const T* vrow = &v.data[gk * d];
                    for (std::size_t e = 0; e < d; ++e) acc[e] += w * vrow[e];
                }
                mu = mu_new;
            }
            if (plan.mode == BlockMode::global && store && !store->chunks().empty()) {
                // recall keyed on the query-block mean, contributions unweighted
                std::vector<T> qmean(d, T(0));
                const std::size_t q_lo = bi * bs;
                for (std::size_t gq2 = q_lo; gq2 < q_hi; ++gq2)
                    for (std::size_t e = 0; e < d; ++e) qmean[e] += q.data[gq2 * d + e];
                for (std::size_t e = 0; e < d; ++e) qmean[e] /= static_cast<T>(q_hi - q_lo);
                for (const auto& hit : store->retrieve(qmean.data(), d)) {
                    const auto& ch = *hit.chunk;
                    const std::size_t rows = ch.keys.shape[0];
                    scores.resize(std::max(scores.size(), rows));
                    T block_max = -std::numeric_limits<T>::infinity();
                    for (std::size_t r = 0; r < rows; ++r) {
                        T s = T(0);
                        for (std::size_t e = 0; e < d; ++e) s += qrow[e] * ch.keys(r, e);
                        scores[r] = s * tau;
                        block_max = std::max(block_max, scores[r]);
                    }
                    const T mu_new = std::max(mu, block_max);
                    const T rescale = std::isinf(mu) ? T(0) : std::exp(mu - mu_new);
                    z *= rescale;
                    for (std::size_t e = 0; e < d; ++e) acc[e] *= rescale;
                    for (std::size_t r = 0; r < rows; ++r) {
                        const T w = std::exp(scores[r] - mu_new);
                        z += w;
                        for (std::size_t e = 0; e < d; ++e) acc[e] += w * ch.values(r, e);
                    }
                    mu = mu_new;
                }
            }
            for (std::size_t e = 0; e < d; ++e) acc[e] /= z;
        }
    }
    return out;
}

}  // namespace mka
