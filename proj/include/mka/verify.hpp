#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mka/bench.hpp"
#include "mka/diffcheck.hpp"
#include "mka/engines.hpp"
#include "mka/memory.hpp"
#include "mka/routing.hpp"
#include "mka/tensor.hpp"
#include "mka/workload.hpp"

namespace mka {

struct PropertyResult {
    std::string name;
    std::size_t instances = 0;
    double worst_err = 0.0;
    bool passed = false;
    std::string note;
};

namespace verify_detail {

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
    return m;
}

template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, rel_err(static_cast<double>(a.data[i]), static_cast<double>(b.data[i])));
    return m;
}

// Random point on the 3-simplex.
inline Tensor<double> random_simplex(Rng& rng) {
    Tensor<double> lam({kNumLevels});
    double sum = 0.0;
    for (std::size_t l = 0; l < kNumLevels; ++l) {
        lam(l) = -std::log(1.0 - rng.uniform01() + 1e-300);
        sum += lam(l);
    }
    for (std::size_t l = 0; l < kNumLevels; ++l) lam(l) /= sum;
    return lam;
}

template <typename T>
std::array<LevelKv<T>, kNumLevels> random_levels(Rng& rng, std::size_t d, std::size_t max_keys,
                                                 bool allow_empty = true) {
    std::array<LevelKv<T>, kNumLevels> levels;
    bool any = false;
    for (std::size_t l = 0; l < kNumLevels; ++l) {
        std::size_t n = allow_empty ? rng.below(max_keys + 1) : 1 + rng.below(max_keys);
        if (l == kNumLevels - 1 && !any && n == 0) n = 1;  // keep the mixture nondegenerate
        if (n > 0) {
            levels[l].k = Tensor<T>::random({n, d}, rng);
            levels[l].v = Tensor<T>::random({n, d}, rng);
            any = true;
        }
    }
    return levels;
}

}  // namespace verify_detail

// ---- tensor-kernels properties -----------------------------------------

inline PropertyResult check_softmax_row_sums(std::uint64_t seed, std::size_t instances = 50) {
    PropertyResult r{"tensor.softmax_row_sums", instances};
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        auto s = Tensor<double>::random({1 + rng.below(8), 1 + rng.below(8)}, rng, -30.0, 30.0);
        auto p = softmax_rows(s);
        for (std::size_t row = 0; row < p.shape[0]; ++row) {
            double sum = 0.0;
            for (std::size_t j = 0; j < p.shape[1]; ++j) sum += p(row, j);
            r.worst_err = std::max(r.worst_err, std::abs(sum - 1.0));
        }
    }
    r.passed = r.worst_err < 1e-12;
    return r;
}

inline PropertyResult check_softmax_shift_invariance(std::uint64_t seed, std::size_t instances = 50) {
    PropertyResult r{"tensor.softmax_shift_invariance", instances};
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        auto s = Tensor<double>::random({1 + rng.below(6), 2 + rng.below(6)}, rng, -5.0, 5.0);
        const double c = rng.uniform(-50.0, 50.0);
        auto shifted = s;
        for (auto& v : shifted.data) v += c;
        r.worst_err = std::max(r.worst_err,
                               verify_detail::max_abs_diff(softmax_rows(s), softmax_rows(shifted)));
    }
    r.passed = r.worst_err < 1e-6;
    return r;
}

inline PropertyResult check_matmul_oracle(std::uint64_t seed, std::size_t instances = 30) {
    PropertyResult r{"tensor.matmul_triple_loop_oracle", instances};
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t m = 1 + rng.below(32), k = 1 + rng.below(32), n = 1 + rng.below(32);
        auto a = Tensor<double>::random({m, k}, rng);
        auto b = Tensor<double>::random({k, n}, rng);
        auto c = matmul(a, b);
        Tensor<double> oracle({m, n});
        for (std::size_t ii = 0; ii < m; ++ii)
            for (std::size_t jj = 0; jj < n; ++jj)
                for (std::size_t pp = 0; pp < k; ++pp) oracle(ii, jj) += a(ii, pp) * b(pp, jj);
        r.worst_err = std::max(r.worst_err, verify_detail::max_abs_diff(c, oracle));
    }
    r.passed = r.worst_err < 1e-12;
    return r;
}

inline PropertyResult check_split_merge_roundtrip(std::uint64_t seed, std::size_t instances = 20) {
    PropertyResult r{"tensor.split_merge_roundtrip", instances};
    Rng rng(seed);
    bool exact = true;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t h = 1 + rng.below(4);
        const std::size_t dh = 1 + rng.below(6);
        ModelDims dims(h * dh, h, dh);
        auto x = Tensor<double>::random({1 + rng.below(3), 1 + rng.below(6), h * dh}, rng);
        auto back = merge_heads(split_heads(x, dims), dims);
        exact = exact && back.data == x.data;
    }
    r.passed = exact;
    if (!exact) r.worst_err = 1.0;
    return r;
}

// ---- memory-hierarchy properties ---------------------------------------

inline PropertyResult check_summary_causality(std::uint64_t seed, std::size_t instances = 30) {
    PropertyResult r{"memory.m2_causality_exact", instances};
    Rng rng(seed);
    bool exact = true;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t s = 2 + rng.below(10), d = 1 + rng.below(6);
        auto x = Tensor<double>::random({1, s, d}, rng);
        const SummaryMode mode = rng.below(2) ? SummaryMode::ema(0.25 + 0.5 * rng.uniform01())
                                              : SummaryMode::prefix_mean();
        auto lv = build_levels(x, mode);
        const std::size_t t = rng.below(s - 1);
        auto x2 = x;
        for (std::size_t p = t + 1; p < s; ++p)
            for (std::size_t j = 0; j < d; ++j) x2(0, p, j) = rng.uniform(-100.0, 100.0);
        auto lv2 = build_levels(x2, mode);
        for (std::size_t p = 0; p <= t; ++p)
            for (std::size_t j = 0; j < d; ++j)
                exact = exact && lv.m2(0, p, j) == lv2.m2(0, p, j);
    }
    r.passed = exact;
    if (!exact) r.worst_err = 1.0;
    return r;
}

inline PropertyResult check_prefix_mean_oracle(std::uint64_t seed, std::size_t instances = 30) {
    PropertyResult r{"memory.prefix_mean_brute_force", instances};
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t s = 1 + rng.below(12), d = 1 + rng.below(6);
        auto x = Tensor<double>::random({1, s, d}, rng);
        auto lv = build_levels(x, SummaryMode::prefix_mean());
        for (std::size_t t = 0; t < s; ++t)
            for (std::size_t j = 0; j < d; ++j) {
                double sum = 0.0;
                for (std::size_t p = 0; p <= t; ++p) sum += x(0, p, j);
                r.worst_err = std::max(r.worst_err,
                                       std::abs(lv.m2(0, t, j) - sum / static_cast<double>(t + 1)));
            }
    }
    r.passed = r.worst_err < 1e-12;
    return r;
}

inline PropertyResult check_retrieve_contract(std::uint64_t seed, std::size_t instances = 30) {
    PropertyResult r{"memory.retrieve_topr_unique", instances};
    Rng rng(seed);
    bool ok = true;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t d = 4 + rng.below(8);
        const std::size_t top_r = 1 + rng.below(6);
        ChunkStore<double> store(d, 32, top_r, rng.next_u64());
        const std::size_t n_chunks = rng.below(10);
        for (std::size_t c = 0; c < n_chunks; ++c) {
            auto keys = Tensor<double>::random({2, d}, rng);
            auto vals = Tensor<double>::random({2, d}, rng);
            store.insert_chunk(std::move(keys), std::move(vals), 2 * c, 2 * c + 2);
        }
        auto q = Tensor<double>::random({d}, rng);
        auto hits = store.retrieve(q);
        ok = ok && hits.size() == std::min(top_r, n_chunks);
        for (std::size_t a = 0; a < hits.size(); ++a) {
            for (std::size_t b = a + 1; b < hits.size(); ++b)
                ok = ok && hits[a].chunk->id != hits[b].chunk->id;
            if (a + 1 < hits.size()) ok = ok && hits[a].hamming <= hits[a + 1].hamming;
        }
    }
    r.passed = ok;
    if (!ok) r.worst_err = 1.0;
    return r;
}

inline PropertyResult check_signature_determinism(std::uint64_t seed, std::size_t instances = 20) {
    PropertyResult r{"memory.signature_determinism", instances};
    Rng rng(seed);
    bool ok = true;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t d = 4 + rng.below(12);
        const std::uint64_t s = rng.next_u64();
        ChunkStore<double> a(d, 64, 4, s), b(d, 64, 4, s);
        auto v = Tensor<double>::random({d}, rng);
        ok = ok && a.signature(v) == b.signature(v);
        // sign antisymmetry: flipping v complements every bit (dots almost surely nonzero)
        auto neg = v;
        for (auto& e : neg.data) e = -e;
        auto sv = a.signature(v), sn = a.signature(neg);
        for (std::size_t bit = 0; bit < 64; ++bit) {
            const bool x = (sv[bit / 8] >> (bit % 8)) & 1;
            const bool y = (sn[bit / 8] >> (bit % 8)) & 1;
            ok = ok && x != y;
        }
    }
    r.passed = ok;
    if (!ok) r.worst_err = 1.0;
    return r;
}

// Monte-Carlo agreement of signature-bit sharing with the 1 - theta/pi
// hyperplane-LSH collision rate at cosine 0.99.
inline PropertyResult check_signature_collision_rate(std::uint64_t seed,
                                                     std::size_t instances = 1000) {
    PropertyResult r{"memory.signature_collision_rate", instances};
    const std::size_t d = 32, h_bits = 64;
    const double cosine = 0.99;
    const double expected = 1.0 - std::acos(cosine) / 3.14159265358979323846;
    Rng rng(seed);
    double shared_total = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        ChunkStore<double> store(d, h_bits, 4, rng.next_u64());
        Tensor<double> a({d}), w({d});
        for (auto& e : a.data) e = rng.gaussian();
        for (auto& e : w.data) e = rng.gaussian();
        double na = 0.0, dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) na += a(j) * a(j);
        na = std::sqrt(na);
        for (auto& e : a.data) e /= na;
        for (std::size_t j = 0; j < d; ++j) dot += a(j) * w(j);
        double nw = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            w(j) -= dot * a(j);
            nw += w(j) * w(j);
        }
        nw = std::sqrt(nw);
        const double sin_t = std::sqrt(1.0 - cosine * cosine);
        Tensor<double> b({d});
        for (std::size_t j = 0; j < d; ++j) b(j) = cosine * a(j) + sin_t * w(j) / nw;
        const auto sa = store.signature(a), sb = store.signature(b);
        const std::size_t ham = ChunkStore<double>::hamming(sa, sb);
        shared_total += 1.0 - static_cast<double>(ham) / static_cast<double>(h_bits);
    }
    const double mean_shared = shared_total / static_cast<double>(instances);
    r.worst_err = std::abs(mean_shared - expected);
    r.passed = mean_shared >= 0.90 && r.worst_err < 0.02;
    r.note = "mean shared bits " + std::to_string(mean_shared) + ", expectation " +
             std::to_string(expected);
    return r;
}

// Planted-needle recall against the exact-NN brute-force oracle.
inline PropertyResult check_lsh_recall(std::uint64_t seed, std::size_t trials = 200,
                                       std::size_t distractors = 64, std::size_t top_r = 8) {
    PropertyResult r{"memory.lsh_planted_needle_recall", trials};
    const std::size_t d = 32, h_bits = 64;
    const double cosine = 0.98;
    Rng rng(seed);
    std::size_t recalled = 0;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        ChunkStore<double> store(d, h_bits, top_r, rng.next_u64());
        Tensor<double> q({d});
        for (auto& e : q.data) e = rng.gaussian();
        double nq = 0.0;
        for (double e : q.data) nq += e * e;
        nq = std::sqrt(nq);
        for (auto& e : q.data) e /= nq;
        // planted chunk at cosine >= 0.98 to the query
        Tensor<double> w({d});
        for (auto& e : w.data) e = rng.gaussian();
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += q(j) * w(j);
        double nw = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            w(j) -= dot * q(j);
            nw += w(j) * w(j);
        }
        nw = std::sqrt(nw);
        Tensor<double> needle({d});
        const double sin_t = std::sqrt(1.0 - cosine * cosine);
        for (std::size_t j = 0; j < d; ++j) needle(j) = cosine * q(j) + sin_t * w(j) / nw;

        std::uint64_t needle_id = 0;
        const std::size_t needle_pos = rng.below(distractors + 1);
        std::size_t inserted = 0;
        for (std::size_t c = 0; c <= distractors; ++c) {
            Tensor<double> keys({1, d});
            if (c == needle_pos) {
                for (std::size_t j = 0; j < d; ++j) keys(0, j) = needle(j);
            } else {
                for (auto& e : keys.data) e = rng.gaussian();
            }
            Tensor<double> vals = Tensor<double>::random({1, d}, rng);
            const std::uint64_t id = store.insert_chunk(std::move(keys), std::move(vals),
                                                        inserted, inserted + 1);
            if (c == needle_pos) needle_id = id;
            ++inserted;
        }
        // brute-force oracle: the needle must be the true cosine NN
        double best = -2.0;
        std::uint64_t best_id = 0;
        for (const auto& c : store.chunks()) {
            double cdot = 0.0, cn = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                cdot += q(j) * c.centroid(j);
                cn += c.centroid(j) * c.centroid(j);
            }
            const double cs = cdot / std::sqrt(cn);
            if (cs > best) {
                best = cs;
                best_id = c.id;
            }
        }
        if (best_id != needle_id) continue;  // oracle mismatch counts as a miss
        for (const auto& hit : store.retrieve(q)) {
            if (hit.chunk->id == needle_id) {
                ++recalled;
                break;
            }
        }
    }
    const double recall = static_cast<double>(recalled) / static_cast<double>(trials);
    r.worst_err = 1.0 - recall;
    r.passed = recall >= 0.95;
    r.note = "recall " + std::to_string(recall);
    return r;
}

// ---- routing properties -------------------------------------------------

inline PropertyResult check_routing_simplex(std::uint64_t seed, std::size_t instances = 50) {
    PropertyResult r{"routing.simplex_all_policies", instances};
    Rng rng(seed);
    bool ok = true;
    const RoutingPolicy policies[] = {RoutingPolicy::learned_soft(), RoutingPolicy::fixed_uniform(),
                                      RoutingPolicy::hard_topk(1), RoutingPolicy::hard_topk(2)};
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t d = 2 + rng.below(8);
        auto q = Tensor<double>::random({1, 2 + rng.below(6), d}, rng, -3.0, 3.0);
        auto params = GateParams<double>::init(d, rng.next_u64());
        for (const auto& policy : policies) {
            auto rw = gate(q, params, policy);
            for (std::size_t t = 0; t < q.shape[1]; ++t) {
                double sum = 0.0;
                std::size_t support = 0;
                for (std::size_t l = 0; l < kNumLevels; ++l) {
                    const double lam = rw.lambda(0, t, l);
                    ok = ok && lam >= 0.0;
                    sum += lam;
                    if (lam > 0.0) ++support;
                }
                r.worst_err = std::max(r.worst_err, std::abs(sum - 1.0));
                if (policy.kind == RoutingPolicy::Kind::hard_topk)
                    ok = ok && support <= policy.k;
            }
        }
    }
    r.passed = ok && r.worst_err < 1e-6;
    return r;
}

inline PropertyResult check_routing_shift_and_independence(std::uint64_t seed,
                                                           std::size_t instances = 50) {
    PropertyResult r{"routing.argmax_shift_and_uniform_independence", instances};
    Rng rng(seed);
    bool ok = true;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t d = 2 + rng.below(8);
        auto q = Tensor<double>::random({1, 3, d}, rng, -3.0, 3.0);
        auto params = GateParams<double>::init(d, rng.next_u64());
        auto soft = gate(q, params, RoutingPolicy::learned_soft());
        auto shifted_params = params;
        const double c = rng.uniform(-5.0, 5.0);
        for (std::size_t l = 0; l < kNumLevels; ++l) shifted_params.b(l) += c;
        auto soft2 = gate(q, shifted_params, RoutingPolicy::learned_soft());
        for (std::size_t t = 0; t < 3; ++t) {
            std::size_t am1 = 0, am2 = 0;
            for (std::size_t l = 1; l < kNumLevels; ++l) {
                if (soft.lambda(0, t, l) > soft.lambda(0, t, am1)) am1 = l;
                if (soft2.lambda(0, t, l) > soft2.lambda(0, t, am2)) am2 = l;
            }
            ok = ok && am1 == am2;
        }
        auto uni = gate(q, params, RoutingPolicy::fixed_uniform());
        auto q2 = Tensor<double>::random({1, 3, d}, rng, -3.0, 3.0);
        auto uni2 = gate(q2, params, RoutingPolicy::fixed_uniform());
        ok = ok && uni.lambda.data == uni2.lambda.data;
    }
    r.passed = ok;
    if (!ok) r.worst_err = 1.0;
    return r;
}

// ---- attention-engine properties ---------------------------------------

inline PropertyResult check_theorem1_equivalence(std::uint64_t seed, std::size_t instances = 1000) {
    PropertyResult r{"engines.theorem1_equivalence", instances};
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t s = 1 + rng.below(8), d = 1 + rng.below(8);
        auto q = Tensor<double>::random({s, d}, rng);
        auto levels = verify_detail::random_levels<double>(rng, d, 8);
        auto lam = verify_detail::random_simplex(rng);
        auto direct = gated_mixture_direct(q, levels, lam);
        auto recursive = gated_mixture_recursive(q, levels, lam);
        auto stable = gated_mixture_stable(q, levels, lam);
        r.worst_err = std::max({r.worst_err, verify_detail::max_rel_diff(direct, recursive),
                                verify_detail::max_rel_diff(direct, stable),
                                verify_detail::max_rel_diff(recursive, stable)});
    }
    r.passed = r.worst_err < 1e-10;
    return r;
}

inline PropertyResult check_stable_overflow_single(std::uint64_t seed, std::size_t instances = 100) {
    PropertyResult r{"engines.stable_single_precision_overflow_probe", instances};
    Rng rng(seed);
    std::size_t naive_nonfinite = 0, stable_finite = 0;
    for (std::size_t i = 0; i < instances; ++i) {
        // keys form a basis so q rows carry the scores directly; magnitudes
        // straddle the float exp overflow boundary (~88.7)
        const std::size_t s = 4, d = 4;
        Tensor<float> q({s, d});
        for (auto& v : q.data) v = static_cast<float>(rng.uniform(75.0, 95.0));
        std::array<LevelKv<float>, kNumLevels> levels;
        for (std::size_t l = 0; l < kNumLevels; ++l) {
            levels[l].k = Tensor<float>({d, d});
            for (std::size_t j = 0; j < d; ++j) levels[l].k(j, j) = 1.0f;
            levels[l].v = Tensor<float>::random({d, d}, rng);
        }
        auto lam = verify_detail::random_simplex(rng).cast<float>();
        auto stable = gated_mixture_stable(q, levels, lam);
        if (stable.all_finite()) ++stable_finite;
        auto naive = gated_mixture_recursive(q, levels, lam);
        if (!naive.all_finite()) ++naive_nonfinite;
    }
    const double stable_rate = static_cast<double>(stable_finite) / instances;
    const double naive_rate = static_cast<double>(naive_nonfinite) / instances;
    r.passed = stable_rate == 1.0 && naive_rate >= 0.99;
    r.worst_err = 1.0 - std::min(stable_rate, naive_rate);
    r.note = "stable finite " + std::to_string(stable_finite) + "/" + std::to_string(instances) +
             ", naive non-finite " + std::to_string(naive_nonfinite) + "/" +
             std::to_string(instances);
    return r;
}

inline PropertyResult check_dense_weight_normalization(std::uint64_t seed,
                                                       std::size_t instances = 30) {
    PropertyResult r{"engines.dense_attention_weight_normalization", instances};
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t s = 2 + rng.below(10), d = 2 + rng.below(6);
        auto q = Tensor<double>::random({s, d}, rng);
        auto k = Tensor<double>::random({s, d}, rng);
        Tensor<double> scores({s, s});
        for (std::size_t a = 0; a < s; ++a)
            for (std::size_t b = 0; b < s; ++b) {
                double sc = 0.0;
                for (std::size_t e = 0; e < d; ++e) sc += q(a, e) * k(b, e);
                scores(a, b) = b <= a ? sc : -std::numeric_limits<double>::infinity();
            }
        auto w = softmax_rows(scores);
        for (std::size_t a = 0; a < s; ++a) {
            double sum = 0.0;
            for (std::size_t b = 0; b < s; ++b) sum += w(a, b);
            r.worst_err = std::max(r.worst_err, std::abs(sum - 1.0));
        }
    }
    r.passed = r.worst_err < 1e-6;
    return r;
}

// Engine factory used by the causality and collapse suites.
template <typename T>
struct EngineFixture {
    ModelDims dims;
    ProjectionSet<T> proj;
    GateParams<T> gate_params;
    EngineOptions<T> opts;

    static EngineFixture make(Rng& rng, std::size_t d_model = 8, std::size_t n_heads = 2) {
        EngineFixture f{ModelDims(d_model, n_heads, d_model / n_heads),
                        ProjectionSet<T>::random(d_model, rng),
                        GateParams<T>::init(d_model, rng.next_u64()),
                        {}};
        return f;
    }
};

inline PropertyResult check_engine_causality(std::uint64_t seed, std::size_t trials = 200) {
    PropertyResult r{"engines.causality_exact", trials};
    Rng rng(seed);
    bool ok = true;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        auto f = EngineFixture<double>::make(rng);
        const std::size_t s = 3 + rng.below(10);
        auto x = Tensor<double>::random({1, s, f.dims.d_model}, rng);
        const std::size_t t = rng.below(s - 1);
        auto x2 = x;
        for (std::size_t p = t + 1; p < s; ++p)
            for (std::size_t j = 0; j < f.dims.d_model; ++j)
                x2(0, p, j) = rng.uniform(-10.0, 10.0);

        auto check_prefix = [&](const Tensor<double>& a, const Tensor<double>& b) {
            for (std::size_t p = 0; p <= t; ++p)
                for (std::size_t j = 0; j < f.dims.d_model; ++j)
                    if (a(0, p, j) != b(0, p, j)) return false;
            return true;
        };

        ok = ok && check_prefix(reference_causal_mha(x, f.proj, f.dims),
                                reference_causal_mha(x2, f.proj, f.dims));
        ok = ok && check_prefix(symbolic_mka_forward(x, f.proj, f.gate_params, f.dims, f.opts).o,
                                symbolic_mka_forward(x2, f.proj, f.gate_params, f.dims, f.opts).o);
        ok = ok && check_prefix(fastmka_forward(x, f.proj, f.gate_params, f.dims, f.opts).o,
                                fastmka_forward(x2, f.proj, f.gate_params, f.dims, f.opts).o);

        // block engine causality on the raw single-head primitive
        const std::size_t d = 4;
        auto q = Tensor<double>::random({s, d}, rng);
        auto k = Tensor<double>::random({s, d}, rng);
        auto v = Tensor<double>::random({s, d}, rng);
        auto q2 = q, k2 = k, v2 = v;
        for (std::size_t p = t + 1; p < s; ++p)
            for (std::size_t j = 0; j < d; ++j) {
                q2(p, j) = rng.uniform(-10.0, 10.0);
                k2(p, j) = rng.uniform(-10.0, 10.0);
                v2(p, j) = rng.uniform(-10.0, 10.0);
            }
        BlockPlan plan;
        plan.n = s;
        plan.b_blk = 1 + rng.below(4);
        plan.pad = true;
        auto o1 = block_mka(q, k, v, plan);
        auto o2 = block_mka(q2, k2, v2, plan);
        for (std::size_t p = 0; p <= t; ++p)
            for (std::size_t j = 0; j < d; ++j) ok = ok && o1(p, j) == o2(p, j);
    }
    r.passed = ok;
    if (!ok) r.worst_err = 1.0;
    return r;
}

// lambda=(1,0,0) with retrieval disabled: every MKA variant collapses to
// plain causal MHA.
inline PropertyResult check_collapse_chain(std::uint64_t seed, std::size_t instances = 20) {
    PropertyResult r{"engines.collapse_chain_l1_only", instances};
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t b = 1 + rng.below(2);
        const std::size_t s = 2 + rng.below(63);
        const std::size_t h = 1 + rng.below(2);
        const std::size_t dh = 2 + rng.below(4);
        const std::size_t d_model = h * dh;
        ModelDims dims(d_model, h, dh);
        auto proj = ProjectionSet<double>::random(d_model, rng);
        auto gp = GateParams<double>::init(d_model, rng.next_u64());
        auto x = Tensor<double>::random({b, s, d_model}, rng);

        EngineOptions<double> opts;
        opts.tiers = TierSet{true, false, false};  // forces lambda = (1,0,0) exactly

        auto mha = reference_causal_mha(x, proj, dims);
        auto sym = symbolic_mka_forward(x, proj, gp, dims, opts).o;
        auto fast = fastmka_forward(x, proj, gp, dims, opts).o;
        r.worst_err = std::max({r.worst_err, verify_detail::max_abs_diff(mha, sym),
                                verify_detail::max_abs_diff(mha, fast)});

        BlockPlan plan;
        plan.n = s;
        plan.b_blk = 1 + rng.below(8);
        plan.pad = true;
        auto blocked = block_engine_forward(x, proj, dims, plan);
        r.worst_err = std::max(r.worst_err, verify_detail::max_abs_diff(mha, blocked));
    }
    r.passed = r.worst_err < 1e-12;
    return r;
}

inline PropertyResult check_block_size_independence(std::uint64_t seed, std::size_t n = 64) {
    PropertyResult r{"engines.block_size_independence", 4};
    Rng rng(seed);
    const std::size_t d = 4;
    auto q = Tensor<double>::random({n, d}, rng);
    auto k = Tensor<double>::random({n, d}, rng);
    auto v = Tensor<double>::random({n, d}, rng);
    std::optional<Tensor<double>> baseline;
    for (std::size_t b : {2, 4, 8, 16}) {
        BlockPlan plan;
        plan.n = n;
        plan.b_blk = b;
        auto o = block_mka(q, k, v, plan);
        if (!baseline) baseline = o;
        else r.worst_err = std::max(r.worst_err, verify_detail::max_abs_diff(*baseline, o));
    }
    // one-block degenerate tiling must equal the dense result too
    BlockPlan dense;
    dense.n = n;
    dense.b_blk = n;
    r.worst_err = std::max(r.worst_err,
                           verify_detail::max_abs_diff(*baseline, block_mka(q, k, v, dense)));
    r.passed = r.worst_err < 1e-10;
    return r;
}

inline PropertyResult check_decode_consistency(std::uint64_t seed, std::size_t max_s = 64) {
    PropertyResult r{"engines.decode_prefill_consistency", max_s};
    Rng rng(seed);
    auto f = EngineFixture<double>::make(rng, 8, 2);
    f.opts.summary = SummaryMode::prefix_mean();
    auto x = Tensor<double>::random({1, max_s, f.dims.d_model}, rng);
    FusedKvCache<double> cache;
    for (std::size_t t = 0; t < max_s; ++t) {
        Tensor<double> x_t({1, 1, f.dims.d_model});
        for (std::size_t j = 0; j < f.dims.d_model; ++j) x_t(0, 0, j) = x(0, t, j);
        auto step = fastmka_decode_step(cache, x_t, f.proj, f.gate_params, f.dims, f.opts);
        // full recompute oracle over the prefix
        Tensor<double> prefix({1, t + 1, f.dims.d_model});
        std::copy(x.data.begin(), x.data.begin() + (t + 1) * f.dims.d_model, prefix.data.begin());
        auto full = fastmka_forward(prefix, f.proj, f.gate_params, f.dims, f.opts);
        for (std::size_t j = 0; j < f.dims.d_model; ++j)
            r.worst_err = std::max(r.worst_err,
                                   std::abs(step.o(0, 0, j) - full.o(0, t, j)));
        cache = std::move(step.cache);
    }
    r.passed = r.worst_err < 1e-12;
    return r;
}

inline PropertyResult check_cache_append_only(std::uint64_t seed, std::size_t steps = 16) {
    PropertyResult r{"engines.cache_append_only", steps};
    Rng rng(seed);
    auto f = EngineFixture<double>::make(rng, 8, 2);
    bool ok = true;
    FusedKvCache<double> cache;
    for (std::size_t t = 0; t < steps; ++t) {
        auto x_t = Tensor<double>::random({1, 1, f.dims.d_model}, rng);
        auto step = fastmka_decode_step(cache, x_t, f.proj, f.gate_params, f.dims, f.opts);
        ok = ok && step.cache.t_past == cache.t_past + 1;
        // previously stored fused KV must be preserved bit-exactly
        if (cache.t_past > 0) {
            const std::size_t h = f.dims.n_heads, dh = f.dims.d_head;
            for (std::size_t hi = 0; hi < h; ++hi)
                for (std::size_t p = 0; p < cache.t_past; ++p)
                    for (std::size_t e = 0; e < dh; ++e) {
                        ok = ok && step.cache.k(0, hi, p, e) == cache.k(0, hi, p, e);
                        ok = ok && step.cache.v(0, hi, p, e) == cache.v(0, hi, p, e);
                    }
        }
        cache = std::move(step.cache);
    }
    r.passed = ok;
    if (!ok) r.worst_err = 1.0;
    return r;
}

inline PropertyResult check_tier_ablation(std::uint64_t seed, std::size_t instances = 20) {
    PropertyResult r{"engines.tier_ablation_identities", instances};
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        auto f = EngineFixture<double>::make(rng);
        const std::size_t s = 2 + rng.below(8);
        auto x = Tensor<double>::random({1, s, f.dims.d_model}, rng);

        EngineOptions<double> l1only = f.opts;
        l1only.tiers = TierSet{true, false, false};
        r.worst_err = std::max(r.worst_err, verify_detail::max_abs_diff(
            fastmka_forward(x, f.proj, f.gate_params, f.dims, l1only).o,
            reference_causal_mha(x, f.proj, f.dims)));

        // with no chunks retrievable, m3 is all-zero and contributes nothing:
        // an empty store and an absent store give the same outputs exactly
        ChunkStore<double> empty_store(f.dims.d_model, 32, 4, rng.next_u64());
        EngineOptions<double> with_store = f.opts;
        with_store.store = &empty_store;
        r.worst_err = std::max(r.worst_err, verify_detail::max_abs_diff(
            fastmka_forward(x, f.proj, f.gate_params, f.dims, with_store).o,
            fastmka_forward(x, f.proj, f.gate_params, f.dims, f.opts).o));
    }
    r.passed = r.worst_err < 1e-12;
    return r;
}

// ---- diffcheck properties ----------------------------------------------

inline PropertyResult check_mixture_gradients(std::uint64_t seed, std::size_t instances = 100) {
    PropertyResult r{"diffcheck.gated_mixture_vs_fd", instances};
    const double h = 1e-5;
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t s = 1 + rng.below(3), d = 1 + rng.below(3);
        auto q = Tensor<double>::random({s, d}, rng);
        auto levels = verify_detail::random_levels<double>(rng, d, 3, /*allow_empty=*/false);
        std::array<double, kNumLevels> logits{rng.uniform(-1, 1), rng.uniform(-1, 1),
                                              rng.uniform(-1, 1)};
        auto upstream = Tensor<double>::random({s, d}, rng);
        auto g = grad_gated_mixture(q, levels, logits, upstream);

        auto loss_q = [&](const std::vector<double>& flat) {
            Tensor<double> qq({s, d}, flat);
            auto lam = Tensor<double>({kNumLevels},
                                      {detail::softmax3(logits)[0], detail::softmax3(logits)[1],
                                       detail::softmax3(logits)[2]});
            auto out = gated_mixture_stable(qq, levels, lam);
            double acc = 0.0;
            for (std::size_t e = 0; e < out.size(); ++e) acc += upstream.data[e] * out.data[e];
            return acc;
        };
        auto fd_q = fd_gradient(loss_q, q.data, h);
        for (std::size_t e = 0; e < fd_q.size(); ++e)
            r.worst_err = std::max(r.worst_err, rel_err(fd_q[e], g.dq.data[e]));

        auto loss_logits = [&](const std::vector<double>& lg) {
            std::array<double, kNumLevels> l{lg[0], lg[1], lg[2]};
            auto sm = detail::softmax3(l);
            auto lam = Tensor<double>({kNumLevels}, {sm[0], sm[1], sm[2]});
            auto out = gated_mixture_stable(q, levels, lam);
            double acc = 0.0;
            for (std::size_t e = 0; e < out.size(); ++e) acc += upstream.data[e] * out.data[e];
            return acc;
        };
        auto fd_l = fd_gradient(loss_logits, {logits[0], logits[1], logits[2]}, h);
        for (std::size_t l = 0; l < kNumLevels; ++l)
            r.worst_err = std::max(r.worst_err, rel_err(fd_l[l], g.dlogits[l]));

        for (std::size_t l = 0; l < kNumLevels; ++l) {
            if (levels[l].v.size() == 0) continue;
            auto loss_v = [&](const std::vector<double>& flat) {
                auto lv = levels;
                lv[l].v.data = flat;
                auto sm = detail::softmax3(logits);
                auto lam = Tensor<double>({kNumLevels}, {sm[0], sm[1], sm[2]});
                auto out = gated_mixture_stable(q, lv, lam);
                double acc = 0.0;
                for (std::size_t e = 0; e < out.size(); ++e) acc += upstream.data[e] * out.data[e];
                return acc;
            };
            auto fd_v = fd_gradient(loss_v, levels[l].v.data, h);
            for (std::size_t e = 0; e < fd_v.size(); ++e)
                r.worst_err = std::max(r.worst_err, rel_err(fd_v[e], g.dvalues[l].data[e]));
        }
    }
    r.passed = r.worst_err < 1e-4;
    return r;
}

inline PropertyResult check_gate_gradients(std::uint64_t seed, std::size_t instances = 100) {
    PropertyResult r{"diffcheck.gate_backward_vs_fd", instances};
    const double h = 1e-5;
    Rng rng(seed);
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t d = 1 + rng.below(4), s = 1 + rng.below(3);
        auto q = Tensor<double>::random({1, s, d}, rng);
        auto params = GateParams<double>::init(d, rng.next_u64());
        auto upstream = Tensor<double>::random({1, s, kNumLevels}, rng);
        auto g = gate_backward(q, params, RoutingPolicy::learned_soft(), upstream);

        auto loss = [&](const Tensor<double>& qq, const GateParams<double>& pp) {
            auto rw = gate(qq, pp, RoutingPolicy::learned_soft());
            double acc = 0.0;
            for (std::size_t e = 0; e < rw.lambda.size(); ++e)
                acc += upstream.data[e] * rw.lambda.data[e];
            return acc;
        };
        auto fd_q = fd_gradient(
            [&](const std::vector<double>& flat) {
                Tensor<double> qq({1, s, d}, flat);
                return loss(qq, params);
            },
            q.data, h);
        for (std::size_t e = 0; e < fd_q.size(); ++e)
            r.worst_err = std::max(r.worst_err, rel_err(fd_q[e], g.dq.data[e]));
        auto fd_w = fd_gradient(
            [&](const std::vector<double>& flat) {
                auto pp = params;
                pp.w.data = flat;
                return loss(q, pp);
            },
            params.w.data, h);
        for (std::size_t e = 0; e < fd_w.size(); ++e)
            r.worst_err = std::max(r.worst_err, rel_err(fd_w[e], g.dw.data[e]));
        auto fd_b = fd_gradient(
            [&](const std::vector<double>& flat) {
                auto pp = params;
                pp.b.data = flat;
                return loss(q, pp);
            },
            params.b.data, h);
        for (std::size_t e = 0; e < fd_b.size(); ++e)
            r.worst_err = std::max(r.worst_err, rel_err(fd_b[e], g.db.data[e]));
    }
    r.passed = r.worst_err < 1e-4;
    return r;
}

inline PropertyResult check_zero_lambda_value_grad(std::uint64_t seed, std::size_t instances = 20) {
    PropertyResult r{"diffcheck.zero_lambda_value_grad_exact", instances};
    Rng rng(seed);
    bool ok = true;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t s = 1 + rng.below(3), d = 1 + rng.below(3);
        auto q = Tensor<double>::random({s, d}, rng);
        auto levels = verify_detail::random_levels<double>(rng, d, 3, false);
        // one-hot lambda via saturated logits: softmax gives exactly (1,0,0)
        std::array<double, kNumLevels> logits{0.0, -1e9, -1e9};
        auto upstream = Tensor<double>::random({s, d}, rng);
        auto g = grad_gated_mixture(q, levels, logits, upstream);
        for (std::size_t l = 1; l < kNumLevels; ++l)
            for (double v : g.dvalues[l].data) ok = ok && v == 0.0;
    }
    r.passed = ok;
    if (!ok) r.worst_err = 1.0;
    return r;
}

inline PropertyResult check_fd_self_consistency(std::uint64_t seed, std::size_t instances = 20) {
    PropertyResult r{"diffcheck.fd_halving_order", instances};
    Rng rng(seed);
    bool ok = true;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t n = 2 + rng.below(4);
        std::vector<double> x0(n);
        for (auto& v : x0) v = rng.uniform(-2.0, 2.0);
        auto f = [](const std::vector<double>& x) {
            double acc = 0.0;
            for (double v : x) acc += std::sin(v);
            return acc;
        };
        const double h = 1e-3;
        auto g1 = fd_gradient(f, x0, h);
        auto g2 = fd_gradient(f, x0, h / 2.0);
        double e1 = 0.0, e2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            e1 = std::max(e1, std::abs(g1[j] - std::cos(x0[j])));
            e2 = std::max(e2, std::abs(g2[j] - std::cos(x0[j])));
        }
        // central differences: halving h should shrink the error ~4x
        ok = ok && e2 <= e1 / 2.0 + 1e-14;
        r.worst_err = std::max(r.worst_err, e2);
    }
    r.passed = ok;
    return r;
}

// ---- persistence -------------------------------------------------------

inline PropertyResult check_snapshot_roundtrip(std::uint64_t seed, std::size_t instances = 10) {
    PropertyResult r{"persistence.snapshot_roundtrip_bit_exact", instances};
    Rng rng(seed);
    bool ok = true;
    for (std::size_t i = 0; i < instances; ++i) {
        const std::size_t d = 4 + rng.below(12);
        ChunkStore<double> store(d, 64, 1 + rng.below(8), rng.next_u64());
        const std::size_t n_chunks = 1 + rng.below(8);
        for (std::size_t c = 0; c < n_chunks; ++c) {
            const std::size_t rows = 1 + rng.below(4);
            store.insert_chunk(Tensor<double>::random({rows, d}, rng),
                               Tensor<double>::random({rows, d}, rng), c * rows, (c + 1) * rows);
        }
        const std::string bytes = serialize_store(store);
        auto loaded = deserialize_store<double>(bytes, store.top_r());
        ok = ok && serialize_store(loaded) == bytes;
        auto q = Tensor<double>::random({d}, rng);
        auto before = store.retrieve(q);
        auto after = loaded.retrieve(q);
        ok = ok && before.size() == after.size();
        for (std::size_t j = 0; j < before.size() && ok; ++j)
            ok = before[j].chunk->id == after[j].chunk->id &&
                 before[j].hamming == after[j].hamming;
    }
    r.passed = ok;
    if (!ok) r.worst_err = 1.0;
    return r;
}

// Full property sweep for the verify subcommand.
inline std::vector<PropertyResult> verify_all(std::uint64_t seed) {
    return {
        check_softmax_row_sums(seed),
        check_softmax_shift_invariance(seed + 1),
        check_matmul_oracle(seed + 2),
        check_split_merge_roundtrip(seed + 3),
        check_summary_causality(seed + 4),
        check_prefix_mean_oracle(seed + 5),
        check_retrieve_contract(seed + 6),
        check_signature_determinism(seed + 7),
        check_signature_collision_rate(seed + 8),
        check_lsh_recall(seed + 9),
        check_routing_simplex(seed + 10),
        check_routing_shift_and_independence(seed + 11),
        check_theorem1_equivalence(seed + 12),
        check_stable_overflow_single(seed + 13),
        check_dense_weight_normalization(seed + 14),
        check_engine_causality(seed + 15, 50),
        check_collapse_chain(seed + 16),
        check_block_size_independence(seed + 17),
        check_decode_consistency(seed + 18),
        check_cache_append_only(seed + 19),
        check_tier_ablation(seed + 20),
        check_mixture_gradients(seed + 21),
        check_gate_gradients(seed + 22),
        check_zero_lambda_value_grad(seed + 23),
        check_fd_self_consistency(seed + 24),
        check_snapshot_roundtrip(seed + 25),
    };
}

}  // namespace mka
