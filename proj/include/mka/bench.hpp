#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "mka/config.hpp"
#include "mka/engines.hpp"
#include "mka/workload.hpp"

namespace mka {

// Allocation tracking hooks. The CLI binary installs replacement
// operator new/delete that feed these counters; binaries without the
// replacement simply report zero peak bytes.
namespace allocstats {

inline std::atomic<std::size_t> current{0};
inline std::atomic<std::size_t> peak{0};
inline std::atomic<bool> installed{false};

inline void note_alloc(std::size_t n) {
    const std::size_t cur = current.fetch_add(n, std::memory_order_relaxed) + n;
    std::size_t p = peak.load(std::memory_order_relaxed);
    while (cur > p && !peak.compare_exchange_weak(p, cur, std::memory_order_relaxed)) {
    }
}

inline void note_free(std::size_t n) { current.fetch_sub(n, std::memory_order_relaxed); }

inline void reset_peak() { peak.store(current.load(std::memory_order_relaxed)); }

}  // namespace allocstats

struct BenchRecord {
    std::string engine;
    std::size_t seq_len = 0;
    std::size_t batch = 0;
    double wall_ms_median = 0.0;
    double tokens_per_s = 0.0;
    std::size_t peak_bytes = 0;
    std::uint64_t seed = 0;
    bool skipped = false;
};

namespace detail {

template <typename T>
Tensor<T> head_slice(const Tensor<T>& x_h, std::size_t bi, std::size_t hi) {
    const std::size_t h = x_h.shape[1], s = x_h.shape[2], dh = x_h.shape[3];
    const T* src = &x_h.data[((bi * h + hi) * s) * dh];
    return Tensor<T>({s, dh}, std::vector<T>(src, src + s * dh));
}

}  // namespace detail

// Block engine wrapper: per-head block_mka over projected q/k/v.
template <typename T>
Tensor<T> block_engine_forward(const Tensor<T>& x, const ProjectionSet<T>& proj,
                               const ModelDims& dims, BlockPlan plan,
                               const ChunkStore<T>* store = nullptr) {
    const std::size_t b = x.shape[0], s = x.shape[1];
    plan.n = s;
    if (plan.tau <= 0.0) plan.tau = 1.0 / std::sqrt(static_cast<double>(dims.d_head));
    Tensor<T> q_h = split_heads(project(x, proj.w_q), dims);
    Tensor<T> k_h = split_heads(project(x, proj.w_k), dims);
    Tensor<T> v_h = split_heads(project(x, proj.w_v), dims);
    Tensor<T> out({b, dims.n_heads, s, dims.d_head});
    for (std::size_t bi = 0; bi < b; ++bi)
        for (std::size_t hi = 0; hi < dims.n_heads; ++hi) {
            Tensor<T> o = block_mka(detail::head_slice(q_h, bi, hi),
                                    detail::head_slice(k_h, bi, hi),
                                    detail::head_slice(v_h, bi, hi), plan, store);
            std::copy(o.data.begin(), o.data.end(),
                      out.data.begin() + ((bi * dims.n_heads + hi) * s) * dims.d_head);
        }
    return project(merge_heads(out, dims), proj.w_o);
}

template <typename T>
double run_engine_once(EngineKind engine, const Tensor<T>& x, const ProjectionSet<T>& proj,
                       const GateParams<T>& gp, const ModelDims& dims,
                       const EngineOptions<T>& opts, const BlockPlan& plan) {
    const auto t0 = std::chrono::steady_clock::now();
    volatile T sink = T(0);
    switch (engine) {
        case EngineKind::mha:
            sink = reference_causal_mha(x, proj, dims, opts.tau).data[0];
            break;
        case EngineKind::symbolic_mka:
            sink = symbolic_mka_forward(x, proj, gp, dims, opts).o.data[0];
            break;
        case EngineKind::fastmka:
            sink = fastmka_forward(x, proj, gp, dims, opts).o.data[0];
            break;
        case EngineKind::block_mka_local:
        case EngineKind::block_mka_global:
            sink = block_engine_forward(x, proj, dims, plan, opts.store).data[0];
            break;
    }
    (void)sink;
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

template <typename T>
std::vector<BenchRecord> run_bench(const RunConfig& cfg) {
    cfg.validate();
    const ModelDims dims = cfg.dims();
    Rng rng(cfg.seed);
    const ProjectionSet<T> proj = ProjectionSet<T>::random(dims.d_model, rng);
    const GateParams<T> gp = GateParams<T>::init(dims.d_model, cfg.seed + 1);

    std::optional<ChunkStore<T>> store;
    if (cfg.retrieval_enabled) {
        store.emplace(dims.d_model, cfg.retrieval_h_bits, cfg.retrieval_r, cfg.seed + 2);
        Rng crng(cfg.seed + 3);
        for (std::size_t c = 0; c < 16; ++c) {
            auto keys = Tensor<T>::random({cfg.block_size, dims.d_model}, crng);
            auto vals = Tensor<T>::random({cfg.block_size, dims.d_model}, crng);
            store->insert_chunk(std::move(keys), std::move(vals), c * cfg.block_size,
                                (c + 1) * cfg.block_size);
        }
    }

    std::vector<BenchRecord> records;
    for (EngineKind engine : cfg.engines) {
        for (std::size_t seq_len : cfg.seq_lens) {
            BenchRecord rec;
            rec.engine = engine_name(engine);
            rec.seq_len = seq_len;
            rec.batch = cfg.batch;
            rec.seed = cfg.seed;
            try {
                Tensor<T> x = synth_workload<T>(cfg.seed, cfg.batch, seq_len, dims.d_model);
                EngineOptions<T> opts;
                opts.summary = cfg.summary();
                opts.routing = cfg.routing();
                opts.tau = cfg.tau;
                opts.store = store ? &*store : nullptr;
                BlockPlan plan;
                plan.n = seq_len;
                plan.b_blk = cfg.block_size;
                plan.tau = cfg.tau;
                plan.window = cfg.block_window;
                plan.pad = true;
                plan.mode = engine == EngineKind::block_mka_local ? BlockMode::local
                                                                  : BlockMode::global;
                const ChunkStore<T>* block_store =
                    engine == EngineKind::block_mka_global && store ? &*store : nullptr;
                EngineOptions<T> block_opts = opts;
                block_opts.store = block_store;
                const EngineOptions<T>& use_opts =
                    (engine == EngineKind::block_mka_local || engine == EngineKind::block_mka_global)
                        ? block_opts
                        : opts;

                for (std::size_t w = 0; w < cfg.warmups; ++w)
                    run_engine_once(engine, x, proj, gp, dims, use_opts, plan);
                allocstats::reset_peak();
                std::vector<double> times;
                for (std::size_t r = 0; r < cfg.repeats; ++r)
                    times.push_back(run_engine_once(engine, x, proj, gp, dims, use_opts, plan));
                std::sort(times.begin(), times.end());
                rec.wall_ms_median = times[times.size() / 2];
                rec.tokens_per_s =
                    static_cast<double>(cfg.batch * seq_len) / (rec.wall_ms_median / 1000.0);
                rec.peak_bytes = allocstats::peak.load();
            } catch (const std::bad_alloc&) {
                rec.skipped = true;
            }
            records.push_back(rec);
        }
    }
    return records;
}

inline std::vector<BenchRecord> run_bench_dispatch(const RunConfig& cfg) {
    return cfg.precision == "single" ? run_bench<float>(cfg) : run_bench<double>(cfg);
}

inline std::string render_csv(const std::vector<BenchRecord>& records) {
    std::ostringstream os;
    os << "engine,seq_len,batch,wall_ms_median,tokens_per_s,peak_bytes,seed\n";
    for (const auto& r : records) {
        if (r.skipped) continue;
        os << r.engine << "," << r.seq_len << "," << r.batch << "," << std::setprecision(6)
           << std::fixed << r.wall_ms_median << "," << r.tokens_per_s << "," << r.peak_bytes
           << "," << r.seed << "\n";
    }
    return os.str();
}

namespace detail {

inline const BenchRecord* find_record(const std::vector<BenchRecord>& records,
                                      const std::string& engine, std::size_t seq_len) {
    for (const auto& r : records)
        if (!r.skipped && r.engine == engine && r.seq_len == seq_len) return &r;
    return nullptr;
}

}  // namespace detail

inline std::string render_markdown(const std::vector<BenchRecord>& records, const RunConfig& cfg) {
    std::ostringstream os;
    os << "# Benchmark report\n\n";
    os << "Forward-only wall time, median of " << cfg.repeats << " repeats after " << cfg.warmups
       << " warmups. Timings exclude any backward pass and are not comparable to\n"
          "GPU training-throughput numbers.\n\n";
    os << "## Config\n\n```\n" << cfg.echo() << "```\n\n";
    os << "## Timings\n\n";
    os << "| engine | seq_len | wall ms (median) | tokens/s | peak bytes |\n";
    os << "|---|---:|---:|---:|---:|\n";
    for (const auto& r : records) {
        if (r.skipped) {
            os << "| " << r.engine << " | " << r.seq_len << " | skipped (oom) | - | - |\n";
            continue;
        }
        os << "| " << r.engine << " | " << r.seq_len << " | " << std::fixed
           << std::setprecision(3) << r.wall_ms_median << " | " << std::setprecision(1)
           << r.tokens_per_s << " | " << r.peak_bytes << " |\n";
    }

    os << "\n## Speedup ratios\n\n";
    os << "| seq_len | symbolic_mka / fastmka | mha / fastmka |\n|---:|---:|---:|\n";
    for (std::size_t s : cfg.seq_lens) {
        const auto* fast = detail::find_record(records, "fastmka", s);
        const auto* sym = detail::find_record(records, "symbolic_mka", s);
        const auto* mha = detail::find_record(records, "mha", s);
        if (!fast) continue;
        os << "| " << s << " | ";
        if (sym) os << std::fixed << std::setprecision(2) << sym->wall_ms_median / fast->wall_ms_median;
        else os << "-";
        os << " | ";
        if (mha) os << std::fixed << std::setprecision(2) << mha->wall_ms_median / fast->wall_ms_median;
        else os << "-";
        os << " |\n";
    }

    os << "\n## Doubling ratios time(2N)/time(N)\n\n";
    os << "| engine | N -> 2N | ratio |\n|---|---|---:|\n";
    for (const std::string eng : {"mha", "symbolic_mka", "fastmka", "block_mka_local",
                                  "block_mka_global"}) {
        for (std::size_t i = 0; i + 1 < cfg.seq_lens.size(); ++i) {
            if (cfg.seq_lens[i + 1] != 2 * cfg.seq_lens[i]) continue;
            const auto* a = detail::find_record(records, eng, cfg.seq_lens[i]);
            const auto* b = detail::find_record(records, eng, cfg.seq_lens[i + 1]);
            if (!a || !b) continue;
            os << "| " << eng << " | " << cfg.seq_lens[i] << " -> " << cfg.seq_lens[i + 1]
               << " | " << std::fixed << std::setprecision(2)
               << b->wall_ms_median / a->wall_ms_median << " |\n";
        }
    }
    return os.str();
}

}  // namespace mka
