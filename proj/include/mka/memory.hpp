#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mka/rng.hpp"
#include "mka/tensor.hpp"

namespace mka {

// L2 session-summary flavor.
struct SummaryMode {
    enum class Kind { prefix_mean, ema };
    Kind kind = Kind::prefix_mean;
    double ema_decay = 0.5;  // only meaningful for ema

    static SummaryMode prefix_mean() { return {Kind::prefix_mean, 0.0}; }
    static SummaryMode ema(double decay) {
        if (!(decay > 0.0 && decay < 1.0))
            throw std::invalid_argument("summary: ema decay must lie in (0,1)");
        return {Kind::ema, decay};
    }
};

template <typename T>
struct MemoryLevels {
    Tensor<T> m1;  // local tokens, == x
    Tensor<T> m2;  // causal summary, m2[t] depends on x[1..t] only
    Tensor<T> m3;  // retrieved long-term representation, zeros without a store
};

// One stored block of historical keys/values plus its hash signature.
template <typename T>
struct Chunk {
    std::uint64_t id = 0;
    std::uint64_t start = 0;
    std::uint64_t end = 0;               // token range [start, end)
    std::vector<std::uint8_t> signature;  // ceil(h_bits/8) bytes, LSB-first within a byte
    Tensor<T> centroid;                   // [d], mean of key rows
    Tensor<T> keys;                       // [(end-start), d]
    Tensor<T> values;                     // [(end-start), d]
};

template <typename T>
struct RetrievalHit {
    const Chunk<T>* chunk;
    std::size_t hamming;
};

// Long-term memory bank with random-hyperplane signatures and top-R recall
// by Hamming distance. Hyperplanes are fixed at construction from the seed.
template <typename T>
class ChunkStore {
public:
    ChunkStore(std::size_t d, std::size_t h_bits, std::size_t top_r, std::uint64_t seed)
        : d_(d), h_bits_(h_bits), top_r_(top_r), seed_(seed), hyperplanes_({h_bits, d}) {
        if (d == 0 || h_bits == 0) throw std::invalid_argument("chunk store: d and h_bits must be positive");
        Rng rng(seed);
        for (auto& v : hyperplanes_.data) v = static_cast<T>(rng.gaussian());
    }

    std::size_t dim() const { return d_; }
    std::size_t h_bits() const { return h_bits_; }
    std::size_t top_r() const { return top_r_; }
    void set_top_r(std::size_t r) { top_r_ = r; }
    std::uint64_t seed() const { return seed_; }
    const std::vector<Chunk<T>>& chunks() const { return chunks_; }
    const Tensor<T>& hyperplanes() const { return hyperplanes_; }
    std::size_t signature_bytes() const { return (h_bits_ + 7) / 8; }

    std::vector<std::uint8_t> signature(const T* v, std::size_t n) const {
        if (n != d_)
            throw std::invalid_argument("signature: vector width " + std::to_string(n) +
                                        " != store width " + std::to_string(d_));
        std::vector<std::uint8_t> bits(signature_bytes(), 0);
        for (std::size_t i = 0; i < h_bits_; ++i) {
            T dot = T(0);
            const T* row = &hyperplanes_.data[i * d_];
            for (std::size_t j = 0; j < d_; ++j) dot += row[j] * v[j];
            if (dot >= T(0)) bits[i / 8] |= std::uint8_t(1u << (i % 8));
        }
        return bits;
    }

    std::vector<std::uint8_t> signature(const Tensor<T>& v) const {
        return signature(v.data.data(), v.size());
    }

    std::uint64_t insert_chunk(Tensor<T> keys, Tensor<T> values,
                               std::uint64_t start, std::uint64_t end) {
        if (keys.rank() != 2 || values.rank() != 2 || !keys.same_shape(values))
            throw std::invalid_argument("insert_chunk: keys/values must be matching rank-2 tensors");
        if (keys.shape[1] != d_)
            throw std::invalid_argument("insert_chunk: width " + std::to_string(keys.shape[1]) +
                                        " != store width " + std::to_string(d_));
        if (end - start != keys.shape[0])
            throw std::invalid_argument("insert_chunk: token range size != key row count");
        Chunk<T> c;
        c.id = next_id_++;
        c.start = start;
        c.end = end;
        c.centroid = Tensor<T>({d_});
        const std::size_t rows = keys.shape[0];
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < d_; ++j) c.centroid(j) += keys(i, j);
        for (std::size_t j = 0; j < d_; ++j) c.centroid(j) /= static_cast<T>(rows);
        c.signature = signature(c.centroid);
        c.keys = std::move(keys);
        c.values = std::move(values);
        chunks_.push_back(std::move(c));
        return chunks_.back().id;
    }

    // Top-R chunks by ascending Hamming distance, ties by ascending id.
    std::vector<RetrievalHit<T>> retrieve(const T* q, std::size_t n) const {
        std::vector<std::uint8_t> qs = signature(q, n);
        std::vector<RetrievalHit<T>> hits;
        hits.reserve(chunks_.size());
        for (const auto& c : chunks_) hits.push_back({&c, hamming(qs, c.signature)});
        std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
            if (a.hamming != b.hamming) return a.hamming < b.hamming;
            return a.chunk->id < b.chunk->id;
        });
        if (hits.size() > top_r_) hits.resize(top_r_);
        return hits;
    }

    std::vector<RetrievalHit<T>> retrieve(const Tensor<T>& q) const {
        return retrieve(q.data.data(), q.size());
    }

    static std::size_t hamming(const std::vector<std::uint8_t>& a,
                               const std::vector<std::uint8_t>& b) {
        std::size_t dist = 0;
        for (std::size_t i = 0; i < a.size(); ++i)
            dist += std::popcount(static_cast<unsigned>(a[i] ^ b[i]));
        return dist;
    }

    // Internal hook for snapshot loading.
    void restore_chunk(Chunk<T> c) {
        next_id_ = std::max(next_id_, c.id + 1);
        chunks_.push_back(std::move(c));
    }

private:
    std::size_t d_;
    std::size_t h_bits_;
    std::size_t top_r_;
    std::uint64_t seed_;
    Tensor<T> hyperplanes_;
    std::vector<Chunk<T>> chunks_;
    std::uint64_t next_id_ = 0;
};

// Retrieval representation for one query vector: mean of the top-R retrieved
// chunk centroids, zero when nothing is stored.
template <typename T>
void retrieval_row(const ChunkStore<T>& store, const T* q, std::size_t n, T* out) {
    auto hits = store.retrieve(q, n);
    std::fill(out, out + store.dim(), T(0));
    if (hits.empty()) return;
    for (const auto& h : hits)
        for (std::size_t j = 0; j < store.dim(); ++j) out[j] += h.chunk->centroid(j);
    for (std::size_t j = 0; j < store.dim(); ++j) out[j] /= static_cast<T>(hits.size());
}

// Causal L2 summary of x[:, 0..t] for every t. prefix_mean keeps a running
// sum; ema starts at x[0].
template <typename T>
Tensor<T> causal_summary(const Tensor<T>& x, const SummaryMode& mode) {
    const std::size_t b = x.shape[0], s = x.shape[1], d = x.shape[2];
    Tensor<T> m2({b, s, d});
    for (std::size_t bi = 0; bi < b; ++bi) {
        std::vector<T> acc(d, T(0));
        for (std::size_t t = 0; t < s; ++t) {
            if (mode.kind == SummaryMode::Kind::prefix_mean) {
                for (std::size_t j = 0; j < d; ++j) {
                    acc[j] += x(bi, t, j);
                    m2(bi, t, j) = acc[j] / static_cast<T>(t + 1);
                }
            } else {
                const T a = static_cast<T>(mode.ema_decay);
                for (std::size_t j = 0; j < d; ++j) {
                    acc[j] = (t == 0) ? x(bi, t, j) : a * acc[j] + (T(1) - a) * x(bi, t, j);
                    m2(bi, t, j) = acc[j];
                }
            }
        }
    }
    return m2;
}

// Build the three memory levels for a sequence. Retrieval is keyed on the
// per-token full-width query rows when a store is given.
template <typename T>
MemoryLevels<T> build_levels(const Tensor<T>& x, const SummaryMode& mode,
                             const ChunkStore<T>* store = nullptr,
                             const Tensor<T>* queries = nullptr) {
    if (x.rank() != 3) throw std::invalid_argument("build_levels: expected [B,S,D] input");
    const std::size_t b = x.shape[0], s = x.shape[1], d = x.shape[2];
    MemoryLevels<T> lv;
    lv.m1 = x;
    lv.m2 = causal_summary(x, mode);
    lv.m3 = Tensor<T>({b, s, d});
    if (store && !store->chunks().empty()) {
        if (store->dim() != d)
            throw std::invalid_argument("build_levels: store width " + std::to_string(store->dim()) +
                                        " != model width " + std::to_string(d));
        const Tensor<T>& q = queries ? *queries : x;
        if (!q.same_shape(x))
            throw std::invalid_argument("build_levels: query shape must match input shape");
        for (std::size_t bi = 0; bi < b; ++bi)
            for (std::size_t t = 0; t < s; ++t)
                retrieval_row(*store, &q.data[(bi * s + t) * d], d, &lv.m3.data[(bi * s + t) * d]);
    }
    return lv;
}

// ---- Chunk-store snapshot (little-endian binary) ------------------------
//
// header:  magic "MKA3", version u32, d u32, h_bits u32, seed u64, chunk_count u64
// chunk:   id u64, start u64, end u64, signature bytes, centroid d*f64,
//          keys then values row-major f64

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

class Reader {
public:
    Reader(const std::string& buf) : buf_(buf) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    void bytes(std::uint8_t* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, buf_.data() + pos_, n);
        pos_ += n;
    }
    void raw(char* dst, std::size_t n) {
        need(n);
        std::memcpy(dst, buf_.data() + pos_, n);
        pos_ += n;
    }
    bool at_end() const { return pos_ == buf_.size(); }

private:
    void need(std::size_t n) {
        if (pos_ + n > buf_.size()) throw std::runtime_error("chunk-store snapshot: truncated file");
    }
    const std::string& buf_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::uint32_t kSnapshotVersion = 1;

template <typename T>
std::string serialize_store(const ChunkStore<T>& store) {
    std::string out;
    out += "MKA3";
    detail::put_u32(out, kSnapshotVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(store.dim()));
    detail::put_u32(out, static_cast<std::uint32_t>(store.h_bits()));
    detail::put_u64(out, store.seed());
    detail::put_u64(out, store.chunks().size());
    for (const auto& c : store.chunks()) {
        detail::put_u64(out, c.id);
        detail::put_u64(out, c.start);
        detail::put_u64(out, c.end);
        out.append(reinterpret_cast<const char*>(c.signature.data()), c.signature.size());
        for (std::size_t j = 0; j < store.dim(); ++j)
            detail::put_f64(out, static_cast<double>(c.centroid(j)));
        for (T v : c.keys.data) detail::put_f64(out, static_cast<double>(v));
        for (T v : c.values.data) detail::put_f64(out, static_cast<double>(v));
    }
    return out;
}

template <typename T>
ChunkStore<T> deserialize_store(const std::string& buf, std::size_t top_r = 8) {
    if (buf.size() < 4 || buf.compare(0, 4, "MKA3") != 0)
        throw std::runtime_error("chunk-store snapshot: bad magic");
    detail::Reader r(buf);
    char magic[4];
    r.raw(magic, 4);
    const std::uint32_t version = r.u32();
    if (version != kSnapshotVersion)
        throw std::runtime_error("chunk-store snapshot: unsupported version " + std::to_string(version));
    const std::size_t d = r.u32();
    const std::size_t h_bits = r.u32();
    const std::uint64_t seed = r.u64();
    const std::uint64_t count = r.u64();
    ChunkStore<T> store(d, h_bits, top_r, seed);
    const std::size_t sig_bytes = store.signature_bytes();
    for (std::uint64_t i = 0; i < count; ++i) {
        Chunk<T> c;
        c.id = r.u64();
        c.start = r.u64();
        c.end = r.u64();
        c.signature.resize(sig_bytes);
        r.bytes(c.signature.data(), sig_bytes);
        c.centroid = Tensor<T>({d});
        for (std::size_t j = 0; j < d; ++j) c.centroid(j) = static_cast<T>(r.f64());
        const std::size_t rows = c.end - c.start;
        c.keys = Tensor<T>({rows, d});
        for (auto& v : c.keys.data) v = static_cast<T>(r.f64());
        c.values = Tensor<T>({rows, d});
        for (auto& v : c.values.data) v = static_cast<T>(r.f64());
        store.restore_chunk(std::move(c));
    }
    if (!r.at_end()) throw std::runtime_error("chunk-store snapshot: trailing bytes");
    return store;
}

template <typename T>
void save_store(const ChunkStore<T>& store, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    std::string buf = serialize_store(store);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

template <typename T>
ChunkStore<T> load_store(const std::string& path, std::size_t top_r = 8) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_store<T>(buf, top_r);
}

}  // namespace mka
