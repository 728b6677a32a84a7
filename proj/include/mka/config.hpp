#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mka/engines.hpp"

namespace mka {

enum class EngineKind { mha, symbolic_mka, fastmka, block_mka_local, block_mka_global };

inline std::string engine_name(EngineKind e) {
    switch (e) {
        case EngineKind::mha: return "mha";
        case EngineKind::symbolic_mka: return "symbolic_mka";
        case EngineKind::fastmka: return "fastmka";
        case EngineKind::block_mka_local: return "block_mka_local";
        case EngineKind::block_mka_global: return "block_mka_global";
    }
    return "?";
}

inline EngineKind parse_engine(const std::string& s) {
    if (s == "mha") return EngineKind::mha;
    if (s == "symbolic_mka") return EngineKind::symbolic_mka;
    if (s == "fastmka") return EngineKind::fastmka;
    if (s == "block_mka_local") return EngineKind::block_mka_local;
    if (s == "block_mka_global") return EngineKind::block_mka_global;
    throw std::invalid_argument("unknown engine: " + s);
}

struct RunConfig {
    std::vector<EngineKind> engines{EngineKind::mha, EngineKind::symbolic_mka,
                                    EngineKind::fastmka, EngineKind::block_mka_local};
    std::size_t d_model = 32;
    std::size_t n_heads = 2;
    std::vector<std::size_t> seq_lens{512, 1024, 2048, 4096, 8192};
    std::size_t batch = 1;
    std::string summary_kind = "prefix_mean";
    double ema_decay = 0.5;
    std::string routing_kind = "learned_soft";
    std::size_t routing_k = 2;
    std::size_t block_size = 128;
    std::size_t block_window = 4;
    double tau = 0.0;
    bool retrieval_enabled = false;
    std::size_t retrieval_r = 8;
    std::size_t retrieval_h_bits = 64;
    std::uint64_t seed = 42;
    std::string precision = "double";
    std::size_t repeats = 5;
    std::size_t warmups = 2;

    ModelDims dims() const { return ModelDims(d_model, n_heads, d_model / n_heads); }

    SummaryMode summary() const {
        return summary_kind == "ema" ? SummaryMode::ema(ema_decay) : SummaryMode::prefix_mean();
    }

    RoutingPolicy routing() const {
        if (routing_kind == "learned_soft") return RoutingPolicy::learned_soft();
        if (routing_kind == "fixed_uniform") return RoutingPolicy::fixed_uniform();
        if (routing_kind == "hard_topk") return RoutingPolicy::hard_topk(routing_k);
        throw std::invalid_argument("unknown routing kind: " + routing_kind);
    }

    void validate() const {
        if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
            throw std::invalid_argument("config: n_heads must divide d_model");
        if (batch == 0 || repeats == 0) throw std::invalid_argument("config: batch and repeats must be positive");
        if (precision != "single" && precision != "double")
            throw std::invalid_argument("config: precision must be single or double");
        if (!std::is_sorted(seq_lens.begin(), seq_lens.end()))
            throw std::invalid_argument("config: seq_lens must be sorted ascending");
        (void)dims();
        (void)summary();
        (void)routing();
    }

    // Echoed into report headers for provenance.
    std::string echo() const {
        std::ostringstream os;
        os << "engines = ";
        for (std::size_t i = 0; i < engines.size(); ++i)
            os << (i ? "," : "") << engine_name(engines[i]);
        os << "\ndims.d_model = " << d_model << "\ndims.n_heads = " << n_heads;
        os << "\nseq_lens = ";
        for (std::size_t i = 0; i < seq_lens.size(); ++i) os << (i ? "," : "") << seq_lens[i];
        os << "\nbatch = " << batch;
        os << "\nsummary.kind = " << summary_kind;
        if (summary_kind == "ema") os << "\nsummary.ema_decay = " << ema_decay;
        os << "\nrouting.kind = " << routing_kind;
        if (routing_kind == "hard_topk") os << "\nrouting.k = " << routing_k;
        os << "\nblock.size = " << block_size << "\nblock.window = " << block_window;
        os << "\ntau = " << (tau > 0 ? std::to_string(tau) : std::string("auto"));
        os << "\nretrieval.enabled = " << (retrieval_enabled ? "true" : "false");
        os << "\nretrieval.r = " << retrieval_r << "\nretrieval.h_bits = " << retrieval_h_bits;
        os << "\nseed = " << seed << "\nprecision = " << precision;
        os << "\nrepeats = " << repeats << "\nwarmups = " << warmups << "\n";
        return os.str();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: bad boolean value '" + v + "'");
}

}  // namespace detail

// Plain-text config: one `key = value` per line, '#' comments, nesting via
// dotted keys. Unknown keys are rejected.
inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    using detail::split_list;
    if (key == "engines") {
        cfg.engines.clear();
        for (const auto& e : split_list(value)) cfg.engines.push_back(parse_engine(e));
    } else if (key == "dims.d_model") cfg.d_model = std::stoul(value);
    else if (key == "dims.n_heads") cfg.n_heads = std::stoul(value);
    else if (key == "seq_lens") {
        cfg.seq_lens.clear();
        for (const auto& e : split_list(value)) cfg.seq_lens.push_back(std::stoul(e));
    } else if (key == "batch") cfg.batch = std::stoul(value);
    else if (key == "summary.kind") cfg.summary_kind = value;
    else if (key == "summary.ema_decay") cfg.ema_decay = std::stod(value);
    else if (key == "routing.kind") cfg.routing_kind = value;
    else if (key == "routing.k") cfg.routing_k = std::stoul(value);
    else if (key == "block.size") cfg.block_size = std::stoul(value);
    else if (key == "block.window") cfg.block_window = std::stoul(value);
    else if (key == "tau") cfg.tau = std::stod(value);
    else if (key == "retrieval.enabled") cfg.retrieval_enabled = parse_bool(value);
    else if (key == "retrieval.r") cfg.retrieval_r = std::stoul(value);
    else if (key == "retrieval.h_bits") cfg.retrieval_h_bits = std::stoul(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "precision") cfg.precision = value;
    else if (key == "repeats") cfg.repeats = std::stoul(value);
    else if (key == "warmups") cfg.warmups = std::stoul(value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected 'key = value'");
        apply_config_entry(base, detail::trim(line.substr(0, eq)),
                           detail::trim(line.substr(eq + 1)));
    }
    return base;
}

inline RunConfig load_config(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, std::move(base));
}

}  // namespace mka
