// mka: verification and benchmarking harness for the memory-keyed
// attention engines.
//
//   mka verify [--config PATH] [--seed N] [--precision single|double] [--out DIR]
//   mka bench  [--config PATH] [--engines LIST] [--seq-lens LIST] [--out DIR]
//   mka snapshot-store --in PATH --out PATH
//
// Exit codes: 0 success, 1 property failure, 2 usage/config error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <malloc.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "mka/bench.hpp"
#include "mka/config.hpp"
#include "mka/verify.hpp"

// Allocation tracking for peak_bytes reporting.
void* operator new(std::size_t n) {
    void* p = std::malloc(n ? n : 1);
    if (!p) throw std::bad_alloc();
    mka::allocstats::note_alloc(malloc_usable_size(p));
    return p;
}

void operator delete(void* p) noexcept {
    if (!p) return;
    mka::allocstats::note_free(malloc_usable_size(p));
    std::free(p);
}

void operator delete(void* p, std::size_t) noexcept { ::operator delete(p); }

namespace {

int run_verify(const mka::RunConfig& cfg, const std::string& out_dir) {
    std::vector<mka::PropertyResult> results = mka::verify_all(cfg.seed);
    if (cfg.precision == "single") {
        // float sanity pass on the row-normalization contract
        mka::PropertyResult r{"tensor.softmax_row_sums_single", 50};
        mka::Rng rng(cfg.seed + 100);
        for (std::size_t i = 0; i < 50; ++i) {
            auto s = mka::Tensor<float>::random({1 + rng.below(8), 1 + rng.below(8)}, rng, -20.0,
                                                20.0);
            auto p = mka::softmax_rows(s);
            for (std::size_t row = 0; row < p.shape[0]; ++row) {
                double sum = 0.0;
                for (std::size_t j = 0; j < p.shape[1]; ++j) sum += p(row, j);
                r.worst_err = std::max(r.worst_err, std::abs(sum - 1.0));
            }
        }
        r.passed = r.worst_err < 1e-6;
        results.push_back(r);
    }

    bool all_passed = true;
    nlohmann::json j;
    j["seed"] = cfg.seed;
    j["precision"] = cfg.precision;
    j["properties"] = nlohmann::json::array();
    for (const auto& r : results) {
        all_passed = all_passed && r.passed;
        std::printf("[%s] %-50s instances=%-5zu worst_err=%.3e%s%s\n",
                    r.passed ? "PASS" : "FAIL", r.name.c_str(), r.instances, r.worst_err,
                    r.note.empty() ? "" : "  ", r.note.c_str());
        j["properties"].push_back({{"name", r.name},
                                   {"instances", r.instances},
                                   {"worst_err", r.worst_err},
                                   {"passed", r.passed},
                                   {"note", r.note}});
    }
    j["all_passed"] = all_passed;

    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / "verify.json");
    out << j.dump(2) << "\n";
    std::printf("%zu properties, %s\n", results.size(), all_passed ? "all passed" : "FAILURES");
    return all_passed ? 0 : 1;
}

int run_bench_cmd(const mka::RunConfig& cfg, const std::string& out_dir) {
    auto records = mka::run_bench_dispatch(cfg);
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream csv(std::filesystem::path(out_dir) / "results.csv");
        csv << mka::render_csv(records);
    }
    std::string md = mka::render_markdown(records, cfg);
    {
        std::ofstream report(std::filesystem::path(out_dir) / "report.md");
        report << md;
    }
    std::cout << md;
    return 0;
}

int run_snapshot(const std::string& in_path, const std::string& out_path) {
    auto store = mka::load_store<double>(in_path);
    mka::save_store(store, out_path);
    // verify the round trip byte for byte
    std::ifstream a(in_path, std::ios::binary), b(out_path, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    if (sa != sb) {
        std::fprintf(stderr, "snapshot-store: round trip NOT bit-exact\n");
        return 1;
    }
    std::printf("snapshot-store: %zu chunks, round trip bit-exact (%zu bytes)\n",
                store.chunks().size(), sa.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memory-keyed attention verification and benchmark harness"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", precision, engines_csv, seq_lens_csv;
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto* verify = app.add_subcommand("verify", "run the property suites");
    verify->add_option("--config", config_path, "config file");
    verify->add_option("--seed", seed, "rng seed")->each([&](const std::string&) { seed_set = true; });
    verify->add_option("--precision", precision, "single|double");
    verify->add_option("--out", out_dir, "output directory for verify.json");

    auto* bench = app.add_subcommand("bench", "run the scaling benchmarks");
    bench->add_option("--config", config_path, "config file");
    bench->add_option("--engines", engines_csv, "comma-separated engine list");
    bench->add_option("--seq-lens", seq_lens_csv, "comma-separated sequence lengths");
    bench->add_option("--seed", seed, "rng seed")->each([&](const std::string&) { seed_set = true; });
    bench->add_option("--out", out_dir, "output directory for results.csv and report.md");

    std::string snap_in, snap_out;
    auto* snap = app.add_subcommand("snapshot-store", "round-trip a chunk-store snapshot");
    snap->add_option("--in", snap_in, "input snapshot")->required();
    snap->add_option("--out", snap_out, "output snapshot")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (snap->parsed()) return run_snapshot(snap_in, snap_out);

        mka::RunConfig cfg;
        if (!config_path.empty()) cfg = mka::load_config(config_path);
        if (seed_set) cfg.seed = seed;
        if (!precision.empty()) mka::apply_config_entry(cfg, "precision", precision);
        if (!engines_csv.empty()) mka::apply_config_entry(cfg, "engines", engines_csv);
        if (!seq_lens_csv.empty()) mka::apply_config_entry(cfg, "seq_lens", seq_lens_csv);
        cfg.validate();

        if (verify->parsed()) return run_verify(cfg, out_dir);
        return run_bench_cmd(cfg, out_dir);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
