#include <gtest/gtest.h>

#include <sstream>

#include "mka/bench.hpp"
#include "mka/config.hpp"
#include "mka/workload.hpp"

using mka::RunConfig;
using mka::Tensor;

TEST(Workload, DeterministicAcrossCalls) {
    auto a = mka::synth_workload<double>(7, 2, 5, 3);
    auto b = mka::synth_workload<double>(7, 2, 5, 3);
    EXPECT_EQ(a.data, b.data);
    EXPECT_EQ(a.shape, (std::vector<std::size_t>{2, 5, 3}));
}

TEST(Workload, SeedChangesContent) {
    auto a = mka::synth_workload<double>(7, 1, 4, 4);
    auto b = mka::synth_workload<double>(8, 1, 4, 4);
    EXPECT_NE(a.data, b.data);
}

TEST(Workload, ValuesInRange) {
    auto x = mka::synth_workload<double>(42, 1, 64, 8);
    for (double v : x.data) {
        EXPECT_GE(v, -1.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(Workload, ZeroDimensionRejected) {
    EXPECT_THROW(mka::synth_workload<double>(1, 0, 4, 4), std::invalid_argument);
}

TEST(Config, DefaultsValidate) {
    RunConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    EXPECT_EQ(cfg.d_model, 32u);
    EXPECT_EQ(cfg.seed, 42u);
}

TEST(Config, ParseOverrides) {
    const std::string text =
        "# comment line\n"
        "dims.d_model = 16\n"
        "dims.n_heads = 4\n"
        "seq_lens = 64, 128\n"
        "engines = mha, fastmka\n"
        "summary.kind = ema\n"
        "summary.ema_decay = 0.25\n"
        "routing.kind = hard_topk\n"
        "routing.k = 1\n"
        "retrieval.enabled = true\n"
        "seed = 9\n";
    auto cfg = mka::parse_config_text(text);
    cfg.validate();
    EXPECT_EQ(cfg.d_model, 16u);
    EXPECT_EQ(cfg.n_heads, 4u);
    EXPECT_EQ(cfg.seq_lens, (std::vector<std::size_t>{64, 128}));
    ASSERT_EQ(cfg.engines.size(), 2u);
    EXPECT_EQ(cfg.engines[0], mka::EngineKind::mha);
    EXPECT_EQ(cfg.engines[1], mka::EngineKind::fastmka);
    EXPECT_EQ(cfg.summary_kind, "ema");
    EXPECT_DOUBLE_EQ(cfg.ema_decay, 0.25);
    EXPECT_EQ(cfg.routing_kind, "hard_topk");
    EXPECT_EQ(cfg.routing_k, 1u);
    EXPECT_TRUE(cfg.retrieval_enabled);
    EXPECT_EQ(cfg.seed, 9u);
}

TEST(Config, UnknownKeyRejected) {
    EXPECT_THROW(mka::parse_config_text("bogus.key = 1\n"), std::invalid_argument);
}

TEST(Config, MalformedLineRejected) {
    EXPECT_THROW(mka::parse_config_text("just words\n"), std::invalid_argument);
}

TEST(Config, ValidationErrors) {
    RunConfig cfg;
    cfg.n_heads = 3;  // does not divide 32
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = RunConfig{};
    cfg.precision = "half";
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = RunConfig{};
    cfg.seq_lens = {256, 128};
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
    cfg = RunConfig{};
    cfg.summary_kind = "ema";
    cfg.ema_decay = 1.5;
    EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Config, EngineNamesRoundTrip) {
    for (auto e : {mka::EngineKind::mha, mka::EngineKind::symbolic_mka, mka::EngineKind::fastmka,
                   mka::EngineKind::block_mka_local, mka::EngineKind::block_mka_global})
        EXPECT_EQ(mka::parse_engine(mka::engine_name(e)), e);
    EXPECT_THROW(mka::parse_engine("flash"), std::invalid_argument);
}

TEST(Csv, ExactHeaderSchema) {
    auto csv = mka::render_csv({});
    EXPECT_EQ(csv, "engine,seq_len,batch,wall_ms_median,tokens_per_s,peak_bytes,seed\n");
}

TEST(Csv, RowFormat) {
    mka::BenchRecord r;
    r.engine = "fastmka";
    r.seq_len = 512;
    r.batch = 1;
    r.wall_ms_median = 12.5;
    r.tokens_per_s = 40960.0;
    r.peak_bytes = 1024;
    r.seed = 42;
    auto csv = mka::render_csv({r});
    std::istringstream in(csv);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(row.substr(0, 14), "fastmka,512,1,");
    EXPECT_NE(row.find(",1024,42"), std::string::npos);
}

TEST(Csv, SkippedRowsOmitted) {
    mka::BenchRecord r;
    r.engine = "mha";
    r.skipped = true;
    auto csv = mka::render_csv({r});
    EXPECT_EQ(csv.find("mha"), std::string::npos);
}

TEST(Bench, TinyRunProducesRecords) {
    RunConfig cfg;
    cfg.engines = {mka::EngineKind::mha, mka::EngineKind::fastmka};
    cfg.seq_lens = {16, 32};
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.block_size = 8;
    cfg.repeats = 1;
    cfg.warmups = 0;
    auto records = mka::run_bench_dispatch(cfg);
    ASSERT_EQ(records.size(), 4u);
    for (const auto& r : records) {
        EXPECT_FALSE(r.skipped);
        EXPECT_GT(r.tokens_per_s, 0.0);
        EXPECT_EQ(r.seed, 42u);
    }
    auto md = mka::render_markdown(records, cfg);
    EXPECT_NE(md.find("Forward-only"), std::string::npos);
    EXPECT_NE(md.find("| mha | 16 |"), std::string::npos);
    EXPECT_NE(md.find("mha / fastmka"), std::string::npos);
    EXPECT_NE(md.find("16 -> 32"), std::string::npos);
}

TEST(Bench, SinglePrecisionDispatchRuns) {
    RunConfig cfg;
    cfg.engines = {mka::EngineKind::fastmka};
    cfg.seq_lens = {16};
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.precision = "single";
    cfg.repeats = 1;
    cfg.warmups = 0;
    auto records = mka::run_bench_dispatch(cfg);
    ASSERT_EQ(records.size(), 1u);
    EXPECT_FALSE(records[0].skipped);
}
