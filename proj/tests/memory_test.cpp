#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "mka/memory.hpp"
#include "mka/verify.hpp"

using mka::ChunkStore;
using mka::SummaryMode;
using mka::Tensor;

TEST(BuildLevels, PrefixMeanRunningMeans) {
    Tensor<double> x({1, 3, 1}, {1, 3, 5});
    auto lv = mka::build_levels(x, SummaryMode::prefix_mean());
    EXPECT_EQ(lv.m1.data, x.data);
    EXPECT_DOUBLE_EQ(lv.m2(0, 0, 0), 1.0);
    EXPECT_DOUBLE_EQ(lv.m2(0, 1, 0), 2.0);
    EXPECT_DOUBLE_EQ(lv.m2(0, 2, 0), 3.0);
}

TEST(BuildLevels, EmaRecurrence) {
    // m2[t] = 0.5*m2[t-1] + 0.5*x[t], m2[0] = x[0]
    Tensor<double> x({1, 2, 1}, {1, 3});
    auto lv = mka::build_levels(x, SummaryMode::ema(0.5));
    EXPECT_DOUBLE_EQ(lv.m2(0, 0, 0), 1.0);
    EXPECT_DOUBLE_EQ(lv.m2(0, 1, 0), 2.0);
}

TEST(BuildLevels, NoStoreGivesZeroM3) {
    mka::Rng rng(1);
    auto x = Tensor<double>::random({2, 4, 3}, rng);
    auto lv = mka::build_levels(x, SummaryMode::prefix_mean());
    for (double v : lv.m3.data) EXPECT_EQ(v, 0.0);
}

TEST(BuildLevels, StoreWidthMismatchRejected) {
    mka::Rng rng(2);
    auto x = Tensor<double>::random({1, 2, 3}, rng);
    ChunkStore<double> store(5, 16, 2, 9);
    store.insert_chunk(Tensor<double>::random({1, 5}, rng), Tensor<double>::random({1, 5}, rng), 0,
                       1);
    EXPECT_THROW(mka::build_levels(x, SummaryMode::prefix_mean(), &store), std::invalid_argument);
}

TEST(BuildLevels, EmaDecayRangeEnforced) {
    EXPECT_THROW(SummaryMode::ema(0.0), std::invalid_argument);
    EXPECT_THROW(SummaryMode::ema(1.0), std::invalid_argument);
}

TEST(BuildLevels, CausalityProperty) {
    auto r = mka::check_summary_causality(21);
    EXPECT_TRUE(r.passed);
}

TEST(BuildLevels, PrefixMeanOracleProperty) {
    auto r = mka::check_prefix_mean_oracle(22);
    EXPECT_TRUE(r.passed) << r.worst_err;
}

TEST(Signature, SelfAlignedHyperplaneBitSet) {
    ChunkStore<double> store(8, 16, 2, 77);
    Tensor<double> v({8});
    for (std::size_t j = 0; j < 8; ++j) v(j) = store.hyperplanes()(3, j);
    auto sig = store.signature(v);
    EXPECT_TRUE((sig[0] >> 3) & 1);
}

TEST(Signature, SignAntisymmetryAndDeterminism) {
    auto r = mka::check_signature_determinism(23);
    EXPECT_TRUE(r.passed);
}

TEST(Signature, CollisionRateMatchesTheory) {
    auto r = mka::check_signature_collision_rate(24);
    EXPECT_TRUE(r.passed) << r.note;
}

TEST(ChunkInsert, IdsAndCentroid) {
    ChunkStore<double> store(2, 16, 2, 5);
    Tensor<double> keys({2, 2}, {1, 1, 3, 3});
    Tensor<double> vals({2, 2}, {0, 0, 0, 0});
    const auto id0 = store.insert_chunk(keys, vals, 0, 2);
    EXPECT_EQ(id0, 0u);
    EXPECT_EQ(store.chunks().size(), 1u);
    EXPECT_DOUBLE_EQ(store.chunks()[0].centroid(0), 2.0);
    EXPECT_DOUBLE_EQ(store.chunks()[0].centroid(1), 2.0);
    const auto id1 = store.insert_chunk(keys, vals, 2, 4);
    EXPECT_EQ(id1, 1u);
    auto hits = store.retrieve(Tensor<double>({2}, {1, 1}));
    EXPECT_EQ(hits.size(), 2u);
}

TEST(ChunkInsert, WidthMismatchRejected) {
    ChunkStore<double> store(4, 16, 2, 5);
    mka::Rng rng(1);
    EXPECT_THROW(store.insert_chunk(Tensor<double>::random({1, 3}, rng),
                                    Tensor<double>::random({1, 3}, rng), 0, 1),
                 std::invalid_argument);
}

TEST(Retrieve, EmptyStoreGivesEmptyList) {
    ChunkStore<double> store(4, 16, 3, 5);
    EXPECT_TRUE(store.retrieve(Tensor<double>({4})).empty());
}

TEST(Retrieve, ExactCentroidRankedFirst) {
    mka::Rng rng(9);
    ChunkStore<double> store(6, 64, 3, 41);
    for (std::size_t c = 0; c < 5; ++c)
        store.insert_chunk(Tensor<double>::random({2, 6}, rng), Tensor<double>::random({2, 6}, rng),
                           2 * c, 2 * c + 2);
    const auto& target = store.chunks()[3];
    auto hits = store.retrieve(target.centroid);
    ASSERT_FALSE(hits.empty());
    EXPECT_EQ(hits[0].chunk->id, target.id);
    EXPECT_EQ(hits[0].hamming, 0u);
}

TEST(Retrieve, TopRAndUniquenessProperty) {
    auto r = mka::check_retrieve_contract(25);
    EXPECT_TRUE(r.passed);
}

TEST(Retrieve, PlantedNeedleRecall) {
    auto r = mka::check_lsh_recall(26, 100);
    EXPECT_TRUE(r.passed) << r.note;
}

TEST(Snapshot, RoundTripBitExact) {
    auto r = mka::check_snapshot_roundtrip(27);
    EXPECT_TRUE(r.passed);
}

TEST(Snapshot, FileRoundTrip) {
    mka::Rng rng(31);
    ChunkStore<double> store(4, 32, 2, 17);
    store.insert_chunk(Tensor<double>::random({3, 4}, rng), Tensor<double>::random({3, 4}, rng), 0,
                       3);
    const auto path = std::filesystem::temp_directory_path() / "mka_store_test.bin";
    mka::save_store(store, path.string());
    auto loaded = mka::load_store<double>(path.string(), store.top_r());
    EXPECT_EQ(mka::serialize_store(loaded), mka::serialize_store(store));
    std::filesystem::remove(path);
}

TEST(Snapshot, BadMagicRejected) {
    EXPECT_THROW(mka::deserialize_store<double>("BOGUS data"), std::runtime_error);
}

TEST(Snapshot, TruncatedRejected) {
    ChunkStore<double> store(4, 32, 2, 17);
    mka::Rng rng(1);
    store.insert_chunk(Tensor<double>::random({1, 4}, rng), Tensor<double>::random({1, 4}, rng), 0,
                       1);
    auto buf = mka::serialize_store(store);
    buf.resize(buf.size() - 5);
    EXPECT_THROW(mka::deserialize_store<double>(buf), std::runtime_error);
}
