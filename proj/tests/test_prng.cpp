#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <set>
#include <vector>

#include "epiwarn/prng.hpp"

using namespace epiwarn;

TEST(Pcg32, SameSeedSameSequence) {
    Pcg32 a(42), b(42);
    for (int i = 0; i < 1000; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Pcg32, DifferentSeedsDiverge) {
    Pcg32 a(1), b(2);
    int diff = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next() != b.next()) ++diff;
    EXPECT_GT(diff, 32);
}

TEST(Pcg32, BoundedStaysInRange) {
    Pcg32 rng(7);
    std::array<int, 13> hits{};
    for (int i = 0; i < 20000; ++i) {
        const auto v = rng.bounded(13);
        ASSERT_LT(v, 13u);
        ++hits[v];
    }
    for (int h : hits) EXPECT_GT(h, 0);
}

TEST(Pcg32, BoundedOneIsAlwaysZero) {
    Pcg32 rng(9);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(rng.bounded(1), 0u);
}

TEST(Pcg32, UniformHalfOpenUnit) {
    Pcg32 rng(3);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    EXPECT_LT(lo, 0.01);
    EXPECT_GT(hi, 0.99);
}

TEST(Pcg32, UniformRangeDegenerate) {
    Pcg32 rng(5);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(rng.uniform(1.3, 1.3), 1.3);
}

TEST(Pcg32, CategoricalDegenerate) {
    Pcg32 rng(11);
    const std::array<double, 4> probs = {0.0, 0.0, 1.0, 0.0};
    for (int i = 0; i < 200; ++i) EXPECT_EQ(rng.categorical(probs), 2);
}

TEST(Pcg32, CategoricalFrequencies) {
    Pcg32 rng(13);
    const std::array<double, 4> probs = {0.35, 0.45, 0.15, 0.05};
    std::array<int, 4> hits{};
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++hits[static_cast<std::size_t>(rng.categorical(probs))];
    for (int c = 0; c < 4; ++c)
        EXPECT_NEAR(static_cast<double>(hits[static_cast<std::size_t>(c)]) / n,
                    probs[static_cast<std::size_t>(c)], 0.01);
}

TEST(Pcg32, ShuffleIsPermutationAndDeterministic) {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
    auto w = v;
    Pcg32 a(99), b(99);
    a.shuffle(v);
    b.shuffle(w);
    EXPECT_EQ(v, w);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(DeriveSeed, DistinctAcrossIndices) {
    std::set<std::uint64_t> seen;
    for (std::uint64_t a = 0; a < 60; ++a)
        for (std::uint64_t b = 0; b < 60; ++b) seen.insert(derive_seed(123, a, b));
    EXPECT_EQ(seen.size(), 3600u);
}

TEST(DeriveSeed, Deterministic) {
    EXPECT_EQ(derive_seed(5, 1, 2), derive_seed(5, 1, 2));
    EXPECT_NE(derive_seed(5, 1, 2), derive_seed(6, 1, 2));
}
