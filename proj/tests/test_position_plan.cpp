#include "poselab/position_plan.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>

#include "chi_square.hpp"

using namespace poselab;

namespace {

ExtensionConfig make_config(std::int64_t lc, std::int64_t lt, std::int64_t n,
                            ContentStrategy cs = ContentStrategy::uniform_bias) {
    ExtensionConfig cfg;
    cfg.original_len = lc;
    cfg.target_len = lt;
    cfg.chunk_count = n;
    cfg.content_strategy = cs;
    return cfg;
}

void expect_strictly_increasing(const std::vector<std::int64_t>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        ASSERT_LT(v[i - 1], v[i]);
    }
}

}  // namespace

TEST(ExtensionConfig, ValidationAndScalingFactor) {
    EXPECT_NO_THROW(make_config(2048, 16384, 2).validate());
    EXPECT_THROW(make_config(0, 16, 1).validate(), ConfigError);
    EXPECT_THROW(make_config(32, 16, 1).validate(), ConfigError);   // L_t < L_c
    EXPECT_THROW(make_config(16, 32, 0).validate(), ConfigError);   // N < 1
    EXPECT_THROW(make_config(16, 32, 17).validate(), ConfigError);  // N > L_c
    EXPECT_DOUBLE_EQ(make_config(2048, 16384, 2).scaling_factor(), 8.0);
    // fractional alpha is allowed
    EXPECT_DOUBLE_EQ(make_config(4, 6, 2).scaling_factor(), 1.5);
}

TEST(SampleChunkLengths, DegenerateCases) {
    SeededRng rng(1);
    EXPECT_EQ(sample_chunk_lengths(2048, 1, rng), (std::vector<std::int64_t>{2048}));
    EXPECT_EQ(sample_chunk_lengths(4, 4, rng),
              (std::vector<std::int64_t>{1, 1, 1, 1}));
}

TEST(SampleChunkLengths, InvalidChunkCount) {
    SeededRng rng(1);
    EXPECT_THROW(sample_chunk_lengths(8, 0, rng), ConfigError);
    EXPECT_THROW(sample_chunk_lengths(8, 9, rng), ConfigError);
}

TEST(SampleChunkLengths, PositivePartsSummingToTotal) {
    SeededRng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const std::int64_t lc = rng.uniform_int(1, 64);
        const std::int64_t n = rng.uniform_int(1, lc);
        const auto lengths = sample_chunk_lengths(lc, n, rng);
        ASSERT_EQ(static_cast<std::int64_t>(lengths.size()), n);
        for (std::int64_t l : lengths) ASSERT_GE(l, 1);
        EXPECT_EQ(std::accumulate(lengths.begin(), lengths.end(), std::int64_t{0}), lc);
    }
}

// N=2: l0 is the single cut point, uniform on {1..L_c-1}.
TEST(SampleChunkLengths, FirstLengthUniformChiSquare) {
    SeededRng rng(42);
    const std::int64_t lc = 2048;
    const std::int64_t draws = 100000;
    std::vector<std::int64_t> counts(static_cast<std::size_t>(lc - 1), 0);
    for (std::int64_t i = 0; i < draws; ++i) {
        const auto lengths = sample_chunk_lengths(lc, 2, rng);
        ASSERT_GE(lengths[0], 1);
        ASSERT_LE(lengths[0], lc - 1);
        counts[static_cast<std::size_t>(lengths[0] - 1)] += 1;
        ASSERT_EQ(lengths[0] + lengths[1], lc);
    }
    const double stat =
        testutil::chi2_uniform_stat(counts, static_cast<double>(draws));
    EXPECT_LT(stat, testutil::chi2_crit_p99(static_cast<double>(lc - 2)));
}

TEST(SampleSkipBiases, DegenerateCases) {
    SeededRng rng(1);
    EXPECT_EQ(sample_skip_biases(1, 128, 4096, rng), (std::vector<std::int64_t>{0}));
    EXPECT_EQ(sample_skip_biases(2, 2048, 2048, rng),
              (std::vector<std::int64_t>{0, 0}));
    EXPECT_THROW(sample_skip_biases(2, 2048, 2047, rng), ConfigError);
}

TEST(SampleSkipBiases, MonotoneWithinRange) {
    SeededRng rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        const auto u = sample_skip_biases(5, 64, 256, rng);
        ASSERT_EQ(u[0], 0);
        for (std::size_t i = 1; i < u.size(); ++i) {
            ASSERT_GE(u[i], u[i - 1]);
            ASSERT_LE(u[i], 256 - 64);
        }
    }
}

// N=2, L_c=2048, L_t=8192: u1 ~ U{0..6144}, so the sample mean over 1e5
// draws must sit within 3 sigma of 3072.
TEST(SampleSkipBiases, UniformMean) {
    SeededRng rng(1234);
    const std::int64_t draws = 100000;
    double sum = 0.0;
    for (std::int64_t i = 0; i < draws; ++i) {
        const auto u = sample_skip_biases(2, 2048, 8192, rng);
        sum += static_cast<double>(u[1]);
    }
    const double mean = sum / static_cast<double>(draws);
    const double n_values = 6145.0;
    const double variance = (n_values * n_values - 1.0) / 12.0;
    const double sigma_mean = std::sqrt(variance / static_cast<double>(draws));
    EXPECT_NEAR(mean, 3072.0, 3.0 * sigma_mean);
}

TEST(SampleContentBiases, ZeroAndSkipAligned) {
    SeededRng rng(1);
    const std::vector<std::int64_t> u3{0, 100, 5000};
    EXPECT_EQ(sample_content_biases(ContentStrategy::zero_bias, 3, 2048, 10240, u3, rng),
              (std::vector<std::int64_t>{0, 0, 0}));
    const std::vector<std::int64_t> u2{0, 4096};
    EXPECT_EQ(sample_content_biases(ContentStrategy::equal_to_skip_bias, 2, 2048,
                                    2048 + 4096, u2, rng),
              (std::vector<std::int64_t>{0, 4096}));
}

TEST(SampleContentBiases, TextTooShortErrors) {
    SeededRng rng(1);
    const std::vector<std::int64_t> u{0, 4096};
    EXPECT_THROW(sample_content_biases(ContentStrategy::zero_bias, 2, 2048, 2047, u, rng),
                 TextTooShortError);
    EXPECT_THROW(sample_content_biases(ContentStrategy::equal_to_skip_bias, 2, 2048,
                                       2048 + 4095, u, rng),
                 TextTooShortError);
}

TEST(SampleContentBiases, UniformChiSquare) {
    SeededRng rng(77);
    const std::int64_t draws = 100000;
    const std::vector<std::int64_t> u{0, 0};
    std::vector<std::int64_t> counts(8193, 0);
    for (std::int64_t i = 0; i < draws; ++i) {
        const auto v = sample_content_biases(ContentStrategy::uniform_bias, 2, 2048,
                                             10240, u, rng);
        ASSERT_EQ(v[0], 0);
        ASSERT_GE(v[1], 0);
        ASSERT_LE(v[1], 8192);
        counts[static_cast<std::size_t>(v[1])] += 1;
    }
    const double stat =
        testutil::chi2_uniform_stat(counts, static_cast<double>(draws));
    EXPECT_LT(stat, testutil::chi2_crit_p99(8192.0));
}

TEST(BuildPosePlan, SingleChunkIsIdentity) {
    SeededRng rng(3);
    const auto plan = build_pose_plan(make_config(64, 256, 1), 512, rng);
    for (std::int64_t i = 0; i < 64; ++i) {
        EXPECT_EQ(plan.position_index[static_cast<std::size_t>(i)], i);
        EXPECT_EQ(plan.content_index[static_cast<std::size_t>(i)], i);
    }
}

// Direct evaluation of the chunk formulas on a fixed layout.
TEST(BuildPosePlan, FixedLayoutExample) {
    ChunkLayout layout;
    layout.lengths = {1024, 1024};
    layout.starts = {0, 1024};
    layout.skip_biases = {0, 4096};
    layout.content_biases = {0, 0};
    const auto plan = plan_from_chunk_layout(layout);
    ASSERT_EQ(plan.position_index.size(), 2048u);
    for (std::int64_t i = 0; i < 1024; ++i) {
        EXPECT_EQ(plan.position_index[static_cast<std::size_t>(i)], i);
    }
    for (std::int64_t i = 0; i < 1024; ++i) {
        EXPECT_EQ(plan.position_index[static_cast<std::size_t>(1024 + i)], 5120 + i);
    }
    for (std::int64_t i = 0; i < 2048; ++i) {
        EXPECT_EQ(plan.content_index[static_cast<std::size_t>(i)], i);
    }
}

TEST(BuildPosePlan, InvariantsOverRandomDraws) {
    SeededRng rng(5);
    const auto cfg = make_config(64, 256, 4);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::int64_t text_len = rng.uniform_int(64, 400);
        const auto plan = build_pose_plan(cfg, text_len, rng);
        ASSERT_EQ(plan.position_index.size(), 64u);
        expect_strictly_increasing(plan.position_index);
        expect_strictly_increasing(plan.content_index);
        ASSERT_GE(plan.position_index.front(), 0);
        ASSERT_LE(plan.position_index.back(), 255);
        ASSERT_LE(plan.content_index.back(), text_len - 1);
        // within-chunk continuity: consecutive positions inside a chunk differ by 1
        const auto& layout = *plan.layout;
        std::size_t idx = 0;
        for (std::size_t c = 0; c < layout.lengths.size(); ++c) {
            for (std::int64_t j = 0; j < layout.lengths[c]; ++j, ++idx) {
                EXPECT_EQ(plan.position_index[idx],
                          layout.skip_biases[c] + layout.starts[c] + j);
                EXPECT_EQ(plan.content_index[idx],
                          layout.content_biases[c] + layout.starts[c] + j);
            }
        }
    }
}

// Union over many draws covers the whole target window and never exceeds it.
TEST(BuildPosePlan, UnionCoversTargetWindow) {
    SeededRng rng(11);
    const auto cfg = make_config(64, 256, 2);
    std::vector<bool> seen(256, false);
    for (int trial = 0; trial < 20000; ++trial) {
        const auto plan = build_pose_plan(cfg, 256, rng);
        for (std::int64_t p : plan.position_index) {
            ASSERT_GE(p, 0);
            ASSERT_LT(p, 256);
            seen[static_cast<std::size_t>(p)] = true;
        }
    }
    EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
}

TEST(BuildPosePlan, DegenerateTargetEqualsOriginal) {
    SeededRng rng(2);
    const auto plan = build_pose_plan(make_config(32, 32, 4), 32, rng);
    for (std::int64_t i = 0; i < 32; ++i) {
        EXPECT_EQ(plan.position_index[static_cast<std::size_t>(i)], i);
        EXPECT_EQ(plan.content_index[static_cast<std::size_t>(i)], i);
    }
}

TEST(BuildRandposPlan, ExhaustiveWhenTargetEqualsOriginal) {
    SeededRng rng(1);
    const auto plan = build_randpos_plan(make_config(16, 16, 1), 16, rng);
    for (std::int64_t i = 0; i < 16; ++i) {
        EXPECT_EQ(plan.position_index[static_cast<std::size_t>(i)], i);
    }
}

TEST(BuildRandposPlan, NoDuplicatesAndContiguousContent) {
    SeededRng rng(8);
    const auto cfg = make_config(64, 256, 1);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto plan = build_randpos_plan(cfg, 200, rng);
        expect_strictly_increasing(plan.position_index);  // implies distinct
        ASSERT_LE(plan.position_index.back(), 255);
        const std::int64_t offset = plan.content_index.front();
        ASSERT_GE(offset, 0);
        ASSERT_LE(offset, 200 - 64);
        for (std::size_t i = 0; i < plan.content_index.size(); ++i) {
            ASSERT_EQ(plan.content_index[i], offset + static_cast<std::int64_t>(i));
        }
    }
}

// All C(8,4) = 70 subsets occur with equal frequency.
TEST(BuildRandposPlan, UniformSubsetsChiSquare) {
    SeededRng rng(2024);
    const auto cfg = make_config(4, 8, 1);
    std::map<std::vector<std::int64_t>, std::int64_t> counts;
    const std::int64_t draws = 1000000;
    for (std::int64_t i = 0; i < draws; ++i) {
        counts[build_randpos_plan(cfg, 4, rng).position_index] += 1;
    }
    ASSERT_EQ(counts.size(), 70u);
    std::vector<std::int64_t> flat;
    for (const auto& [subset, count] : counts) flat.push_back(count);
    const double stat = testutil::chi2_uniform_stat(flat, static_cast<double>(draws));
    EXPECT_LT(stat, testutil::chi2_crit_p99(69.0));
}

// Mean adjacent gap of a sorted uniform subset is close to L_t / L_c.
TEST(BuildRandposPlan, AdjacentGapMean) {
    SeededRng rng(31);
    const auto cfg = make_config(2048, 16384, 1);
    double gap_sum = 0.0;
    std::int64_t gap_count = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const auto plan = build_randpos_plan(cfg, 2048, rng);
        for (std::size_t i = 1; i < plan.position_index.size(); ++i) {
            gap_sum += static_cast<double>(plan.position_index[i] -
                                           plan.position_index[i - 1]);
            ++gap_count;
        }
    }
    const double mean_gap = gap_sum / static_cast<double>(gap_count);
    const double reference = 16383.0 / 2048.0;
    EXPECT_NEAR(mean_gap, reference, 0.05 * reference);
}

TEST(BuildFullPlan, IdentityLayouts) {
    EXPECT_EQ(build_full_plan(1).position_index, (std::vector<std::int64_t>{0}));
    EXPECT_EQ(build_full_plan(4).position_index,
              (std::vector<std::int64_t>{0, 1, 2, 3}));
    EXPECT_EQ(build_full_plan(4).content_index,
              (std::vector<std::int64_t>{0, 1, 2, 3}));
    EXPECT_THROW(build_full_plan(0), ConfigError);
}

// A single-chunk pose plan is bit-identical to the full plan.
TEST(BuildFullPlan, MatchesSingleChunkPose) {
    SeededRng rng(6);
    const auto pose = build_pose_plan(make_config(2048, 2048, 1), 2048, rng);
    const auto full = build_full_plan(2048);
    EXPECT_EQ(pose.position_index, full.position_index);
    EXPECT_EQ(pose.content_index, full.content_index);
}

TEST(CoveredDistances, FullPlanAndSmallPoseExample) {
    EXPECT_EQ(covered_distances(build_full_plan(4)).values(),
              (std::vector<std::int64_t>{0, 1, 2, 3}));

    ChunkLayout layout;
    layout.lengths = {2, 2};
    layout.starts = {0, 2};
    layout.skip_biases = {0, 5};
    layout.content_biases = {0, 0};
    const auto plan = plan_from_chunk_layout(layout);
    EXPECT_EQ(plan.position_index, (std::vector<std::int64_t>{0, 1, 7, 8}));
    EXPECT_EQ(covered_distances(plan).values(),
              (std::vector<std::int64_t>{0, 1, 6, 7, 8}));
}

// Closed form for N=2: [0, max(l0,l1)-1] union [u1+1, u1+L_c-1], checked
// against brute-force pairwise enumeration and covered_distances.
TEST(CoveredDistances, MatchesClosedFormAndBruteForce) {
    SeededRng rng(99);
    const auto cfg = make_config(32, 128, 2);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto plan = build_pose_plan(cfg, 128, rng);
        const auto& layout = *plan.layout;
        const std::int64_t l0 = layout.lengths[0];
        const std::int64_t l1 = layout.lengths[1];
        const std::int64_t u1 = layout.skip_biases[1];
        const auto expected = DistanceSet::from_intervals(
            {{0, std::max(l0, l1) - 1}, {u1 + 1, u1 + 32 - 1}});
        const auto got = covered_distances(plan);
        ASSERT_EQ(got, expected);

        std::set<std::int64_t> brute;
        for (std::int64_t p : plan.position_index) {
            for (std::int64_t q : plan.position_index) {
                if (p >= q) brute.insert(p - q);
            }
        }
        const auto vals = got.values();
        ASSERT_EQ(brute, std::set<std::int64_t>(vals.begin(), vals.end()));
    }
}

TEST(DistanceSet, MergesAndQueries) {
    const auto s = DistanceSet::from_intervals({{5, 9}, {0, 3}, {4, 4}, {20, 21}});
    EXPECT_EQ(s.intervals().size(), 2u);
    EXPECT_EQ(s.count(), 12);
    EXPECT_TRUE(s.contains(0));
    EXPECT_TRUE(s.contains(9));
    EXPECT_FALSE(s.contains(10));
    EXPECT_TRUE(s.contains(20));
    EXPECT_FALSE(s.contains(22));
}
