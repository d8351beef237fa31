#include "poselab/evaluation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "chi_square.hpp"
#include "poselab/data.hpp"
#include "poselab/model.hpp"

using namespace poselab;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.vocab_size = 64;
    cfg.n_layers = 1;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.ffn_mult = 2;
    cfg.train_window = 16;
    cfg.target_window = 16;
    return cfg;
}

// Finds the digits following the KEY marker; stands in for a perfect model.
std::vector<std::int32_t> copy_oracle(std::span<const std::int32_t> prompt,
                                      std::int64_t n_answer) {
    for (std::size_t i = 0; i < prompt.size(); ++i) {
        if (prompt[i] == SyntheticVocab::key_marker) {
            return std::vector<std::int32_t>(
                prompt.begin() + static_cast<std::ptrdiff_t>(i) + 1,
                prompt.begin() + static_cast<std::ptrdiff_t>(i) + 1 + n_answer);
        }
    }
    return {};
}

}  // namespace

// len 12, window 8, stride 4: the first window scores targets 1..8, the
// second the trailing stride targets 9..11; every target token exactly once.
TEST(SlidingWindowSegments, SpecExampleDecomposition) {
    const auto segs = sliding_window_segments(12, 8, 4);
    ASSERT_EQ(segs.size(), 2u);
    EXPECT_EQ(segs[0].start, 0);
    EXPECT_EQ(segs[0].first_target, 1);
    EXPECT_EQ(segs[0].last_target, 8);
    EXPECT_EQ(segs[1].start, 4);
    EXPECT_EQ(segs[1].first_target, 9);
    EXPECT_EQ(segs[1].last_target, 11);
}

// Brute-force enumeration oracle: every target index in [1, n-1] is scored
// exactly once, windows advance by the stride, and targets sit inside their
// window's causal range.
TEST(SlidingWindowSegments, EveryTokenScoredExactlyOnce) {
    SeededRng rng(13);
    for (int trial = 0; trial < 300; ++trial) {
        const std::int64_t window = rng.uniform_int(2, 24);
        const std::int64_t stride = rng.uniform_int(1, window);
        const std::int64_t n = window + 1 + rng.uniform_int(0, 40);
        const auto segs = sliding_window_segments(n, window, stride);
        std::vector<int> times(static_cast<std::size_t>(n), 0);
        for (std::size_t s = 0; s < segs.size(); ++s) {
            ASSERT_EQ(segs[s].start, static_cast<std::int64_t>(s) * stride);
            ASSERT_GE(segs[s].first_target, segs[s].start + 1);
            ASSERT_LE(segs[s].last_target, segs[s].start + window);
            for (std::int64_t t = segs[s].first_target; t <= segs[s].last_target; ++t) {
                times[static_cast<std::size_t>(t)] += 1;
            }
        }
        for (std::int64_t t = 1; t < n; ++t) {
            ASSERT_EQ(times[static_cast<std::size_t>(t)], 1)
                << "n=" << n << " window=" << window << " stride=" << stride
                << " t=" << t;
        }
        ASSERT_EQ(times[0], 0);
    }
}

TEST(SlidingWindowSegments, RejectsBadArguments) {
    EXPECT_THROW(sliding_window_segments(8, 8, 4), ConfigError);   // too few tokens
    EXPECT_THROW(sliding_window_segments(20, 8, 0), ConfigError);  // stride < 1
    EXPECT_THROW(sliding_window_segments(20, 8, 9), ConfigError);  // stride > window
}

// Degenerate single-window case must equal exp(mean NLL of one forward pass).
TEST(SlidingWindowPerplexity, SingleWindowMatchesDirectForward) {
    const auto cfg = small_config();
    auto params = build_parameter_set(cfg);
    SeededRng rng(4);
    params.init_random(rng, 0.1);

    const std::int64_t n = 13, window = n - 1;
    std::vector<std::int32_t> tokens(static_cast<std::size_t>(n));
    for (auto& t : tokens) t = static_cast<std::int32_t>(rng.uniform_int(0, 63));

    const double ppl = sliding_window_perplexity(params, cfg, tokens, window, window,
                                                 cfg.strategy());

    const auto rope = cfg.effective_rope_params();
    ForwardCache cache;
    std::vector<std::int64_t> pos(static_cast<std::size_t>(window));
    for (std::int64_t i = 0; i < window; ++i) pos[static_cast<std::size_t>(i)] = i;
    forward(cfg, rope, params,
            std::span<const std::int32_t>(tokens.data(), static_cast<std::size_t>(window)),
            pos, cache);
    const std::vector<std::int32_t> targets(tokens.begin() + 1, tokens.end());
    const double direct = std::exp(loss_next_token(cache.logits, 64, targets));
    EXPECT_NEAR(ppl, direct, 1e-12 * direct);
}

// All-zero parameters produce uniform logits, so perplexity equals vocab size.
TEST(SlidingWindowPerplexity, UniformModelGivesVocabSize) {
    const auto cfg = small_config();
    const auto params = build_parameter_set(cfg);  // zeros everywhere
    SeededRng rng(6);
    std::vector<std::int32_t> tokens(100);
    for (auto& t : tokens) t = static_cast<std::int32_t>(rng.uniform_int(0, 63));
    const double ppl =
        sliding_window_perplexity(params, cfg, tokens, 16, 8, cfg.strategy());
    EXPECT_NEAR(ppl, 64.0, 0.01 * 64.0);
}

TEST(SlidingWindowPerplexity, ScoredCountMatchesSegments) {
    const auto cfg = small_config();
    auto params = build_parameter_set(cfg);
    SeededRng rng(8);
    params.init_random(rng, 0.05);
    std::vector<std::int32_t> tokens(57);
    for (auto& t : tokens) t = static_cast<std::int32_t>(rng.uniform_int(0, 63));
    std::int64_t n_scored = 0;
    sliding_window_perplexity(params, cfg, tokens, 16, 5, cfg.strategy(), &n_scored);
    EXPECT_EQ(n_scored, 56);  // every token except the first
}

TEST(MakePasskeyExample, DeterministicAndSelfConsistent) {
    SeededRng rng_a(123);
    SeededRng rng_b(123);
    const auto a = make_passkey_example(256, rng_a);
    const auto b = make_passkey_example(256, rng_b);
    EXPECT_EQ(a.prompt_tokens, b.prompt_tokens);
    EXPECT_EQ(a.passkey_digits, b.passkey_digits);
    EXPECT_EQ(a.answer_tokens, b.answer_tokens);

    // structure: prompt has total_len - 5 tokens and ends with the query
    EXPECT_EQ(a.prompt_tokens.size(), 256u - 5u);
    EXPECT_EQ(a.prompt_tokens.back(), SyntheticVocab::query_marker);
    // the key marker occurs exactly once, at insert_position
    const auto key_count = std::count(a.prompt_tokens.begin(), a.prompt_tokens.end(),
                                      SyntheticVocab::key_marker);
    EXPECT_EQ(key_count, 1);
    EXPECT_EQ(a.prompt_tokens[static_cast<std::size_t>(a.insert_position)],
              SyntheticVocab::key_marker);
    // extraction from the prompt's own text recovers the digits
    const auto extracted = copy_oracle(a.prompt_tokens, 5);
    EXPECT_EQ(extracted, a.answer_tokens);
    ASSERT_EQ(a.passkey_digits.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(a.passkey_digits[i] - '0',
                  SyntheticVocab::digit_value(a.answer_tokens[i]));
        EXPECT_EQ(SyntheticVocab::digit_offset(a.answer_tokens[i]),
                  static_cast<int>(i));
    }
}

TEST(MakePasskeyExample, TooSmallThrows) {
    SeededRng rng(1);
    EXPECT_THROW(make_passkey_example(8, rng), ConfigError);
    EXPECT_NO_THROW(make_passkey_example(14, rng));
}

// Insert positions are uniform over the feasible filler span.
TEST(MakePasskeyExample, InsertPositionUniformityChiSquare) {
    SeededRng rng(2025);
    const std::int64_t total_len = 256;
    const std::int64_t filler_total = (total_len - 5) - 6 - 1;
    const int n_buckets = 16;
    std::vector<std::int64_t> counts(n_buckets, 0);
    const std::int64_t draws = 4000;
    for (std::int64_t i = 0; i < draws; ++i) {
        const auto ex = make_passkey_example(total_len, rng);
        ASSERT_GE(ex.insert_position, 0);
        ASSERT_LE(ex.insert_position, filler_total);
        const auto bucket = static_cast<std::size_t>(
            ex.insert_position * n_buckets / (filler_total + 1));
        counts[bucket] += 1;
    }
    const double stat =
        testutil::chi2_uniform_stat(counts, static_cast<double>(draws));
    EXPECT_LT(stat, testutil::chi2_crit_p99(n_buckets - 1.0));
}

TEST(PasskeyAccuracy, CopyOracleScoresPerfectly) {
    SeededRng rng(9);
    std::vector<PasskeyExample> examples;
    for (int i = 0; i < 50; ++i) examples.push_back(make_passkey_example(128, rng));
    EXPECT_EQ(passkey_accuracy(copy_oracle, examples), 1.0);
}

TEST(PasskeyAccuracy, RandomModelIsChanceLevel) {
    ModelConfig cfg = small_config();
    cfg.train_window = 64;
    cfg.target_window = 64;
    auto params = build_parameter_set(cfg);
    SeededRng rng(10);
    params.init_random(rng, 0.08);
    const std::vector<std::int64_t> lengths{64};
    const auto points = passkey_sweep(params, cfg, cfg.strategy(), lengths, 50, rng);
    ASSERT_EQ(points.size(), 1u);
    EXPECT_EQ(points[0].length, 64);
    EXPECT_LE(points[0].accuracy, 0.02);
}

TEST(GreedyDecode, TieBreaksToLowestTokenId) {
    // all-zero model: every logit row is identical, so argmax must pick id 0
    const auto cfg = small_config();
    const auto params = build_parameter_set(cfg);
    const std::vector<std::int32_t> prompt{12, 13, 14};
    const auto out = greedy_decode(params, cfg, cfg.strategy(), prompt, 3);
    EXPECT_EQ(out, (std::vector<std::int32_t>{0, 0, 0}));
}
