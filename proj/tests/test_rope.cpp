#include "poselab/rope.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "poselab/rng.hpp"
#include "poselab/rope_check.hpp"

using namespace poselab;

namespace {

// Independent term-by-term evaluation of the relative attention score:
// sum_j (q2j k2j + q2j+1 k2j+1) cos((m-n) theta_j)
//     + (q2j k2j+1 - q2j+1 k2j) sin((m-n) theta_j)
double score_oracle(const std::vector<double>& q, const std::vector<double>& k,
                    std::int64_t m, std::int64_t n, const RopeParams& params) {
    double acc = 0.0;
    const double rel = static_cast<double>(m - n);
    for (std::size_t j = 0; j < params.theta.size(); ++j) {
        const double a = rel * params.theta[j];
        const double qa = q[2 * j], qb = q[2 * j + 1];
        const double ka = k[2 * j], kb = k[2 * j + 1];
        acc += (qa * ka + qb * kb) * std::cos(a) + (qa * kb - qb * ka) * std::sin(a);
    }
    return acc * params.attn_scale;
}

std::vector<double> random_vec(SeededRng& rng, std::int64_t n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = rng.normal();
    return v;
}

}  // namespace

TEST(ThetaTable, ClosedFormValues) {
    EXPECT_EQ(theta_table(2, 10000.0), (std::vector<double>{1.0}));
    const auto t4 = theta_table(4, 10000.0);
    ASSERT_EQ(t4.size(), 2u);
    EXPECT_DOUBLE_EQ(t4[0], 1.0);
    EXPECT_NEAR(t4[1], 0.01, 1e-15);
    const auto t128 = theta_table(128, 10000.0);
    EXPECT_NEAR(t128[63], std::pow(10000.0, -126.0 / 128.0), 1e-18);
    EXPECT_NEAR(t128[63], 1.1548e-4, 1e-8);
}

TEST(ThetaTable, StrictlyDecreasingAndValidation) {
    const auto t = theta_table(64, 10000.0);
    for (std::size_t j = 1; j < t.size(); ++j) {
        EXPECT_LT(t[j], t[j - 1]);
    }
    EXPECT_THROW(theta_table(3, 10000.0), ConfigError);
    EXPECT_THROW(theta_table(0, 10000.0), ConfigError);
    EXPECT_THROW(theta_table(8, 1.0), ConfigError);
}

TEST(EffectiveRope, LinearIsNoOpAtAlphaOne) {
    const auto params = RopeParams::make(64);
    const auto eff = effective_rope({Interpolation::linear, 1.0, 1.0, 32.0}, params, 2048);
    EXPECT_EQ(eff.theta, params.theta);
    EXPECT_EQ(eff.attn_scale, 1.0);
}

// Linear interpolation realizes position down-scaling: the phase of position
// m with scaled frequencies equals the phase of position m/alpha.
TEST(EffectiveRope, LinearPhaseEquivalence) {
    const auto params = RopeParams::make(8);
    const auto eff = effective_rope({Interpolation::linear, 8.0, 1.0, 32.0}, params, 2048);
    for (std::size_t j = 0; j < eff.theta.size(); ++j) {
        EXPECT_NEAR(16.0 * eff.theta[j], 2.0 * params.theta[j], 1e-15);
    }
}

TEST(EffectiveRope, NtkEndpointIdentity) {
    for (std::int64_t d : {4, 64, 128}) {
        const auto params = RopeParams::make(d);
        for (double alpha : {2.0, 4.0, 8.0, 16.0, 64.0}) {
            const auto eff =
                effective_rope({Interpolation::ntk, alpha, 1.0, 32.0}, params, 2048);
            const double lhs = eff.theta.back() * alpha;
            const double rhs = params.theta.back();
            EXPECT_NEAR(lhs, rhs, 1e-12 * std::fabs(rhs))
                << "d=" << d << " alpha=" << alpha;
        }
    }
}

TEST(EffectiveRope, YarnClampEndpointsAndConvexity) {
    const std::int64_t original_len = 2048;
    const auto params = RopeParams::make(128);
    const double alpha = 8.0;
    const InterpolationStrategy strat{Interpolation::yarn, alpha, 1.0, 32.0};
    const auto eff = effective_rope(strat, params, original_len);
    for (std::size_t j = 0; j < eff.theta.size(); ++j) {
        const double rot = static_cast<double>(original_len) * params.theta[j] / kTwoPi;
        if (rot >= 32.0) {
            EXPECT_DOUBLE_EQ(eff.theta[j], params.theta[j]);  // pure extrapolation
        } else if (rot <= 1.0) {
            EXPECT_DOUBLE_EQ(eff.theta[j], params.theta[j] / alpha);  // pure linear
        }
        EXPECT_GE(eff.theta[j], params.theta[j] / alpha - 1e-18);
        EXPECT_LE(eff.theta[j], params.theta[j] + 1e-18);
    }
    const double t = 0.1 * std::log(alpha) + 1.0;
    EXPECT_DOUBLE_EQ(eff.attn_scale, t * t);
}

TEST(EffectiveRope, IdentityAtAlphaOneForAllKinds) {
    const auto params = RopeParams::make(64);
    for (Interpolation kind :
         {Interpolation::none, Interpolation::linear, Interpolation::ntk,
          Interpolation::yarn}) {
        const auto eff = effective_rope({kind, 1.0, 1.0, 32.0}, params, 2048);
        EXPECT_EQ(eff.theta, params.theta);
        EXPECT_EQ(eff.attn_scale, 1.0);
    }
}

TEST(EffectiveRope, RejectsBadStrategies) {
    const auto params = RopeParams::make(8);
    EXPECT_THROW(effective_rope({Interpolation::linear, 0.5, 1.0, 32.0}, params, 64),
                 ConfigError);
    EXPECT_THROW(effective_rope({Interpolation::yarn, 2.0, 32.0, 32.0}, params, 64),
                 ConfigError);
}

TEST(ApplyRope, ZeroPositionIsIdentity) {
    SeededRng rng(4);
    const auto params = RopeParams::make(16);
    const auto h = random_vec(rng, 16);
    EXPECT_EQ(apply_rope(h, 0, params), h);
}

TEST(ApplyRope, UnitRotation) {
    // d=2 with theta_0 = 1: position m rotates (1, 0) by exactly m radians.
    const auto params = RopeParams::make(2);
    const std::vector<double> h{1.0, 0.0};
    const auto r1 = apply_rope(h, 1, params);
    EXPECT_NEAR(r1[0], std::cos(1.0), 1e-12);
    EXPECT_NEAR(r1[1], std::sin(1.0), 1e-12);
    const auto r3 = apply_rope(h, 3, params);
    EXPECT_NEAR(r3[0], std::cos(3.0), 1e-12);
    EXPECT_NEAR(r3[1], std::sin(3.0), 1e-12);
}

TEST(ApplyRope, PreservesNorm) {
    SeededRng rng(12);
    for (std::int64_t d : {2, 8, 64, 128}) {
        const auto params = RopeParams::make(d);
        for (int trial = 0; trial < 200; ++trial) {
            const auto h = random_vec(rng, d);
            double n0 = 0.0;
            for (double x : h) n0 += x * x;
            const auto r = apply_rope(h, rng.uniform_int(0, 1 << 30), params);
            double n1 = 0.0;
            for (double x : r) n1 += x * x;
            ASSERT_NEAR(std::sqrt(n1), std::sqrt(n0), 1e-9 * std::sqrt(n0));
        }
    }
}

TEST(ApplyRope, ShapeMismatchThrows) {
    const auto params = RopeParams::make(8);
    std::vector<double> h(6, 0.0);
    EXPECT_THROW(apply_rope(h, 1, params), ShapeError);
}

TEST(AttentionScore, ZeroRelativeDistanceIsPlainDot) {
    SeededRng rng(21);
    auto params = RopeParams::make(8);
    params.attn_scale = 1.7;
    const auto q = random_vec(rng, 8);
    const auto k = random_vec(rng, 8);
    double dot = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) dot += q[i] * k[i];
    EXPECT_NEAR(attention_score(q, k, 37, 37, params), 1.7 * dot, 1e-12);
}

TEST(AttentionScore, ShiftInvariance) {
    SeededRng rng(33);
    for (std::int64_t d : {2, 8, 64, 128}) {
        const auto params = RopeParams::make(d);
        for (int trial = 0; trial < 300; ++trial) {
            const auto q = random_vec(rng, d);
            const auto k = random_vec(rng, d);
            const std::int64_t n = rng.uniform_int(0, 1 << 20);
            const std::int64_t m = n + rng.uniform_int(0, 4096);
            const std::int64_t s = rng.uniform_int(0, 1 << 20);
            const double a = attention_score(q, k, m, n, params);
            const double b = attention_score(q, k, m + s, n + s, params);
            ASSERT_NEAR(a, b, 1e-9 * std::max(1.0, std::fabs(a)));
        }
    }
}

TEST(AttentionScore, MatchesTermByTermOracle) {
    SeededRng rng(55);
    const auto params = RopeParams::make(8);
    for (int trial = 0; trial < 200; ++trial) {
        const auto q = random_vec(rng, 8);
        const auto k = random_vec(rng, 8);
        const double got = attention_score(q, k, 5, 2, params);
        const double expected = score_oracle(q, k, 5, 2, params);
        ASSERT_NEAR(got, expected, 1e-12);
    }
}

TEST(AttentionScore, OracleAgreesForModeratePositions) {
    SeededRng rng(56);
    auto params = RopeParams::make(64);
    params.attn_scale = 0.9;
    for (int trial = 0; trial < 100; ++trial) {
        const auto q = random_vec(rng, 64);
        const auto k = random_vec(rng, 64);
        const std::int64_t n = rng.uniform_int(0, 1 << 20);
        const std::int64_t m = n + rng.uniform_int(0, 4095);
        const double got = attention_score(q, k, m, n, params);
        const double expected = score_oracle(q, k, m, n, params);
        ASSERT_NEAR(got, expected, 1e-9 * std::max(1.0, std::fabs(expected)));
    }
}

// Positions up to 2^31-1 stay usable; the phase m*theta loses absolute
// precision to argument rounding at that magnitude, so the tolerance is
// proportionally wider.
TEST(AttentionScore, SupportsExtremePositions) {
    SeededRng rng(57);
    const auto params = RopeParams::make(64);
    for (int trial = 0; trial < 50; ++trial) {
        const auto q = random_vec(rng, 64);
        const auto k = random_vec(rng, 64);
        const std::int64_t n = rng.uniform_int(0, (1LL << 31) - 4096);
        const std::int64_t m = n + rng.uniform_int(0, 4095);
        const double got = attention_score(q, k, m, n, params);
        ASSERT_TRUE(std::isfinite(got));
        const double expected = score_oracle(q, k, m, n, params);
        ASSERT_NEAR(got, expected, 1e-6 * std::max(1.0, std::fabs(expected)));
    }
}

TEST(RopeCheckSuite, AllInvariantsPass) {
    for (const auto& r : run_rope_checks(7)) {
        EXPECT_TRUE(r.pass) << r.name << " max_error=" << r.max_error;
    }
}
