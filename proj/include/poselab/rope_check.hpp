#pragma once

// Self-contained diagnostic suite for the rotary-embedding invariants,
// shared by the `rope-check` CLI subcommand and the test suite.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "poselab/rng.hpp"
#include "poselab/rope.hpp"

namespace poselab {

struct RopeCheckResult {
    std::string name;
    double max_error = 0.0;
    bool pass = false;
};

inline std::vector<RopeCheckResult> run_rope_checks(std::uint64_t seed) {
    std::vector<RopeCheckResult> results;
    SeededRng rng(seed);

    // Shift invariance: score(m, n) == score(m+s, n+s).
    {
        RopeCheckResult r{"shift-invariance", 0.0, false};
        for (std::int64_t d : {2, 8, 64, 128}) {
            const auto params = RopeParams::make(d);
            std::vector<double> q(static_cast<std::size_t>(d));
            std::vector<double> k(static_cast<std::size_t>(d));
            for (int trial = 0; trial < 250; ++trial) {
                for (auto& x : q) x = rng.normal();
                for (auto& x : k) x = rng.normal();
                const std::int64_t n = rng.uniform_int(0, 1 << 20);
                const std::int64_t m = n + rng.uniform_int(0, 1 << 12);
                const std::int64_t s = rng.uniform_int(0, 1 << 20);
                const double a = attention_score(q, k, m, n, params);
                const double b = attention_score(q, k, m + s, n + s, params);
                const double err = std::fabs(a - b) / std::max(1.0, std::fabs(a));
                r.max_error = std::max(r.max_error, err);
            }
        }
        r.pass = r.max_error <= 1e-9;
        results.push_back(r);
    }

    // Isometry: rotations preserve the Euclidean norm.
    {
        RopeCheckResult r{"isometry", 0.0, false};
        for (std::int64_t d : {2, 8, 64, 128}) {
            const auto params = RopeParams::make(d);
            std::vector<double> h(static_cast<std::size_t>(d));
            for (int trial = 0; trial < 100; ++trial) {
                double norm0 = 0.0;
                for (auto& x : h) {
                    x = rng.normal();
                    norm0 += x * x;
                }
                const auto rotated =
                    apply_rope(h, rng.uniform_int(0, 1 << 24), params);
                double norm1 = 0.0;
                for (double x : rotated) norm1 += x * x;
                const double err =
                    std::fabs(std::sqrt(norm1) - std::sqrt(norm0)) /
                    std::max(1e-300, std::sqrt(norm0));
                r.max_error = std::max(r.max_error, err);
            }
        }
        r.pass = r.max_error <= 1e-9;
        results.push_back(r);
    }

    // NTK endpoint identity: theta'_{d/2-1} * alpha == theta_{d/2-1}.
    {
        RopeCheckResult r{"ntk-endpoint", 0.0, false};
        for (std::int64_t d : {4, 64, 128}) {
            const auto params = RopeParams::make(d);
            for (double alpha : {2.0, 4.0, 8.0, 16.0, 64.0}) {
                const auto eff = effective_rope(
                    {Interpolation::ntk, alpha, 1.0, 32.0}, params, 2048);
                const double lhs = eff.theta.back() * alpha;
                const double rhs = params.theta.back();
                r.max_error =
                    std::max(r.max_error, std::fabs(lhs - rhs) / std::fabs(rhs));
            }
        }
        r.pass = r.max_error <= 1e-12;
        results.push_back(r);
    }

    // All strategies are exact no-ops at alpha = 1.
    {
        RopeCheckResult r{"alpha1-identity", 0.0, false};
        bool ok = true;
        for (std::int64_t d : {8, 64}) {
            const auto params = RopeParams::make(d);
            for (Interpolation kind :
                 {Interpolation::linear, Interpolation::ntk, Interpolation::yarn}) {
                const auto eff =
                    effective_rope({kind, 1.0, 1.0, 32.0}, params, 2048);
                ok = ok && eff.theta == params.theta && eff.attn_scale == 1.0;
            }
        }
        r.max_error = ok ? 0.0 : 1.0;
        r.pass = ok;
        results.push_back(r);
    }

    // YaRN blend stays inside [theta/alpha, theta] per dimension.
    {
        RopeCheckResult r{"yarn-convexity", 0.0, false};
        std::int64_t violations = 0;
        for (std::int64_t d : {8, 64, 128}) {
            const auto params = RopeParams::make(d);
            for (double alpha : {2.0, 8.0, 64.0}) {
                const auto eff = effective_rope(
                    {Interpolation::yarn, alpha, 1.0, 32.0}, params, 2048);
                for (std::size_t j = 0; j < eff.theta.size(); ++j) {
                    const double lo = params.theta[j] / alpha;
                    const double hi = params.theta[j];
                    if (eff.theta[j] < lo * (1.0 - 1e-12) ||
                        eff.theta[j] > hi * (1.0 + 1e-12)) {
                        ++violations;
                    }
                }
            }
        }
        r.max_error = static_cast<double>(violations);
        r.pass = violations == 0;
        results.push_back(r);
    }

    return results;
}

}  // namespace poselab
