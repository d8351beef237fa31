#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "poselab/errors.hpp"

namespace poselab {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// theta_j = base^(-2j/d) for j in [0, d/2).
inline std::vector<double> theta_table(std::int64_t head_dim, double base) {
    if (head_dim < 2 || head_dim % 2 != 0) {
        throw ConfigError("head_dim must be even and >= 2");
    }
    if (base <= 1.0) {
        throw ConfigError("rope base must be > 1");
    }
    std::vector<double> theta(static_cast<std::size_t>(head_dim / 2));
    for (std::int64_t j = 0; j < head_dim / 2; ++j) {
        theta[static_cast<std::size_t>(j)] =
            std::pow(base, -2.0 * static_cast<double>(j) /
                               static_cast<double>(head_dim));
    }
    return theta;
}

// Per-dimension rotation frequencies plus the attention logit multiplier.
struct RopeParams {
    std::int64_t head_dim = 0;
    double base = 10000.0;
    std::vector<double> theta;   // head_dim / 2 entries, strictly decreasing
    double attn_scale = 1.0;

    static RopeParams make(std::int64_t head_dim, double base = 10000.0) {
        RopeParams p;
        p.head_dim = head_dim;
        p.base = base;
        p.theta = theta_table(head_dim, base);
        p.attn_scale = 1.0;
        return p;
    }
};

enum class Interpolation { none, linear, ntk, yarn };

inline const char* to_string(Interpolation k) {
    switch (k) {
        case Interpolation::none: return "none";
        case Interpolation::linear: return "linear";
        case Interpolation::ntk: return "ntk";
        case Interpolation::yarn: return "yarn";
    }
    return "?";
}

inline Interpolation interpolation_from_string(const std::string& s) {
    if (s == "none") return Interpolation::none;
    if (s == "linear") return Interpolation::linear;
    if (s == "ntk") return Interpolation::ntk;
    if (s == "yarn") return Interpolation::yarn;
    throw ConfigError("unknown interpolation strategy: " + s);
}

// Choice of position-interpolation scheme with scaling factor alpha = L_t/L_c.
// The YaRN ramp bounds are rotation counts r_j = L_c * theta_j / (2*pi).
struct InterpolationStrategy {
    Interpolation kind = Interpolation::none;
    double alpha = 1.0;
    double yarn_ramp_low = 1.0;
    double yarn_ramp_high = 32.0;

    void validate() const {
        if (alpha < 1.0) {
            throw ConfigError("scaling factor alpha must be >= 1");
        }
        if (yarn_ramp_low >= yarn_ramp_high) {
            throw ConfigError("yarn ramp bounds must satisfy low < high");
        }
    }
};

// Transforms the frequency table (and attention scale) according to the
// interpolation strategy:
//   linear:  theta_j / alpha   (same phases as scaling positions by 1/alpha)
//   ntk:     (base*lambda)^(-2j/d) with lambda = alpha^(d/(d-2)), which makes
//            the last dimension match linear interpolation exactly
//   yarn:    per-dimension blend between linear and unchanged, driven by the
//            rotation count ramp, plus logit multiplier (0.1*ln(alpha)+1)^2
inline RopeParams effective_rope(const InterpolationStrategy& strategy,
                                 const RopeParams& params,
                                 std::int64_t original_len) {
    strategy.validate();
    RopeParams out = params;
    out.attn_scale = 1.0;
    if (strategy.kind == Interpolation::none || strategy.alpha == 1.0) {
        return out;
    }
    const double alpha = strategy.alpha;
    const double d = static_cast<double>(params.head_dim);
    switch (strategy.kind) {
        case Interpolation::none:
            break;
        case Interpolation::linear:
            for (double& t : out.theta) t /= alpha;
            break;
        case Interpolation::ntk: {
            const double lambda = std::pow(alpha, d / (d - 2.0));
            out.theta = theta_table(params.head_dim, params.base * lambda);
            break;
        }
        case Interpolation::yarn: {
            const double lo = strategy.yarn_ramp_low;
            const double hi = strategy.yarn_ramp_high;
            for (std::size_t j = 0; j < out.theta.size(); ++j) {
                const double rot =
                    static_cast<double>(original_len) * params.theta[j] / kTwoPi;
                double gamma = (rot - lo) / (hi - lo);
                gamma = std::clamp(gamma, 0.0, 1.0);
                out.theta[j] =
                    (1.0 - gamma) * params.theta[j] / alpha + gamma * params.theta[j];
            }
            const double t = 0.1 * std::log(alpha) + 1.0;
            out.attn_scale = t * t;
            break;
        }
    }
    return out;
}

// Rotates consecutive pairs (h_{2j}, h_{2j+1}) by angle m * theta_j, in place.
inline void rope_rotate_inplace(std::span<double> h, std::int64_t m,
                                const RopeParams& params) {
    if (static_cast<std::int64_t>(h.size()) != params.head_dim) {
        throw ShapeError("apply_rope: vector length " + std::to_string(h.size()) +
                         " != head_dim " + std::to_string(params.head_dim));
    }
    const double pos = static_cast<double>(m);
    for (std::size_t j = 0; j < params.theta.size(); ++j) {
        const double angle = pos * params.theta[j];
        const double c = std::cos(angle);
        const double s = std::sin(angle);
        const double a = h[2 * j];
        const double b = h[2 * j + 1];
        h[2 * j] = a * c - b * s;
        h[2 * j + 1] = a * s + b * c;
    }
}

inline std::vector<double> apply_rope(std::span<const double> h, std::int64_t m,
                                      const RopeParams& params) {
    std::vector<double> out(h.begin(), h.end());
    rope_rotate_inplace(out, m, params);
    return out;
}

// Attention score <f(q,m), f(k,n)> * attn_scale. Depends only on m - n.
inline double attention_score(std::span<const double> q, std::span<const double> k,
                              std::int64_t m, std::int64_t n,
                              const RopeParams& params) {
    if (q.size() != k.size() ||
        static_cast<std::int64_t>(q.size()) != params.head_dim) {
        throw ShapeError("attention_score: q/k length must equal head_dim");
    }
    const auto fq = apply_rope(q, m, params);
    const auto fk = apply_rope(k, n, params);
    double acc = 0.0;
    for (std::size_t i = 0; i < fq.size(); ++i) {
        acc += fq[i] * fk[i];
    }
    return acc * params.attn_scale;
}

}  // namespace poselab
