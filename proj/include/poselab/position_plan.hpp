#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "poselab/errors.hpp"
#include "poselab/rng.hpp"

namespace poselab {

// How the text content of each chunk is chosen relative to the source text.
enum class ContentStrategy {
    uniform_bias,        // v_i ~ U({v_{i-1}, ..., L_x - L_c})
    zero_bias,           // v_i = 0, genuinely continuous content
    equal_to_skip_bias,  // v_i = u_i, content aligned with position indices
};

enum class PlanKind { pose, randpos, full };

inline const char* to_string(ContentStrategy s) {
    switch (s) {
        case ContentStrategy::uniform_bias: return "uniform-bias";
        case ContentStrategy::zero_bias: return "zero-bias";
        case ContentStrategy::equal_to_skip_bias: return "equal-to-skip-bias";
    }
    return "?";
}

inline const char* to_string(PlanKind k) {
    switch (k) {
        case PlanKind::pose: return "pose";
        case PlanKind::randpos: return "randpos";
        case PlanKind::full: return "full";
    }
    return "?";
}

// Context-extension setup: train window L_c, target window L_t, chunk count N.
struct ExtensionConfig {
    std::int64_t original_len = 0;  // L_c
    std::int64_t target_len = 0;    // L_t
    std::int64_t chunk_count = 2;   // N
    ContentStrategy content_strategy = ContentStrategy::uniform_bias;

    // Scaling factor alpha = L_t / L_c. May be fractional; the exact pair
    // (original_len, target_len) is the ground truth.
    double scaling_factor() const {
        return static_cast<double>(target_len) / static_cast<double>(original_len);
    }

    void validate() const {
        if (original_len < 1) {
            throw ConfigError("original_len must be >= 1");
        }
        if (target_len < original_len) {
            throw ConfigError("target_len must be >= original_len");
        }
        if (chunk_count < 1 || chunk_count > original_len) {
            throw ConfigError("chunk_count must be in [1, original_len]");
        }
    }
};

// Per-example layout: chunk lengths l_i, starts st_i, skip biases u_i and
// content biases v_i.
struct ChunkLayout {
    std::vector<std::int64_t> lengths;
    std::vector<std::int64_t> starts;
    std::vector<std::int64_t> skip_biases;
    std::vector<std::int64_t> content_biases;
};

// The manipulated (position index, source token index) arrays for one
// training example.
struct PositionPlan {
    PlanKind kind = PlanKind::full;
    std::vector<std::int64_t> position_index;  // strictly increasing
    std::vector<std::int64_t> content_index;   // strictly increasing
    std::optional<ChunkLayout> layout;         // present for pose only
};

namespace detail {

// Distinct uniform subset of size `count` from the integer range [lo, hi],
// via Robert Floyd's algorithm. Consumes exactly `count` draws.
inline std::vector<std::int64_t> sample_distinct(std::int64_t lo, std::int64_t hi,
                                                 std::int64_t count, SeededRng& rng) {
    std::unordered_set<std::int64_t> chosen;
    chosen.reserve(static_cast<std::size_t>(count) * 2);
    for (std::int64_t j = hi - count + 1; j <= hi; ++j) {
        const std::int64_t t = rng.uniform_int(lo, j);
        if (!chosen.insert(t).second) {
            chosen.insert(j);
        }
    }
    std::vector<std::int64_t> out(chosen.begin(), chosen.end());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

// Chunk lengths: N-1 distinct cut points drawn uniformly from {1..L_c-1},
// sorted, differenced. Uniform over compositions of L_c into N positive parts.
inline std::vector<std::int64_t> sample_chunk_lengths(std::int64_t original_len,
                                                      std::int64_t chunk_count,
                                                      SeededRng& rng) {
    if (chunk_count < 1 || chunk_count > original_len) {
        throw ConfigError("chunk_count must be in [1, original_len]");
    }
    const auto cuts =
        detail::sample_distinct(1, original_len - 1, chunk_count - 1, rng);
    std::vector<std::int64_t> lengths;
    lengths.reserve(static_cast<std::size_t>(chunk_count));
    std::int64_t prev = 0;
    for (std::int64_t c : cuts) {
        lengths.push_back(c - prev);
        prev = c;
    }
    lengths.push_back(original_len - prev);
    return lengths;
}

// Skip biases: u_0 = 0, then u_i ~ U({u_{i-1}, ..., L_t - L_c}). The
// conditioning on u_{i-1} keeps the chunks' position ranges disjoint.
inline std::vector<std::int64_t> sample_skip_biases(std::int64_t chunk_count,
                                                    std::int64_t original_len,
                                                    std::int64_t target_len,
                                                    SeededRng& rng) {
    if (target_len < original_len) {
        throw ConfigError("target_len must be >= original_len");
    }
    const std::int64_t hi = target_len - original_len;
    std::vector<std::int64_t> u(static_cast<std::size_t>(chunk_count), 0);
    for (std::int64_t i = 1; i < chunk_count; ++i) {
        u[static_cast<std::size_t>(i)] =
            rng.uniform_int(u[static_cast<std::size_t>(i - 1)], hi);
    }
    return u;
}

// Content biases per strategy. text_len is L_x, the usable length of the
// source text for this example.
inline std::vector<std::int64_t> sample_content_biases(
    ContentStrategy strategy, std::int64_t chunk_count, std::int64_t original_len,
    std::int64_t text_len, std::span<const std::int64_t> skip_biases,
    SeededRng& rng) {
    if (text_len < original_len) {
        throw TextTooShortError("text length " + std::to_string(text_len) +
                                " < original_len " + std::to_string(original_len));
    }
    const std::int64_t hi = text_len - original_len;
    std::vector<std::int64_t> v(static_cast<std::size_t>(chunk_count), 0);
    switch (strategy) {
        case ContentStrategy::zero_bias:
            break;
        case ContentStrategy::equal_to_skip_bias: {
            const std::int64_t u_last = skip_biases.empty() ? 0 : skip_biases.back();
            if (u_last > hi) {
                throw TextTooShortError(
                    "equal-to-skip-bias needs text length >= original_len + " +
                    std::to_string(u_last) + ", got " + std::to_string(text_len));
            }
            v.assign(skip_biases.begin(), skip_biases.end());
            break;
        }
        case ContentStrategy::uniform_bias:
            for (std::int64_t i = 1; i < chunk_count; ++i) {
                v[static_cast<std::size_t>(i)] =
                    rng.uniform_int(v[static_cast<std::size_t>(i - 1)], hi);
            }
            break;
    }
    return v;
}

// Evaluates a layout into index arrays: chunk i occupies positions
// {u_i+st_i, ..., u_i+st_i+l_i-1} and reads source tokens
// {v_i+st_i, ..., v_i+st_i+l_i-1}.
inline PositionPlan plan_from_chunk_layout(ChunkLayout layout) {
    PositionPlan plan;
    plan.kind = PlanKind::pose;
    for (std::size_t i = 0; i < layout.lengths.size(); ++i) {
        const std::int64_t pos0 = layout.skip_biases[i] + layout.starts[i];
        const std::int64_t src0 = layout.content_biases[i] + layout.starts[i];
        for (std::int64_t j = 0; j < layout.lengths[i]; ++j) {
            plan.position_index.push_back(pos0 + j);
            plan.content_index.push_back(src0 + j);
        }
    }
    plan.layout = std::move(layout);
    return plan;
}

// Positional skip-wise plan. The layout is re-sampled on every call.
inline PositionPlan build_pose_plan(const ExtensionConfig& config,
                                    std::int64_t text_len, SeededRng& rng) {
    config.validate();
    ChunkLayout layout;
    layout.lengths = sample_chunk_lengths(config.original_len, config.chunk_count, rng);
    layout.starts.resize(layout.lengths.size());
    std::int64_t acc = 0;
    for (std::size_t i = 0; i < layout.lengths.size(); ++i) {
        layout.starts[i] = acc;
        acc += layout.lengths[i];
    }
    layout.skip_biases = sample_skip_biases(config.chunk_count, config.original_len,
                                            config.target_len, rng);
    layout.content_biases =
        sample_content_biases(config.content_strategy, config.chunk_count,
                              config.original_len, text_len, layout.skip_biases, rng);
    return plan_from_chunk_layout(std::move(layout));
}

// Baseline: position indices are a sorted uniform sample of L_c distinct
// values from {0..L_t-1}; content is one contiguous span at a uniform offset.
inline PositionPlan build_randpos_plan(const ExtensionConfig& config,
                                       std::int64_t text_len, SeededRng& rng) {
    config.validate();
    if (text_len < config.original_len) {
        throw TextTooShortError("text length " + std::to_string(text_len) +
                                " < original_len " +
                                std::to_string(config.original_len));
    }
    PositionPlan plan;
    plan.kind = PlanKind::randpos;
    plan.position_index = detail::sample_distinct(0, config.target_len - 1,
                                                  config.original_len, rng);
    const std::int64_t offset =
        rng.uniform_int(0, text_len - config.original_len);
    plan.content_index.reserve(static_cast<std::size_t>(config.original_len));
    for (std::int64_t j = 0; j < config.original_len; ++j) {
        plan.content_index.push_back(offset + j);
    }
    return plan;
}

// Baseline: identity layout of the given length.
inline PositionPlan build_full_plan(std::int64_t len) {
    if (len < 1) {
        throw ConfigError("full plan length must be >= 1");
    }
    PositionPlan plan;
    plan.kind = PlanKind::full;
    plan.position_index.resize(static_cast<std::size_t>(len));
    for (std::int64_t j = 0; j < len; ++j) {
        plan.position_index[static_cast<std::size_t>(j)] = j;
    }
    plan.content_index = plan.position_index;
    return plan;
}

// Closed interval of integers.
struct IndexInterval {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    bool operator==(const IndexInterval&) const = default;
};

// A set of non-negative integers kept as sorted disjoint intervals.
class DistanceSet {
public:
    DistanceSet() = default;

    static DistanceSet from_intervals(std::vector<IndexInterval> intervals) {
        std::sort(intervals.begin(), intervals.end(),
                  [](const IndexInterval& a, const IndexInterval& b) {
                      return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi);
                  });
        DistanceSet out;
        for (const auto& iv : intervals) {
            if (!out.intervals_.empty() && iv.lo <= out.intervals_.back().hi + 1) {
                out.intervals_.back().hi = std::max(out.intervals_.back().hi, iv.hi);
            } else {
                out.intervals_.push_back(iv);
            }
        }
        return out;
    }

    const std::vector<IndexInterval>& intervals() const { return intervals_; }

    bool contains(std::int64_t d) const {
        auto it = std::upper_bound(
            intervals_.begin(), intervals_.end(), d,
            [](std::int64_t x, const IndexInterval& iv) { return x < iv.lo; });
        if (it == intervals_.begin()) return false;
        --it;
        return d <= it->hi;
    }

    std::int64_t count() const {
        std::int64_t n = 0;
        for (const auto& iv : intervals_) n += iv.hi - iv.lo + 1;
        return n;
    }

    std::vector<std::int64_t> values() const {
        std::vector<std::int64_t> out;
        out.reserve(static_cast<std::size_t>(count()));
        for (const auto& iv : intervals_) {
            for (std::int64_t d = iv.lo; d <= iv.hi; ++d) out.push_back(d);
        }
        return out;
    }

    bool operator==(const DistanceSet&) const = default;

private:
    std::vector<IndexInterval> intervals_;
};

// Maximal runs of consecutive values in a strictly increasing index array.
inline std::vector<IndexInterval> index_runs(std::span<const std::int64_t> index) {
    std::vector<IndexInterval> runs;
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (!runs.empty() && index[i] == runs.back().hi + 1) {
            runs.back().hi = index[i];
        } else {
            runs.push_back({index[i], index[i]});
        }
    }
    return runs;
}

// All relative distances p - q over ordered pairs p >= q of plan positions.
// Positions form at most N consecutive runs, and a pair of runs contributes
// one contiguous distance interval, so the set is built run-pair-wise.
inline DistanceSet covered_distances(const PositionPlan& plan) {
    const auto runs = index_runs(plan.position_index);
    std::vector<IndexInterval> intervals;
    intervals.reserve(runs.size() * (runs.size() + 1) / 2);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        intervals.push_back({0, runs[i].hi - runs[i].lo});
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            intervals.push_back({runs[j].lo - runs[i].hi, runs[j].hi - runs[i].lo});
        }
    }
    return DistanceSet::from_intervals(std::move(intervals));
}

}  // namespace poselab
