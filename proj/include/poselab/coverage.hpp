#pragma once

// Monte Carlo estimate of the probability that a single sampled training
// example covers each relative distance d in [0, L_t).

#include <cstdint>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "poselab/io.hpp"
#include "poselab/position_plan.hpp"
#include "poselab/rng.hpp"

namespace poselab {

namespace detail {

// Accumulates covered-distance counts for one worker's range of trials.
// Content biases do not affect distances, so only lengths and skip biases
// are sampled. Each trial draws from its own child stream, which makes the
// estimate independent of the worker partition.
inline void coverage_worker(const ExtensionConfig& config, const SeededRng& base,
                            std::int64_t trial_begin, std::int64_t trial_end,
                            std::vector<std::int64_t>& counts) {
    const std::int64_t target = config.target_len;
    std::vector<std::int32_t> delta(static_cast<std::size_t>(target) + 1, 0);
    std::vector<IndexInterval> runs;
    for (std::int64_t trial = trial_begin; trial < trial_end; ++trial) {
        SeededRng rng = base.child(static_cast<std::uint64_t>(trial));
        const auto lengths =
            sample_chunk_lengths(config.original_len, config.chunk_count, rng);
        const auto skips = sample_skip_biases(config.chunk_count, config.original_len,
                                              config.target_len, rng);
        runs.clear();
        std::int64_t start = 0;
        for (std::size_t i = 0; i < lengths.size(); ++i) {
            const std::int64_t lo = skips[i] + start;
            const std::int64_t hi = lo + lengths[i] - 1;
            // merge chunks that happen to be adjacent in position space
            if (!runs.empty() && lo == runs.back().hi + 1) {
                runs.back().hi = hi;
            } else {
                runs.push_back({lo, hi});
            }
            start += lengths[i];
        }
        for (std::size_t i = 0; i < runs.size(); ++i) {
            delta[0] += 1;
            delta[static_cast<std::size_t>(runs[i].hi - runs[i].lo) + 1] -= 1;
            for (std::size_t j = i + 1; j < runs.size(); ++j) {
                delta[static_cast<std::size_t>(runs[j].lo - runs[i].hi)] += 1;
                delta[static_cast<std::size_t>(runs[j].hi - runs[i].lo) + 1] -= 1;
            }
        }
        std::int32_t active = 0;
        for (std::int64_t d = 0; d < target; ++d) {
            active += delta[static_cast<std::size_t>(d)];
            if (active > 0) counts[static_cast<std::size_t>(d)] += 1;
            delta[static_cast<std::size_t>(d)] = 0;
        }
        delta[static_cast<std::size_t>(target)] = 0;
    }
}

}  // namespace detail

// Entry d = fraction of sampled examples whose covered distances include d.
// The unextended single-chunk case is exact by definition and skips sampling.
inline std::vector<double> coverage_probability(const ExtensionConfig& config,
                                                std::int64_t trials,
                                                const SeededRng& rng,
                                                int threads = 1) {
    config.validate();
    if (trials < 1) {
        throw ConfigError("trials must be >= 1");
    }
    std::vector<double> prob(static_cast<std::size_t>(config.target_len), 0.0);
    if (config.chunk_count == 1) {
        for (std::int64_t d = 0; d < config.original_len; ++d) {
            prob[static_cast<std::size_t>(d)] = 1.0;
        }
        return prob;
    }

    const int workers = std::max(1, threads);
    std::vector<std::vector<std::int64_t>> counts(
        static_cast<std::size_t>(workers),
        std::vector<std::int64_t>(static_cast<std::size_t>(config.target_len), 0));
    if (workers == 1) {
        detail::coverage_worker(config, rng, 0, trials, counts[0]);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            const std::int64_t begin = trials * w / workers;
            const std::int64_t end = trials * (w + 1) / workers;
            pool.emplace_back([&, w, begin, end] {
                detail::coverage_worker(config, rng, begin, end,
                                        counts[static_cast<std::size_t>(w)]);
            });
        }
        for (auto& t : pool) t.join();
    }

    for (std::int64_t d = 0; d < config.target_len; ++d) {
        std::int64_t total = 0;
        for (int w = 0; w < workers; ++w) {
            total += counts[static_cast<std::size_t>(w)][static_cast<std::size_t>(d)];
        }
        prob[static_cast<std::size_t>(d)] =
            static_cast<double>(total) / static_cast<double>(trials);
    }
    return prob;
}

inline std::string coverage_csv(const std::vector<double>& prob) {
    std::string out = "relative_distance,probability\n";
    for (std::size_t d = 0; d < prob.size(); ++d) {
        out += std::to_string(d);
        out += ',';
        out += format_double(prob[d]);
        out += '\n';
    }
    return out;
}

// Writes the two-column CSV (relative_distance, probability) atomically.
inline void coverage_report(const ExtensionConfig& config, std::int64_t trials,
                            const SeededRng& rng,
                            const std::filesystem::path& out_path,
                            int threads = 1) {
    atomic_write_file(out_path,
                      coverage_csv(coverage_probability(config, trials, rng, threads)));
}

inline std::vector<double> load_coverage_csv(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    std::vector<double> prob;
    std::size_t i = 0;
    auto next_line = [&]() {
        std::string line;
        while (i < bytes.size() && bytes[i] != '\n') {
            line += static_cast<char>(bytes[i++]);
        }
        if (i < bytes.size()) ++i;
        return line;
    };
    const std::string header = next_line();
    if (header != "relative_distance,probability") {
        throw ParseError("bad coverage CSV header", 0);
    }
    while (i < bytes.size()) {
        const std::size_t line_start = i;
        const std::string line = next_line();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw ParseError("missing comma in coverage CSV row", line_start);
        }
        prob.push_back(std::stod(line.substr(comma + 1)));
    }
    return prob;
}

}  // namespace poselab
