#pragma once

// Evaluation harnesses: sliding-window perplexity and passkey retrieval.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "poselab/data.hpp"
#include "poselab/errors.hpp"
#include "poselab/model.hpp"
#include "poselab/rng.hpp"
#include "poselab/rope.hpp"

namespace poselab {

// One evaluation window: the model is fed tokens[start .. ) with positions
// 0..window-1 and scores target tokens first_target..last_target, i.e. the
// trailing `stride` targets (all of them for the first window). Every target
// token in [1, n_tokens-1] is scored exactly once.
struct WindowSegment {
    std::int64_t start = 0;
    std::int64_t first_target = 0;
    std::int64_t last_target = 0;
};

inline std::vector<WindowSegment> sliding_window_segments(std::int64_t n_tokens,
                                                          std::int64_t window,
                                                          std::int64_t stride) {
    if (window > (std::int64_t{1} << 31)) {
        throw ConfigError("evaluation window exceeds the supported position range");
    }
    if (n_tokens < window + 1) {
        throw ConfigError("need at least window+1 tokens");
    }
    if (stride < 1 || stride > window) {
        throw ConfigError("need 1 <= stride <= window");
    }
    std::vector<WindowSegment> segments;
    std::int64_t scored_up_to = 0;  // highest target index scored so far
    for (std::int64_t start = 0;; start += stride) {
        const std::int64_t first = start == 0 ? 1 : start + window - stride + 1;
        const std::int64_t last = std::min(start + window, n_tokens - 1);
        if (first > last) break;
        segments.push_back({start, first, last});
        scored_up_to = last;
        if (last == n_tokens - 1) break;
    }
    (void)scored_up_to;
    return segments;
}

// exp(mean NLL in nats over scored tokens); each window is re-scored with
// full causal context and positions 0..window-1 through the interpolated
// frequencies. Returns the perplexity; n_scored_out reports token count.
inline double sliding_window_perplexity(const ParameterSet& params,
                                        const ModelConfig& cfg,
                                        std::span<const std::int32_t> tokens,
                                        std::int64_t eval_window, std::int64_t stride,
                                        const InterpolationStrategy& strategy,
                                        std::int64_t* n_scored_out = nullptr) {
    const auto segments = sliding_window_segments(
        static_cast<std::int64_t>(tokens.size()), eval_window, stride);
    const RopeParams rope =
        effective_rope(strategy, cfg.base_rope_params(), cfg.train_window);

    ForwardCache cache;
    std::vector<std::int64_t> positions(static_cast<std::size_t>(eval_window));
    for (std::int64_t i = 0; i < eval_window; ++i) {
        positions[static_cast<std::size_t>(i)] = i;
    }
    double total_nll = 0.0;
    std::int64_t n_scored = 0;
    for (const auto& seg : segments) {
        // the final window may be clipped: inputs never include the very
        // last token, whose only use is as a target
        const std::int64_t input_len =
            std::min(eval_window, static_cast<std::int64_t>(tokens.size()) - 1 - seg.start);
        const auto input = tokens.subspan(static_cast<std::size_t>(seg.start),
                                          static_cast<std::size_t>(input_len));
        const auto pos = std::span<const std::int64_t>(positions.data(),
                                                       static_cast<std::size_t>(input_len));
        forward(cfg, rope, params, input, pos, cache);
        for (std::int64_t target = seg.first_target; target <= seg.last_target;
             ++target) {
            const std::int64_t slot = target - seg.start - 1;
            const double* row = cache.logits.data() + slot * cfg.vocab_size;
            double max_l = row[0];
            for (std::int64_t v = 1; v < cfg.vocab_size; ++v) {
                max_l = std::max(max_l, row[v]);
            }
            double denom = 0.0;
            for (std::int64_t v = 0; v < cfg.vocab_size; ++v) {
                denom += std::exp(row[v] - max_l);
            }
            total_nll += max_l + std::log(denom) -
                         row[tokens[static_cast<std::size_t>(target)]];
            ++n_scored;
        }
    }
    if (n_scored_out) *n_scored_out = n_scored;
    return std::exp(total_nll / static_cast<double>(n_scored));
}

// ---------------------------------------------------------------------------
// Passkey retrieval
// ---------------------------------------------------------------------------

// Synthetic long prompt hiding a 5-digit passkey. The prompt mirrors the
// recall corpus: filler, a KEY statement carrying the digits at a uniformly
// random offset, more filler, and a trailing QUERY marker. total_len counts
// the prompt plus the 5 answer slots, so decoded positions stay below
// total_len.
struct PasskeyExample {
    std::vector<std::int32_t> prompt_tokens;
    std::string passkey_digits;
    std::int64_t insert_position = 0;  // index of the KEY marker
    std::vector<std::int32_t> answer_tokens;
};

inline PasskeyExample make_passkey_example(std::int64_t total_len, SeededRng& rng) {
    constexpr int n_digits = SyntheticVocab::passkey_digits;
    const std::int64_t prompt_len = total_len - n_digits;
    // prompt = [filler]* KEY d0..d4 [filler]* QUERY
    const std::int64_t statement_len = 1 + n_digits;
    const std::int64_t filler_total = prompt_len - statement_len - 1;
    if (filler_total < 1) {
        throw ConfigError("passkey total_len too small: " + std::to_string(total_len));
    }

    PasskeyExample ex;
    ex.answer_tokens.resize(n_digits);
    for (int j = 0; j < n_digits; ++j) {
        const int value = static_cast<int>(rng.uniform_int(0, 9));
        ex.answer_tokens[static_cast<std::size_t>(j)] =
            SyntheticVocab::digit_token(j, value);
        ex.passkey_digits += static_cast<char>('0' + value);
    }
    ex.insert_position = rng.uniform_int(0, filler_total);

    auto filler = [&rng] {
        return static_cast<std::int32_t>(rng.uniform_int(SyntheticVocab::filler_lo,
                                                         SyntheticVocab::filler_hi));
    };
    ex.prompt_tokens.reserve(static_cast<std::size_t>(prompt_len));
    for (std::int64_t i = 0; i < ex.insert_position; ++i) {
        ex.prompt_tokens.push_back(filler());
    }
    ex.prompt_tokens.push_back(SyntheticVocab::key_marker);
    for (std::int32_t d : ex.answer_tokens) ex.prompt_tokens.push_back(d);
    for (std::int64_t i = ex.insert_position; i < filler_total; ++i) {
        ex.prompt_tokens.push_back(filler());
    }
    ex.prompt_tokens.push_back(SyntheticVocab::query_marker);
    return ex;
}

// Greedy decoding: argmax per step, ties broken by the lowest token id.
// No KV cache; each step re-runs the forward pass on prompt + decoded.
inline std::vector<std::int32_t> greedy_decode(const ParameterSet& params,
                                               const ModelConfig& cfg,
                                               const InterpolationStrategy& strategy,
                                               std::span<const std::int32_t> prompt,
                                               std::int64_t n_steps) {
    const RopeParams rope =
        effective_rope(strategy, cfg.base_rope_params(), cfg.train_window);
    std::vector<std::int32_t> seq(prompt.begin(), prompt.end());
    std::vector<std::int64_t> positions;
    ForwardCache cache;
    std::vector<std::int32_t> decoded;
    for (std::int64_t s = 0; s < n_steps; ++s) {
        positions.resize(seq.size());
        for (std::size_t i = 0; i < seq.size(); ++i) {
            positions[i] = static_cast<std::int64_t>(i);
        }
        forward(cfg, rope, params, seq, positions, cache);
        const double* row =
            cache.logits.data() + (static_cast<std::int64_t>(seq.size()) - 1) * cfg.vocab_size;
        std::int32_t best = 0;
        for (std::int64_t v = 1; v < cfg.vocab_size; ++v) {
            if (row[v] > row[best]) best = static_cast<std::int32_t>(v);
        }
        decoded.push_back(best);
        seq.push_back(best);
    }
    return decoded;
}

// Fraction of examples whose full digit sequence the decoder reproduces.
// The decoder is injectable so oracles/test doubles can stand in for a model.
using PasskeyDecoder =
    std::function<std::vector<std::int32_t>(std::span<const std::int32_t> prompt,
                                            std::int64_t n_answer_tokens)>;

inline double passkey_accuracy(const PasskeyDecoder& decoder,
                               std::span<const PasskeyExample> examples) {
    std::int64_t hits = 0;
    for (const auto& ex : examples) {
        const auto decoded = decoder(
            ex.prompt_tokens, static_cast<std::int64_t>(ex.answer_tokens.size()));
        if (decoded == ex.answer_tokens) ++hits;
    }
    return examples.empty() ? 0.0
                            : static_cast<double>(hits) /
                                  static_cast<double>(examples.size());
}

struct PasskeyPoint {
    std::int64_t length = 0;
    double accuracy = 0.0;
};

// Accuracy per prompt length over trials_per_length fresh examples each.
inline std::vector<PasskeyPoint> passkey_sweep(const ParameterSet& params,
                                               const ModelConfig& cfg,
                                               const InterpolationStrategy& strategy,
                                               std::span<const std::int64_t> lengths,
                                               std::int64_t trials_per_length,
                                               SeededRng& rng) {
    if (trials_per_length < 1) {
        throw ConfigError("trials_per_length must be >= 1");
    }
    PasskeyDecoder model_decoder = [&](std::span<const std::int32_t> prompt,
                                       std::int64_t n) {
        return greedy_decode(params, cfg, strategy, prompt, n);
    };
    std::vector<PasskeyPoint> out;
    for (std::int64_t len : lengths) {
        std::vector<PasskeyExample> examples;
        examples.reserve(static_cast<std::size_t>(trials_per_length));
        for (std::int64_t i = 0; i < trials_per_length; ++i) {
            examples.push_back(make_passkey_example(len, rng));
        }
        out.push_back({len, passkey_accuracy(model_decoder, examples)});
    }
    return out;
}

}  // namespace poselab
