#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "poselab/errors.hpp"
#include "poselab/io.hpp"
#include "poselab/rng.hpp"

namespace poselab {

enum class CorpusProvenance { synthetic, byte_level, pre_tokenized };

struct TokenCorpus {
    std::vector<std::vector<std::int32_t>> documents;
    std::int64_t vocab_size = 0;
    CorpusProvenance provenance = CorpusProvenance::pre_tokenized;
};

enum class CorpusFormat { binary_u16, utf8_text };

inline CorpusFormat corpus_format_from_string(const std::string& s) {
    if (s == "binary-u16") return CorpusFormat::binary_u16;
    if (s == "utf8-text") return CorpusFormat::utf8_text;
    throw ConfigError("unknown corpus format: " + s);
}

// Document separator for the binary-u16 format. Outside any permitted vocab:
// token ids must be < 0xFFFF.
inline constexpr std::uint16_t kDocSeparator = 0xFFFF;

struct CorpusLoadStats {
    std::int64_t dropped_short = 0;
};

// Loads a token corpus. Documents shorter than min_doc_len are dropped and
// counted in stats. If declared_vocab >= 0, any id >= declared_vocab is a
// parse error; otherwise vocab_size is inferred as max id + 1.
inline TokenCorpus load_token_corpus(const std::filesystem::path& path,
                                     CorpusFormat format,
                                     std::int64_t min_doc_len = 1,
                                     std::int64_t declared_vocab = -1,
                                     CorpusLoadStats* stats = nullptr) {
    const auto bytes = read_file_bytes(path);
    TokenCorpus corpus;
    CorpusLoadStats local_stats;

    auto finish_doc = [&](std::vector<std::int32_t>&& doc) {
        if (static_cast<std::int64_t>(doc.size()) >= min_doc_len) {
            corpus.documents.push_back(std::move(doc));
        } else if (!doc.empty()) {
            local_stats.dropped_short += 1;
        }
    };

    if (format == CorpusFormat::utf8_text) {
        corpus.provenance = CorpusProvenance::byte_level;
        corpus.vocab_size = 256;
        std::vector<std::int32_t> doc;
        doc.reserve(bytes.size());
        for (std::uint8_t b : bytes) {
            doc.push_back(static_cast<std::int32_t>(b));
        }
        if (!doc.empty()) finish_doc(std::move(doc));
    } else {
        corpus.provenance = CorpusProvenance::pre_tokenized;
        if (bytes.size() % 2 != 0) {
            throw ParseError("binary-u16 corpus has odd byte count", bytes.size() - 1);
        }
        std::int64_t max_id = -1;
        std::vector<std::int32_t> doc;
        for (std::size_t i = 0; i < bytes.size(); i += 2) {
            const std::uint16_t id = static_cast<std::uint16_t>(
                bytes[i] | (static_cast<std::uint16_t>(bytes[i + 1]) << 8));
            if (id == kDocSeparator) {
                finish_doc(std::move(doc));
                doc = {};
                continue;
            }
            if (declared_vocab >= 0 && static_cast<std::int64_t>(id) >= declared_vocab) {
                throw ParseError("token id " + std::to_string(id) +
                                     " >= vocab_size " + std::to_string(declared_vocab),
                                 i);
            }
            max_id = std::max<std::int64_t>(max_id, id);
            doc.push_back(static_cast<std::int32_t>(id));
        }
        if (!doc.empty()) finish_doc(std::move(doc));
        corpus.vocab_size = declared_vocab >= 0 ? declared_vocab : max_id + 1;
    }

    if (stats) *stats = local_stats;
    return corpus;
}

inline void save_token_corpus(const TokenCorpus& corpus,
                              const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    for (const auto& doc : corpus.documents) {
        for (std::int32_t id : doc) {
            if (id < 0 || id >= static_cast<std::int32_t>(kDocSeparator)) {
                throw DataError("token id " + std::to_string(id) +
                                " not representable in binary-u16");
            }
            bytes.push_back(static_cast<std::uint8_t>(id & 0xFF));
            bytes.push_back(static_cast<std::uint8_t>((id >> 8) & 0xFF));
        }
        bytes.push_back(0xFF);
        bytes.push_back(0xFF);
    }
    atomic_write_file(path, bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// Synthetic corpora (vocab 64)
//
// Token id layout shared by the recall corpus and the passkey harness:
//   0..49   digit tokens; digit value v at block offset j is token 10*j + v,
//           so each of the five slots of a digit block has its own sub-alphabet
//   50      KEY marker, always followed by the document's 5 digit tokens
//   51      QUERY marker, likewise followed by the same 5 digit tokens
//   52..63  filler alphabet
// ---------------------------------------------------------------------------

struct SyntheticVocab {
    static constexpr std::int32_t key_marker = 50;
    static constexpr std::int32_t query_marker = 51;
    static constexpr std::int32_t filler_lo = 52;
    static constexpr std::int32_t filler_hi = 63;
    static constexpr std::int64_t vocab_size = 64;
    static constexpr int passkey_digits = 5;

    // token id of digit value v (0..9) at block offset j (0..4)
    static constexpr std::int32_t digit_token(int offset, int value) {
        return static_cast<std::int32_t>(10 * offset + value);
    }
    static constexpr bool is_digit_token(std::int32_t id) {
        return id >= 0 && id < 10 * passkey_digits;
    }
    static constexpr int digit_value(std::int32_t id) { return id % 10; }
    static constexpr int digit_offset(std::int32_t id) { return id / 10; }
};

enum class SyntheticKind { recall_task, markov_text };

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "recall-task" || s == "recall") return SyntheticKind::recall_task;
    if (s == "markov-text" || s == "markov") return SyntheticKind::markov_text;
    throw ConfigError("unknown synthetic corpus kind: " + s);
}

// Sparse order-2 Markov source over the filler alphabet: each context pair
// has 4 permitted successors with fixed probabilities. The table itself is a
// constant of the generator (fixed internal seed) so that corpora drawn with
// different seeds share one language.
struct MarkovTable {
    static constexpr int n_symbols = SyntheticVocab::filler_hi - SyntheticVocab::filler_lo + 1;
    static constexpr int n_successors = 4;
    // entry [a][b] lists successors of context (a, b) and cumulative probs
    std::vector<std::array<std::int32_t, n_successors>> successors;
    std::vector<std::array<double, n_successors>> cumulative;

    std::size_t context_slot(std::int32_t a, std::int32_t b) const {
        return static_cast<std::size_t>(a - SyntheticVocab::filler_lo) *
                   static_cast<std::size_t>(n_symbols) +
               static_cast<std::size_t>(b - SyntheticVocab::filler_lo);
    }

    std::int32_t sample(std::int32_t a, std::int32_t b, SeededRng& rng) const {
        const auto slot = context_slot(a, b);
        const double u = rng.uniform01();
        const auto& cum = cumulative[slot];
        for (int s = 0; s < n_successors; ++s) {
            if (u < cum[static_cast<std::size_t>(s)]) {
                return successors[slot][static_cast<std::size_t>(s)];
            }
        }
        return successors[slot][n_successors - 1];
    }
};

inline const MarkovTable& default_markov_table() {
    static const MarkovTable table = [] {
        MarkovTable t;
        const std::size_t n_contexts =
            static_cast<std::size_t>(MarkovTable::n_symbols) * MarkovTable::n_symbols;
        t.successors.resize(n_contexts);
        t.cumulative.resize(n_contexts);
        SeededRng rng(0x706F7365u);  // table constant, not the corpus seed
        for (std::size_t c = 0; c < n_contexts; ++c) {
            for (int s = 0; s < MarkovTable::n_successors; ++s) {
                t.successors[c][static_cast<std::size_t>(s)] =
                    static_cast<std::int32_t>(rng.uniform_int(
                        SyntheticVocab::filler_lo, SyntheticVocab::filler_hi));
            }
            std::array<double, MarkovTable::n_successors> w{};
            double total = 0.0;
            for (auto& x : w) {
                x = 0.25 + rng.uniform01();  // keep all successors plausible
                total += x;
            }
            double acc = 0.0;
            for (int s = 0; s < MarkovTable::n_successors; ++s) {
                acc += w[static_cast<std::size_t>(s)] / total;
                t.cumulative[c][static_cast<std::size_t>(s)] = acc;
            }
            t.cumulative[c][MarkovTable::n_successors - 1] = 1.0;
        }
        return t;
    }();
    return table;
}

namespace detail {

// One recall-task document: filler runs interleaved with marker statements.
// Every statement repeats the document's digit block, so any window that
// holds an earlier block and a later marker rewards long-range copying.
// Filler runs vary widely in length, and half of them replay a verbatim span
// of the document's own earlier text: predicting inside a replayed span
// rewards suffix-match-and-copy at arbitrary distances, the same retrieval
// circuit the digit blocks demand.
inline std::vector<std::int32_t> make_recall_document(std::int64_t doc_len,
                                                      SeededRng& rng) {
    std::vector<std::int32_t> doc;
    doc.reserve(static_cast<std::size_t>(doc_len) + 48);
    std::array<std::int32_t, SyntheticVocab::passkey_digits> digits{};
    for (int j = 0; j < SyntheticVocab::passkey_digits; ++j) {
        digits[static_cast<std::size_t>(j)] = SyntheticVocab::digit_token(
            j, static_cast<int>(rng.uniform_int(0, 9)));
    }
    bool first = true;
    bool last_was_key = true;
    while (static_cast<std::int64_t>(doc.size()) < doc_len) {
        const std::int64_t run = rng.uniform_int(0, 9) < 7
                                     ? rng.uniform_int(4, 12)
                                     : rng.uniform_int(13, 52);
        const std::int64_t have = static_cast<std::int64_t>(doc.size());
        if (have > run + 8 && rng.uniform_int(0, 1) == 0) {
            const std::int64_t src = rng.uniform_int(0, have - run - 1);
            for (std::int64_t i = 0; i < run; ++i) {
                std::int32_t tok = doc[static_cast<std::size_t>(src + i)];
                // corrupt a few replayed filler tokens so copying must
                // tolerate imperfect context matches
                if (tok >= SyntheticVocab::filler_lo && rng.uniform_int(0, 11) == 0) {
                    tok = static_cast<std::int32_t>(rng.uniform_int(
                        SyntheticVocab::filler_lo, SyntheticVocab::filler_hi));
                }
                doc.push_back(tok);
            }
            // a replay may cut a statement short; complete the digit block so
            // every marker is still followed by all five digits
            for (int back = 1; back <= SyntheticVocab::passkey_digits; ++back) {
                const auto& tail = doc[doc.size() - static_cast<std::size_t>(back)];
                if (tail == SyntheticVocab::key_marker ||
                    tail == SyntheticVocab::query_marker) {
                    for (int j = back - 1; j < SyntheticVocab::passkey_digits; ++j) {
                        doc.push_back(digits[static_cast<std::size_t>(j)]);
                    }
                    break;
                }
            }
        } else {
            for (std::int64_t i = 0; i < run; ++i) {
                doc.push_back(static_cast<std::int32_t>(rng.uniform_int(
                    SyntheticVocab::filler_lo, SyntheticVocab::filler_hi)));
            }
        }
        // alternating marker types: the block preceding a query statement is
        // a key statement, so retrieval must key on the digits themselves
        // rather than on an exact marker match
        doc.push_back(first ? SyntheticVocab::key_marker
                            : (last_was_key ? SyntheticVocab::query_marker
                                            : SyntheticVocab::key_marker));
        last_was_key = doc.back() == SyntheticVocab::key_marker;
        first = false;
        for (std::int32_t d : digits) doc.push_back(d);
    }
    doc.resize(static_cast<std::size_t>(doc_len));
    return doc;
}

inline std::vector<std::int32_t> make_markov_document(std::int64_t doc_len,
                                                      SeededRng& rng) {
    const MarkovTable& table = default_markov_table();
    std::vector<std::int32_t> doc;
    doc.reserve(static_cast<std::size_t>(doc_len));
    std::int32_t a = static_cast<std::int32_t>(
        rng.uniform_int(SyntheticVocab::filler_lo, SyntheticVocab::filler_hi));
    std::int32_t b = static_cast<std::int32_t>(
        rng.uniform_int(SyntheticVocab::filler_lo, SyntheticVocab::filler_hi));
    doc.push_back(a);
    if (doc_len > 1) doc.push_back(b);
    while (static_cast<std::int64_t>(doc.size()) < doc_len) {
        const std::int32_t c = table.sample(a, b, rng);
        doc.push_back(c);
        a = b;
        b = c;
    }
    return doc;
}

}  // namespace detail

// Deterministic synthetic corpus of num_docs documents of doc_len tokens.
inline TokenCorpus generate_synthetic_corpus(SyntheticKind kind,
                                             std::int64_t num_docs,
                                             std::uint64_t seed,
                                             std::int64_t doc_len = 512) {
    if (num_docs < 1) {
        throw ConfigError("num_docs must be >= 1");
    }
    if (doc_len < 1) {
        throw ConfigError("doc_len must be >= 1");
    }
    TokenCorpus corpus;
    corpus.provenance = CorpusProvenance::synthetic;
    corpus.vocab_size = SyntheticVocab::vocab_size;
    corpus.documents.reserve(static_cast<std::size_t>(num_docs));
    SeededRng rng(seed);
    for (std::int64_t i = 0; i < num_docs; ++i) {
        corpus.documents.push_back(kind == SyntheticKind::recall_task
                                       ? detail::make_recall_document(doc_len, rng)
                                       : detail::make_markov_document(doc_len, rng));
    }
    return corpus;
}

// Concatenates two corpora with the same vocabulary (document order stable).
inline TokenCorpus merge_corpora(TokenCorpus a, const TokenCorpus& b) {
    if (a.vocab_size != b.vocab_size) {
        throw DataError("cannot merge corpora with different vocab sizes");
    }
    a.documents.insert(a.documents.end(), b.documents.begin(), b.documents.end());
    return a;
}

}  // namespace poselab
