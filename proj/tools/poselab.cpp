// poselab: context-window extension laboratory for a tiny RoPE transformer.
//
// Subcommands: plan, coverage, train, eval-ppl, passkey, rope-check,
// gen-corpus. Every file output is written atomically and accompanied by a
// JSON run manifest recording the resolved configuration and master seed.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "poselab/checkpoint.hpp"
#include "poselab/coverage.hpp"
#include "poselab/data.hpp"
#include "poselab/evaluation.hpp"
#include "poselab/io.hpp"
#include "poselab/model.hpp"
#include "poselab/position_plan.hpp"
#include "poselab/rope.hpp"
#include "poselab/rope_check.hpp"

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Master seed precedence: explicit flag > config file value > POSELAB_SEED
// environment variable > 0.
std::uint64_t env_seed_or(std::uint64_t fallback) {
    if (const char* env = std::getenv("POSELAB_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw poselab::ConfigError("POSELAB_SEED is not an integer");
        }
    }
    return fallback;
}

void write_manifest(const std::filesystem::path& beside, const std::string& command,
                    std::uint64_t seed, int threads, const json& config,
                    const std::vector<std::string>& outputs) {
    json manifest{
        {"schema_version", 1},
        {"command", command},
        {"seed", seed},
        {"threads", threads},
        {"config", config},
        {"outputs", outputs},
    };
    poselab::atomic_write_file(beside, manifest.dump(2) + "\n");
}

poselab::ContentStrategy content_strategy_from_string(const std::string& s) {
    if (s == "uniform-bias") return poselab::ContentStrategy::uniform_bias;
    if (s == "zero-bias") return poselab::ContentStrategy::zero_bias;
    if (s == "equal-to-skip-bias") return poselab::ContentStrategy::equal_to_skip_bias;
    throw poselab::ConfigError("unknown content strategy: " + s);
}

poselab::PlanKind plan_kind_from_string(const std::string& s) {
    if (s == "pose") return poselab::PlanKind::pose;
    if (s == "randpos") return poselab::PlanKind::randpos;
    if (s == "full") return poselab::PlanKind::full;
    throw poselab::ConfigError("unknown plan kind: " + s);
}

// --- plan ------------------------------------------------------------------

struct PlanArgs {
    std::string kind = "pose";
    std::int64_t original_len = 2048;
    std::int64_t target_len = 16384;
    std::int64_t chunks = 2;
    std::string content = "uniform-bias";
    std::int64_t text_len = -1;  // default: target_len
    std::int64_t count = 1;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
};

int run_plan(const PlanArgs& args) {
    const std::uint64_t seed = args.seed_given ? args.seed : env_seed_or(0);
    poselab::ExtensionConfig cfg;
    cfg.original_len = args.original_len;
    cfg.target_len = args.target_len;
    cfg.chunk_count = args.chunks;
    cfg.content_strategy = content_strategy_from_string(args.content);
    cfg.validate();
    const std::int64_t text_len = args.text_len >= 0 ? args.text_len : args.target_len;
    const poselab::PlanKind kind = plan_kind_from_string(args.kind);

    poselab::SeededRng rng(seed);
    std::string lines;
    for (std::int64_t i = 0; i < args.count; ++i) {
        poselab::PositionPlan plan;
        switch (kind) {
            case poselab::PlanKind::pose:
                plan = poselab::build_pose_plan(cfg, text_len, rng);
                break;
            case poselab::PlanKind::randpos:
                plan = poselab::build_randpos_plan(cfg, text_len, rng);
                break;
            case poselab::PlanKind::full:
                plan = poselab::build_full_plan(args.target_len);
                break;
        }
        ordered_json record;
        record["kind"] = poselab::to_string(plan.kind);
        if (plan.layout) {
            record["lengths"] = plan.layout->lengths;
            record["skip_biases"] = plan.layout->skip_biases;
            record["content_biases"] = plan.layout->content_biases;
        }
        record["position_index"] = plan.position_index;
        record["content_index"] = plan.content_index;
        lines += record.dump();
        lines += '\n';
    }
    if (args.out.empty()) {
        std::cout << lines;
    } else {
        poselab::atomic_write_file(args.out, lines);
        write_manifest(args.out + ".manifest.json", "plan", seed, 1,
                       json{{"kind", args.kind},
                            {"original_len", args.original_len},
                            {"target_len", args.target_len},
                            {"chunks", args.chunks},
                            {"content", args.content},
                            {"text_len", text_len},
                            {"count", args.count}},
                       {args.out});
    }
    return 0;
}

// --- coverage ----------------------------------------------------------------

struct CoverageArgs {
    std::int64_t original_len = 2048;
    std::int64_t target_len = 16384;
    std::int64_t chunks = 2;
    std::int64_t trials = 10000;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 1;
    std::string out;
};

int run_coverage(const CoverageArgs& args) {
    const std::uint64_t seed = args.seed_given ? args.seed : env_seed_or(0);
    poselab::ExtensionConfig cfg;
    cfg.original_len = args.original_len;
    cfg.target_len = args.target_len;
    cfg.chunk_count = args.chunks;
    cfg.validate();
    poselab::SeededRng rng(seed);
    poselab::coverage_report(cfg, args.trials, rng, args.out, args.threads);
    write_manifest(args.out + ".manifest.json", "coverage", seed, args.threads,
                   json{{"original_len", args.original_len},
                        {"target_len", args.target_len},
                        {"chunks", args.chunks},
                        {"trials", args.trials}},
                   {args.out});
    return 0;
}

// --- gen-corpus ---------------------------------------------------------------

struct GenCorpusArgs {
    std::string kind = "recall";
    std::int64_t docs = 256;
    std::int64_t doc_len = 512;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
};

int run_gen_corpus(const GenCorpusArgs& args) {
    const std::uint64_t seed = args.seed_given ? args.seed : env_seed_or(0);
    const auto corpus = poselab::generate_synthetic_corpus(
        poselab::synthetic_kind_from_string(args.kind), args.docs, seed, args.doc_len);
    poselab::save_token_corpus(corpus, args.out);
    write_manifest(args.out + ".manifest.json", "gen-corpus", seed, 1,
                   json{{"kind", args.kind},
                        {"docs", args.docs},
                        {"doc_len", args.doc_len},
                        {"vocab_size", corpus.vocab_size}},
                   {args.out});
    return 0;
}

// --- train ----------------------------------------------------------------

// Navigates a dotted path into the config JSON, reporting the path on error.
template <typename T>
T config_field(const json& root, const std::string& path, std::optional<T> fallback = {}) {
    const json* node = &root;
    std::size_t begin = 0;
    while (true) {
        const auto dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot - begin);
        const auto it = node->find(key);
        if (it == node->end()) {
            if (fallback) return *fallback;
            throw poselab::ConfigError("config validation failed at " + path +
                                       ": missing field");
        }
        node = &*it;
        if (dot == std::string::npos) break;
        begin = dot + 1;
    }
    try {
        return node->get<T>();
    } catch (const json::exception&) {
        throw poselab::ConfigError("config validation failed at " + path +
                                   ": wrong type");
    }
}

struct TrainArgs {
    std::string config_path;
    std::int64_t steps = -1;       // -1: take from config
    std::int64_t threads = -1;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out_dir;
    std::string plan_kind;
};

poselab::TokenCorpus load_train_corpus(const json& cfg, std::int64_t model_vocab,
                                       std::int64_t min_doc_len) {
    const auto source = config_field<std::string>(cfg, "data.source");
    const auto docs = config_field<std::int64_t>(cfg, "data.docs", {256});
    const auto doc_len = config_field<std::int64_t>(cfg, "data.doc_len", {512});
    const auto data_seed =
        static_cast<std::uint64_t>(config_field<std::int64_t>(cfg, "data.seed", {1}));
    if (source == "recall") {
        return poselab::generate_synthetic_corpus(poselab::SyntheticKind::recall_task,
                                                  docs, data_seed, doc_len);
    }
    if (source == "markov") {
        return poselab::generate_synthetic_corpus(poselab::SyntheticKind::markov_text,
                                                  docs, data_seed, doc_len);
    }
    if (source == "mixed") {
        const std::int64_t recall_docs = docs / 2;
        const std::int64_t markov_docs = docs - recall_docs;
        return poselab::merge_corpora(
            poselab::generate_synthetic_corpus(poselab::SyntheticKind::recall_task,
                                               recall_docs, data_seed, doc_len),
            poselab::generate_synthetic_corpus(poselab::SyntheticKind::markov_text,
                                               markov_docs, data_seed + 1, doc_len));
    }
    if (source == "file") {
        const auto path = config_field<std::string>(cfg, "data.path");
        const auto format = poselab::corpus_format_from_string(
            config_field<std::string>(cfg, "data.format", {std::string("binary-u16")}));
        poselab::CorpusLoadStats stats;
        auto corpus =
            poselab::load_token_corpus(path, format, min_doc_len, model_vocab, &stats);
        if (stats.dropped_short > 0) {
            std::cerr << "warning: dropped " << stats.dropped_short
                      << " documents shorter than " << min_doc_len << " tokens\n";
        }
        return corpus;
    }
    throw poselab::ConfigError("config validation failed at data.source: must be "
                               "recall|markov|mixed|file");
}

int run_train(const TrainArgs& args) {
    json cfg;
    try {
        const auto bytes = poselab::read_file_bytes(args.config_path);
        cfg = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw poselab::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    const auto schema = config_field<std::int64_t>(cfg, "schema_version");
    if (schema != 1) {
        throw poselab::ConfigError("config validation failed at schema_version: "
                                   "unsupported version " + std::to_string(schema));
    }

    poselab::ModelConfig model;
    model.vocab_size = config_field<std::int64_t>(cfg, "model.vocab_size");
    model.n_layers = config_field<std::int64_t>(cfg, "model.n_layers");
    model.d_model = config_field<std::int64_t>(cfg, "model.d_model");
    model.n_heads = config_field<std::int64_t>(cfg, "model.n_heads");
    model.ffn_mult = config_field<std::int64_t>(cfg, "model.ffn_mult", {4});
    model.rope_base = config_field<double>(cfg, "model.rope_base", {10000.0});
    model.rms_eps = config_field<double>(cfg, "model.rms_eps", {1e-5});
    model.interpolation = poselab::interpolation_from_string(
        config_field<std::string>(cfg, "model.interpolation", {std::string("none")}));
    model.yarn_ramp_low = config_field<double>(cfg, "model.yarn_ramp_low", {1.0});
    model.yarn_ramp_high = config_field<double>(cfg, "model.yarn_ramp_high", {32.0});
    model.train_window = config_field<std::int64_t>(cfg, "model.train_window");
    model.target_window = config_field<std::int64_t>(cfg, "model.target_window");
    try {
        model.validate();
    } catch (const poselab::ConfigError& e) {
        throw poselab::ConfigError(std::string("config validation failed at model: ") +
                                   e.what());
    }

    poselab::TrainConfig train_cfg;
    train_cfg.steps = args.steps >= 0
                          ? args.steps
                          : config_field<std::int64_t>(cfg, "train.steps", {2000});
    train_cfg.batch_size = config_field<std::int64_t>(cfg, "train.batch_size", {32});
    train_cfg.lr = config_field<double>(cfg, "train.lr", {3e-4});
    train_cfg.warmup_steps = config_field<std::int64_t>(cfg, "train.warmup_steps", {10});
    train_cfg.beta1 = config_field<double>(cfg, "train.beta1", {0.9});
    train_cfg.beta2 = config_field<double>(cfg, "train.beta2", {0.999});
    train_cfg.adam_eps = config_field<double>(cfg, "train.adam_eps", {1e-8});
    train_cfg.weight_decay = config_field<double>(cfg, "train.weight_decay", {0.0});
    train_cfg.init_std = config_field<double>(cfg, "train.init_std", {0.08});
    train_cfg.chunk_count = config_field<std::int64_t>(cfg, "train.chunks", {2});
    train_cfg.content_strategy = content_strategy_from_string(config_field<std::string>(
        cfg, "train.content_strategy", {std::string("uniform-bias")}));

    const std::uint64_t seed =
        args.seed_given
            ? args.seed
            : env_seed_or(static_cast<std::uint64_t>(
                  config_field<std::int64_t>(cfg, "seed", {0})));
    train_cfg.seed = seed;
    train_cfg.threads = static_cast<int>(
        args.threads >= 0 ? args.threads
                          : config_field<std::int64_t>(cfg, "threads", {1}));

    const auto plan_kind = plan_kind_from_string(
        !args.plan_kind.empty()
            ? args.plan_kind
            : config_field<std::string>(cfg, "plan_kind", {std::string("pose")}));

    const std::string out_dir =
        !args.out_dir.empty()
            ? args.out_dir
            : config_field<std::string>(cfg, "out_dir", {std::string("out")});

    const std::int64_t plan_len = plan_kind == poselab::PlanKind::full
                                      ? model.target_window
                                      : model.train_window;
    const auto corpus = load_train_corpus(cfg, model.vocab_size, plan_len + 1);
    const auto result = poselab::train(model, train_cfg, corpus, plan_kind);

    std::filesystem::create_directories(out_dir);
    const auto ckpt_path = std::filesystem::path(out_dir) / "ckpt.bin";
    const auto loss_path = std::filesystem::path(out_dir) / "loss.csv";
    poselab::save_checkpoint(ckpt_path, model, result.params);

    std::string loss_csv = "step,loss,lr\n";
    poselab::AdamConfig sched;
    sched.lr_base = train_cfg.lr;
    sched.warmup_steps = train_cfg.warmup_steps;
    sched.total_steps = train_cfg.steps;
    for (std::size_t s = 0; s < result.loss_trace.size(); ++s) {
        loss_csv += std::to_string(s);
        loss_csv += ',';
        loss_csv += poselab::format_double(result.loss_trace[s]);
        loss_csv += ',';
        loss_csv += poselab::format_double(
            poselab::lr_at(sched, static_cast<std::int64_t>(s)));
        loss_csv += '\n';
    }
    poselab::atomic_write_file(loss_path, loss_csv);

    json resolved = cfg;
    resolved["seed"] = seed;
    resolved["threads"] = train_cfg.threads;
    resolved["plan_kind"] = poselab::to_string(plan_kind);
    resolved["out_dir"] = out_dir;
    resolved["train"]["steps"] = train_cfg.steps;
    write_manifest(std::filesystem::path(out_dir) / "manifest.json", "train", seed,
                   train_cfg.threads, resolved,
                   {ckpt_path.string(), loss_path.string()});

    if (!result.loss_trace.empty()) {
        std::cout << "final loss " << result.loss_trace.back() << " after "
                  << result.loss_trace.size() << " steps; checkpoint at "
                  << ckpt_path.string() << "\n";
    }
    return 0;
}

// --- eval-ppl ----------------------------------------------------------------

struct EvalPplArgs {
    std::string ckpt;
    std::string tokens_file;
    std::string format = "binary-u16";
    std::int64_t window = 256;
    std::int64_t stride = 128;
    std::string strategy;  // empty: use checkpoint's
    std::string out;
};

int run_eval_ppl(const EvalPplArgs& args) {
    const auto ckpt = poselab::load_checkpoint(args.ckpt);
    const auto corpus = poselab::load_token_corpus(
        args.tokens_file, poselab::corpus_format_from_string(args.format), 1,
        ckpt.config.vocab_size);
    std::vector<std::int32_t> tokens;
    for (const auto& doc : corpus.documents) {
        tokens.insert(tokens.end(), doc.begin(), doc.end());
    }

    poselab::InterpolationStrategy strategy = ckpt.config.strategy();
    if (!args.strategy.empty()) {
        strategy.kind = poselab::interpolation_from_string(args.strategy);
    }

    std::int64_t n_scored = 0;
    const double ppl = poselab::sliding_window_perplexity(
        ckpt.params, ckpt.config, tokens, args.window, args.stride, strategy,
        &n_scored);

    std::string csv = "window,stride,strategy,tokens_scored,perplexity\n";
    csv += std::to_string(args.window) + "," + std::to_string(args.stride) + "," +
           poselab::to_string(strategy.kind) + "," + std::to_string(n_scored) + "," +
           poselab::format_double(ppl) + "\n";
    std::cout << csv;
    if (!args.out.empty()) {
        poselab::atomic_write_file(args.out, csv);
        write_manifest(args.out + ".manifest.json", "eval-ppl", 0, 1,
                       json{{"ckpt", args.ckpt},
                            {"tokens_file", args.tokens_file},
                            {"window", args.window},
                            {"stride", args.stride},
                            {"strategy", poselab::to_string(strategy.kind)}},
                       {args.out});
    }
    return 0;
}

// --- passkey -----------------------------------------------------------------

struct PasskeyArgs {
    std::string ckpt;
    std::string lengths = "64,128,192,256";
    std::int64_t trials = 50;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string strategy;
    std::string out;
};

int run_passkey(const PasskeyArgs& args) {
    const std::uint64_t seed = args.seed_given ? args.seed : env_seed_or(0);
    const auto ckpt = poselab::load_checkpoint(args.ckpt);
    poselab::InterpolationStrategy strategy = ckpt.config.strategy();
    if (!args.strategy.empty()) {
        strategy.kind = poselab::interpolation_from_string(args.strategy);
    }

    std::vector<std::int64_t> lengths;
    std::size_t begin = 0;
    while (begin <= args.lengths.size()) {
        const auto comma = args.lengths.find(',', begin);
        const std::string part = args.lengths.substr(begin, comma - begin);
        if (!part.empty()) {
            try {
                lengths.push_back(std::stoll(part));
            } catch (...) {
                throw poselab::ConfigError("bad --lengths entry: " + part);
            }
        }
        if (comma == std::string::npos) break;
        begin = comma + 1;
    }
    if (lengths.empty()) {
        throw poselab::ConfigError("--lengths must name at least one prompt length");
    }

    poselab::SeededRng rng(seed);
    const auto points =
        poselab::passkey_sweep(ckpt.params, ckpt.config, strategy, lengths,
                               args.trials, rng);
    std::string csv = "length,accuracy\n";
    for (const auto& p : points) {
        csv += std::to_string(p.length) + "," + poselab::format_double(p.accuracy) + "\n";
    }
    std::cout << csv;
    if (!args.out.empty()) {
        poselab::atomic_write_file(args.out, csv);
        write_manifest(args.out + ".manifest.json", "passkey", seed, 1,
                       json{{"ckpt", args.ckpt},
                            {"lengths", args.lengths},
                            {"trials", args.trials},
                            {"strategy", poselab::to_string(strategy.kind)}},
                       {args.out});
    }
    return 0;
}

// --- rope-check ----------------------------------------------------------------

int run_rope_check(std::uint64_t seed) {
    const auto results = poselab::run_rope_checks(seed);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("rope-check: %-18s max_error=%-12.3e [%s]\n", r.name.c_str(),
                    r.max_error, r.pass ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass;
    }
    std::printf("rope-check: %s\n", all_pass ? "OK" : "FAILED");
    return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"poselab: positional skip-wise context extension laboratory"};
    app.require_subcommand(1);

    PlanArgs plan_args;
    auto* plan_cmd = app.add_subcommand(
        "plan", "Sample position plans as line-delimited JSON records");
    plan_cmd->add_option("--kind", plan_args.kind, "pose|randpos|full")
        ->check(CLI::IsMember({"pose", "randpos", "full"}));
    plan_cmd->add_option("--original-len", plan_args.original_len, "train window L_c");
    plan_cmd->add_option("--target-len", plan_args.target_len,
                         "target window L_t (also the length of full plans)");
    plan_cmd->add_option("--chunks", plan_args.chunks, "chunk count N");
    plan_cmd->add_option("--content", plan_args.content,
                         "uniform-bias|zero-bias|equal-to-skip-bias");
    plan_cmd->add_option("--text-len", plan_args.text_len,
                         "source text length L_x (default: target-len)");
    plan_cmd->add_option("-n,--count", plan_args.count, "number of plans");
    auto* plan_seed = plan_cmd->add_option("--seed", plan_args.seed, "master seed");
    plan_cmd->add_option("--out", plan_args.out, "output file (default: stdout)");

    CoverageArgs cov_args;
    auto* cov_cmd = app.add_subcommand(
        "coverage", "Monte Carlo relative-distance coverage probability CSV");
    cov_cmd->add_option("--original-len", cov_args.original_len, "train window L_c");
    cov_cmd->add_option("--target-len", cov_args.target_len, "target window L_t");
    cov_cmd->add_option("--chunks", cov_args.chunks, "chunk count N");
    cov_cmd->add_option("--trials", cov_args.trials, "Monte Carlo trials");
    auto* cov_seed = cov_cmd->add_option("--seed", cov_args.seed, "master seed");
    cov_cmd->add_option("--threads", cov_args.threads, "worker count (1 = serial)");
    cov_cmd->add_option("--out", cov_args.out, "output CSV path")->required();

    GenCorpusArgs gen_args;
    auto* gen_cmd =
        app.add_subcommand("gen-corpus", "Generate a synthetic corpus (binary-u16)");
    gen_cmd->add_option("--kind", gen_args.kind, "recall|markov");
    gen_cmd->add_option("--docs", gen_args.docs, "number of documents");
    gen_cmd->add_option("--doc-len", gen_args.doc_len, "tokens per document");
    auto* gen_seed = gen_cmd->add_option("--seed", gen_args.seed, "master seed");
    gen_cmd->add_option("--out", gen_args.out, "output corpus path")->required();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON config");
    train_cmd->add_option("--config", train_args.config_path, "config JSON path")
        ->required();
    train_cmd->add_option("--steps", train_args.steps, "override train.steps");
    train_cmd->add_option("--threads", train_args.threads, "override threads");
    auto* train_seed = train_cmd->add_option("--seed", train_args.seed, "master seed");
    train_cmd->add_option("--out-dir", train_args.out_dir, "override out_dir");
    train_cmd->add_option("--plan-kind", train_args.plan_kind,
                          "override plan_kind (pose|randpos|full)");

    EvalPplArgs ppl_args;
    auto* ppl_cmd = app.add_subcommand(
        "eval-ppl", "Sliding-window perplexity of a checkpoint over a token file");
    ppl_cmd->add_option("--ckpt", ppl_args.ckpt, "checkpoint path")->required();
    ppl_cmd->add_option("--tokens-file", ppl_args.tokens_file, "token file")
        ->required();
    ppl_cmd->add_option("--format", ppl_args.format, "binary-u16|utf8-text");
    ppl_cmd->add_option("--window", ppl_args.window, "evaluation window");
    ppl_cmd->add_option("--stride", ppl_args.stride, "sliding stride");
    ppl_cmd->add_option("--strategy", ppl_args.strategy,
                        "override interpolation: none|linear|ntk|yarn");
    ppl_cmd->add_option("--out", ppl_args.out, "also write the CSV here");

    PasskeyArgs pk_args;
    auto* pk_cmd =
        app.add_subcommand("passkey", "Passkey retrieval accuracy per prompt length");
    pk_cmd->add_option("--ckpt", pk_args.ckpt, "checkpoint path")->required();
    pk_cmd->add_option("--lengths", pk_args.lengths, "comma-separated prompt lengths");
    pk_cmd->add_option("--trials", pk_args.trials, "trials per length");
    auto* pk_seed = pk_cmd->add_option("--seed", pk_args.seed, "master seed");
    pk_cmd->add_option("--strategy", pk_args.strategy,
                       "override interpolation: none|linear|ntk|yarn");
    pk_cmd->add_option("--out", pk_args.out, "also write the CSV here");

    std::uint64_t rope_seed = 7;
    auto* rope_cmd =
        app.add_subcommand("rope-check", "Run the rotary-embedding invariant suite");
    rope_cmd->add_option("--seed", rope_seed, "trial seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        plan_args.seed_given = plan_seed->count() > 0;
        cov_args.seed_given = cov_seed->count() > 0;
        gen_args.seed_given = gen_seed->count() > 0;
        train_args.seed_given = train_seed->count() > 0;
        pk_args.seed_given = pk_seed->count() > 0;
        if (plan_cmd->parsed()) return run_plan(plan_args);
        if (cov_cmd->parsed()) return run_coverage(cov_args);
        if (gen_cmd->parsed()) return run_gen_corpus(gen_args);
        if (train_cmd->parsed()) return run_train(train_args);
        if (ppl_cmd->parsed()) return run_eval_ppl(ppl_args);
        if (pk_cmd->parsed()) return run_passkey(pk_args);
        if (rope_cmd->parsed()) return run_rope_check(rope_seed);
    } catch (const poselab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const poselab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
