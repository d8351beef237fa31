#pragma once

// Versioned binary checkpoint container:
//   bytes 0..7   magic "POSELAB1"
//   u64 LE       length of the config JSON
//   ...          config JSON (ModelConfig fields)
//   u64 LE       parameter count
//   f64 LE * n   parameter values in registry order (token_embedding, then
//                per layer: attn_norm_gain, wq, wk, wv, wo, ffn_norm_gain,
//                w1, w2; then final_norm_gain, lm_head)

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "poselab/errors.hpp"
#include "poselab/io.hpp"
#include "poselab/model.hpp"

namespace poselab {

inline constexpr char kCheckpointMagic[8] = {'P', 'O', 'S', 'E', 'L', 'A', 'B', '1'};

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    return nlohmann::json{
        {"vocab_size", cfg.vocab_size},
        {"n_layers", cfg.n_layers},
        {"d_model", cfg.d_model},
        {"n_heads", cfg.n_heads},
        {"ffn_mult", cfg.ffn_mult},
        {"rope_base", cfg.rope_base},
        {"rms_eps", cfg.rms_eps},
        {"interpolation", to_string(cfg.interpolation)},
        {"yarn_ramp_low", cfg.yarn_ramp_low},
        {"yarn_ramp_high", cfg.yarn_ramp_high},
        {"train_window", cfg.train_window},
        {"target_window", cfg.target_window},
    };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<std::int64_t>();
    cfg.n_layers = j.at("n_layers").get<std::int64_t>();
    cfg.d_model = j.at("d_model").get<std::int64_t>();
    cfg.n_heads = j.at("n_heads").get<std::int64_t>();
    cfg.ffn_mult = j.at("ffn_mult").get<std::int64_t>();
    cfg.rope_base = j.at("rope_base").get<double>();
    cfg.rms_eps = j.at("rms_eps").get<double>();
    cfg.interpolation = interpolation_from_string(j.at("interpolation").get<std::string>());
    cfg.yarn_ramp_low = j.at("yarn_ramp_low").get<double>();
    cfg.yarn_ramp_high = j.at("yarn_ramp_high").get<double>();
    cfg.train_window = j.at("train_window").get<std::int64_t>();
    cfg.target_window = j.at("target_window").get<std::int64_t>();
    cfg.validate();
    return cfg;
}

namespace detail {

inline void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
}

inline std::uint64_t read_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path,
                            const ModelConfig& cfg, const ParameterSet& params) {
    const std::string config_json = model_config_to_json(cfg).dump();
    std::vector<std::uint8_t> out;
    out.reserve(24 + config_json.size() + params.values.size() * 8);
    out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
    detail::append_u64_le(out, config_json.size());
    out.insert(out.end(), config_json.begin(), config_json.end());
    detail::append_u64_le(out, params.values.size());
    for (double d : params.values) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        detail::append_u64_le(out, bits);
    }
    atomic_write_file(path, out.data(), out.size());
}

struct Checkpoint {
    ModelConfig config;
    ParameterSet params;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
        throw ParseError("not a POSELAB1 checkpoint", 0);
    }
    std::size_t pos = 8;
    const std::uint64_t json_len = detail::read_u64_le(bytes.data() + pos);
    pos += 8;
    if (pos + json_len + 8 > bytes.size()) {
        throw ParseError("truncated checkpoint config", pos);
    }
    const std::string config_json(reinterpret_cast<const char*>(bytes.data() + pos),
                                  json_len);
    pos += json_len;

    Checkpoint ckpt;
    try {
        ckpt.config = model_config_from_json(nlohmann::json::parse(config_json));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad checkpoint config: ") + e.what(), pos);
    }

    const std::uint64_t n_params = detail::read_u64_le(bytes.data() + pos);
    pos += 8;
    ckpt.params = build_parameter_set(ckpt.config);
    if (n_params != ckpt.params.values.size()) {
        throw ParseError("parameter count mismatch: file has " +
                             std::to_string(n_params) + ", config implies " +
                             std::to_string(ckpt.params.values.size()),
                         pos - 8);
    }
    if (pos + n_params * 8 > bytes.size()) {
        throw ParseError("truncated checkpoint parameters", pos);
    }
    for (std::uint64_t i = 0; i < n_params; ++i) {
        const std::uint64_t bits = detail::read_u64_le(bytes.data() + pos + i * 8);
        std::memcpy(&ckpt.params.values[i], &bits, 8);
    }
    return ckpt;
}

}  // namespace poselab
