#pragma once

// Minimal decoder-only transformer with RoPE attention: pre-norm blocks,
// RMS normalization, GELU feed-forward, hand-written reverse-mode gradients
// and AdamW. Everything is double precision; determinism is bitwise for a
// fixed seed, independent of the worker count.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "poselab/data.hpp"
#include "poselab/errors.hpp"
#include "poselab/position_plan.hpp"
#include "poselab/rng.hpp"
#include "poselab/rope.hpp"

namespace poselab {

struct ModelConfig {
    std::int64_t vocab_size = 64;
    std::int64_t n_layers = 2;
    std::int64_t d_model = 64;
    std::int64_t n_heads = 4;
    std::int64_t ffn_mult = 4;
    double rope_base = 10000.0;
    double rms_eps = 1e-5;
    Interpolation interpolation = Interpolation::none;
    double yarn_ramp_low = 1.0;
    double yarn_ramp_high = 32.0;
    std::int64_t train_window = 64;   // L_c
    std::int64_t target_window = 64;  // L_t

    std::int64_t head_dim() const { return d_model / n_heads; }
    std::int64_t ffn_dim() const { return d_model * ffn_mult; }

    void validate() const {
        if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
        if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
        if (n_heads < 1 || d_model % n_heads != 0) {
            throw ConfigError("d_model must be a multiple of n_heads");
        }
        if (head_dim() % 2 != 0 || head_dim() < 2) {
            throw ConfigError("head_dim must be even and >= 2");
        }
        if (ffn_mult < 1) throw ConfigError("ffn_mult must be >= 1");
        if (train_window < 1 || target_window < train_window) {
            throw ConfigError("need 1 <= train_window <= target_window");
        }
    }

    InterpolationStrategy strategy() const {
        InterpolationStrategy s;
        s.kind = interpolation;
        s.alpha = static_cast<double>(target_window) /
                  static_cast<double>(train_window);
        s.yarn_ramp_low = yarn_ramp_low;
        s.yarn_ramp_high = yarn_ramp_high;
        return s;
    }

    RopeParams base_rope_params() const {
        return RopeParams::make(head_dim(), rope_base);
    }

    RopeParams effective_rope_params() const {
        return effective_rope(strategy(), base_rope_params(), train_window);
    }
};

// All model weights in one flat buffer, with a paired gradient buffer and a
// tensor registry defining the canonical (checkpoint) order.
struct ParameterSet {
    struct Tensor {
        std::string name;
        std::int64_t offset = 0;
        std::int64_t rows = 0;
        std::int64_t cols = 0;  // 1 for vectors
        std::int64_t size() const { return rows * cols; }
    };

    struct LayerOffsets {
        std::int64_t attn_gain, wq, wk, wv, wo, ffn_gain, w1, w2;
    };

    std::vector<double> values;
    std::vector<double> grads;
    std::vector<Tensor> tensors;
    std::int64_t embed = 0;
    std::int64_t lm_head = 0;
    std::int64_t final_gain = 0;
    std::vector<LayerOffsets> layers;

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }

    void zero_grads() { std::fill(grads.begin(), grads.end(), 0.0); }

    // Matrices ~ N(0, init_std^2), norm gains = 1.
    void init_random(SeededRng& rng, double init_std) {
        for (double& p : values) p = rng.normal(0.0, init_std);
        for (const auto& t : tensors) {
            if (t.name.find("gain") != std::string::npos) {
                std::fill(values.begin() + t.offset,
                          values.begin() + t.offset + t.size(), 1.0);
            }
        }
    }
};

inline ParameterSet build_parameter_set(const ModelConfig& cfg) {
    cfg.validate();
    ParameterSet p;
    std::int64_t cursor = 0;
    auto add = [&](const std::string& name, std::int64_t rows, std::int64_t cols) {
        p.tensors.push_back({name, cursor, rows, cols});
        const std::int64_t off = cursor;
        cursor += rows * cols;
        return off;
    };
    p.embed = add("token_embedding", cfg.vocab_size, cfg.d_model);
    p.layers.resize(static_cast<std::size_t>(cfg.n_layers));
    for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        auto& lo = p.layers[static_cast<std::size_t>(l)];
        lo.attn_gain = add(prefix + "attn_norm_gain", cfg.d_model, 1);
        lo.wq = add(prefix + "wq", cfg.d_model, cfg.d_model);
        lo.wk = add(prefix + "wk", cfg.d_model, cfg.d_model);
        lo.wv = add(prefix + "wv", cfg.d_model, cfg.d_model);
        lo.wo = add(prefix + "wo", cfg.d_model, cfg.d_model);
        lo.ffn_gain = add(prefix + "ffn_norm_gain", cfg.d_model, 1);
        lo.w1 = add(prefix + "w1", cfg.ffn_dim(), cfg.d_model);
        lo.w2 = add(prefix + "w2", cfg.d_model, cfg.ffn_dim());
    }
    p.final_gain = add("final_norm_gain", cfg.d_model, 1);
    p.lm_head = add("lm_head", cfg.vocab_size, cfg.d_model);
    p.values.assign(static_cast<std::size_t>(cursor), 0.0);
    p.grads.assign(static_cast<std::size_t>(cursor), 0.0);
    return p;
}

namespace kernel {

// y = W x with W row-major [n_out][n_in]
inline void linear(const double* w, const double* x, double* y, std::int64_t n_out,
                   std::int64_t n_in) {
    for (std::int64_t o = 0; o < n_out; ++o) {
        const double* row = w + o * n_in;
        double acc = 0.0;
        for (std::int64_t i = 0; i < n_in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// dW += dy x^T and dx += W^T dy
inline void linear_backward(const double* w, const double* x, const double* dy,
                            double* dw, double* dx, std::int64_t n_out,
                            std::int64_t n_in) {
    for (std::int64_t o = 0; o < n_out; ++o) {
        const double g = dy[o];
        const double* row = w + o * n_in;
        double* drow = dw + o * n_in;
        for (std::int64_t i = 0; i < n_in; ++i) {
            drow[i] += g * x[i];
            dx[i] += row[i] * g;
        }
    }
}

// y_i = gain_i * x_i * inv, inv = 1/sqrt(mean(x^2)+eps). Returns inv.
inline double rmsnorm(const double* x, const double* gain, double* y,
                      std::int64_t n, double eps) {
    double ms = 0.0;
    for (std::int64_t i = 0; i < n; ++i) ms += x[i] * x[i];
    const double inv = 1.0 / std::sqrt(ms / static_cast<double>(n) + eps);
    for (std::int64_t i = 0; i < n; ++i) y[i] = gain[i] * x[i] * inv;
    return inv;
}

inline void rmsnorm_backward(const double* x, const double* gain, const double* dy,
                             double inv, double* dgain, double* dx, std::int64_t n) {
    double dot_wx = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        dgain[i] += dy[i] * x[i] * inv;
        dot_wx += dy[i] * gain[i] * x[i];
    }
    const double coeff = dot_wx * inv * inv * inv / static_cast<double>(n);
    for (std::int64_t i = 0; i < n; ++i) {
        dx[i] += dy[i] * gain[i] * inv - coeff * x[i];
    }
}

inline double gelu(double z) {
    return 0.5 * z * (1.0 + std::erf(z * 0.70710678118654752440));
}

inline double gelu_grad(double z) {
    const double cdf = 0.5 * (1.0 + std::erf(z * 0.70710678118654752440));
    const double pdf = std::exp(-0.5 * z * z) * 0.39894228040143267794;
    return cdf + z * pdf;
}

}  // namespace kernel

// Activations saved by forward for one sequence; reused across steps.
struct ForwardCache {
    struct LayerCache {
        std::vector<double> x_in;     // [L][D] residual stream entering the block
        std::vector<double> inv_attn; // [L]
        std::vector<double> xa;       // [L][D] normed input to attention
        std::vector<double> q, k, v;  // [L][D], q/k stored rotated
        std::vector<double> probs;    // [H][L][L] causal softmax rows
        std::vector<double> ctx;      // [L][D]
        std::vector<double> x_mid;    // [L][D] residual stream entering ffn
        std::vector<double> inv_ffn;  // [L]
        std::vector<double> xf;       // [L][D]
        std::vector<double> h_pre;    // [L][F]
        std::vector<double> h_act;    // [L][F]
    };
    std::vector<LayerCache> layers;
    std::vector<double> x_final;    // [L][D]
    std::vector<double> inv_final;  // [L]
    std::vector<double> xn_final;   // [L][D]
    std::vector<double> logits;     // [L][V]
    std::int64_t seq_len = 0;
    bool valid = false;

    void resize(const ModelConfig& cfg, std::int64_t L) {
        const auto D = static_cast<std::size_t>(cfg.d_model);
        const auto F = static_cast<std::size_t>(cfg.ffn_dim());
        const auto V = static_cast<std::size_t>(cfg.vocab_size);
        const auto H = static_cast<std::size_t>(cfg.n_heads);
        const auto Lz = static_cast<std::size_t>(L);
        layers.resize(static_cast<std::size_t>(cfg.n_layers));
        for (auto& lc : layers) {
            lc.x_in.assign(Lz * D, 0.0);
            lc.inv_attn.assign(Lz, 0.0);
            lc.xa.assign(Lz * D, 0.0);
            lc.q.assign(Lz * D, 0.0);
            lc.k.assign(Lz * D, 0.0);
            lc.v.assign(Lz * D, 0.0);
            lc.probs.assign(H * Lz * Lz, 0.0);
            lc.ctx.assign(Lz * D, 0.0);
            lc.x_mid.assign(Lz * D, 0.0);
            lc.inv_ffn.assign(Lz, 0.0);
            lc.xf.assign(Lz * D, 0.0);
            lc.h_pre.assign(Lz * F, 0.0);
            lc.h_act.assign(Lz * F, 0.0);
        }
        x_final.assign(Lz * D, 0.0);
        inv_final.assign(Lz, 0.0);
        xn_final.assign(Lz * D, 0.0);
        logits.assign(Lz * V, 0.0);
        seq_len = L;
        valid = false;
    }
};

// Forward pass for one sequence. RoPE phases come from the plan's position
// values (not array offsets) through the supplied effective frequency table.
// Attention is causal in array order; logits land in cache.logits.
inline void forward(const ModelConfig& cfg, const RopeParams& rope,
                    const ParameterSet& params, std::span<const std::int32_t> tokens,
                    std::span<const std::int64_t> positions, ForwardCache& cache) {
    const std::int64_t L = static_cast<std::int64_t>(tokens.size());
    if (positions.size() != tokens.size()) {
        throw ShapeError("forward: positions size != tokens size");
    }
    if (rope.head_dim != cfg.head_dim()) {
        throw ShapeError("forward: rope table head_dim mismatch");
    }
    if (cache.seq_len != L) cache.resize(cfg, L);
    cache.valid = false;

    const std::int64_t D = cfg.d_model;
    const std::int64_t Dh = cfg.head_dim();
    const std::int64_t H = cfg.n_heads;
    const std::int64_t F = cfg.ffn_dim();
    const std::int64_t V = cfg.vocab_size;
    const double* pv = params.values.data();
    const double score_scale = rope.attn_scale / std::sqrt(static_cast<double>(Dh));

    auto check_finite = [&](const std::vector<double>& buf, int layer) {
        for (double x : buf) {
            if (!std::isfinite(x)) {
                throw NumericError("non-finite activation", layer);
            }
        }
    };

    // token embedding
    {
        auto& x0 = cache.layers[0].x_in;
        for (std::int64_t t = 0; t < L; ++t) {
            const std::int32_t id = tokens[static_cast<std::size_t>(t)];
            if (id < 0 || id >= V) {
                throw DataError("token id out of range: " + std::to_string(id));
            }
            const double* row = pv + params.embed + static_cast<std::int64_t>(id) * D;
            std::copy(row, row + D, x0.data() + t * D);
        }
    }

    std::vector<double> scores(static_cast<std::size_t>(L));
    std::vector<double> proj(static_cast<std::size_t>(std::max(D, F)));

    for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
        auto& lc = cache.layers[static_cast<std::size_t>(l)];
        const auto& off = params.layers[static_cast<std::size_t>(l)];

        // attention block
        for (std::int64_t t = 0; t < L; ++t) {
            lc.inv_attn[static_cast<std::size_t>(t)] =
                kernel::rmsnorm(lc.x_in.data() + t * D, pv + off.attn_gain,
                                lc.xa.data() + t * D, D, cfg.rms_eps);
            kernel::linear(pv + off.wq, lc.xa.data() + t * D, lc.q.data() + t * D, D, D);
            kernel::linear(pv + off.wk, lc.xa.data() + t * D, lc.k.data() + t * D, D, D);
            kernel::linear(pv + off.wv, lc.xa.data() + t * D, lc.v.data() + t * D, D, D);
            for (std::int64_t h = 0; h < H; ++h) {
                rope_rotate_inplace(
                    std::span<double>(lc.q.data() + t * D + h * Dh,
                                      static_cast<std::size_t>(Dh)),
                    positions[static_cast<std::size_t>(t)], rope);
                rope_rotate_inplace(
                    std::span<double>(lc.k.data() + t * D + h * Dh,
                                      static_cast<std::size_t>(Dh)),
                    positions[static_cast<std::size_t>(t)], rope);
            }
        }
        for (std::int64_t h = 0; h < H; ++h) {
            const std::int64_t hoff = h * Dh;
            double* probs_h = lc.probs.data() + h * L * L;
            for (std::int64_t t = 0; t < L; ++t) {
                const double* qt = lc.q.data() + t * D + hoff;
                double max_s = -1e300;
                for (std::int64_t j = 0; j <= t; ++j) {
                    const double* kj = lc.k.data() + j * D + hoff;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < Dh; ++i) acc += qt[i] * kj[i];
                    const double s = acc * score_scale;
                    scores[static_cast<std::size_t>(j)] = s;
                    if (s > max_s) max_s = s;
                }
                double denom = 0.0;
                double* prow = probs_h + t * L;
                for (std::int64_t j = 0; j <= t; ++j) {
                    const double e = std::exp(scores[static_cast<std::size_t>(j)] - max_s);
                    prow[j] = e;
                    denom += e;
                }
                const double inv_denom = 1.0 / denom;
                for (std::int64_t j = 0; j <= t; ++j) prow[j] *= inv_denom;
                double* ctx = lc.ctx.data() + t * D + hoff;
                for (std::int64_t i = 0; i < Dh; ++i) ctx[i] = 0.0;
                for (std::int64_t j = 0; j <= t; ++j) {
                    const double p = prow[j];
                    const double* vj = lc.v.data() + j * D + hoff;
                    for (std::int64_t i = 0; i < Dh; ++i) ctx[i] += p * vj[i];
                }
            }
        }
        for (std::int64_t t = 0; t < L; ++t) {
            double* xm = lc.x_mid.data() + t * D;
            kernel::linear(pv + off.wo, lc.ctx.data() + t * D, proj.data(), D, D);
            const double* xi = lc.x_in.data() + t * D;
            for (std::int64_t i = 0; i < D; ++i) xm[i] = xi[i] + proj[i];
        }

        // feed-forward block
        for (std::int64_t t = 0; t < L; ++t) {
            lc.inv_ffn[static_cast<std::size_t>(t)] =
                kernel::rmsnorm(lc.x_mid.data() + t * D, pv + off.ffn_gain,
                                lc.xf.data() + t * D, D, cfg.rms_eps);
            kernel::linear(pv + off.w1, lc.xf.data() + t * D, lc.h_pre.data() + t * F,
                           F, D);
            for (std::int64_t i = 0; i < F; ++i) {
                lc.h_act[static_cast<std::size_t>(t * F + i)] =
                    kernel::gelu(lc.h_pre[static_cast<std::size_t>(t * F + i)]);
            }
            kernel::linear(pv + off.w2, lc.h_act.data() + t * F, proj.data(), D, F);
            double* xo = (l + 1 < cfg.n_layers)
                             ? cache.layers[static_cast<std::size_t>(l + 1)].x_in.data() + t * D
                             : cache.x_final.data() + t * D;
            const double* xm = lc.x_mid.data() + t * D;
            for (std::int64_t i = 0; i < D; ++i) xo[i] = xm[i] + proj[i];
        }
        check_finite(l + 1 < cfg.n_layers
                         ? cache.layers[static_cast<std::size_t>(l + 1)].x_in
                         : cache.x_final,
                     static_cast<int>(l));
    }

    // final norm and lm head
    for (std::int64_t t = 0; t < L; ++t) {
        cache.inv_final[static_cast<std::size_t>(t)] =
            kernel::rmsnorm(cache.x_final.data() + t * D, pv + params.final_gain,
                            cache.xn_final.data() + t * D, D, cfg.rms_eps);
        kernel::linear(pv + params.lm_head, cache.xn_final.data() + t * D,
                       cache.logits.data() + t * V, V, D);
    }
    check_finite(cache.logits, static_cast<int>(cfg.n_layers));
    cache.valid = true;
}

// Mean next-token cross-entropy in nats. logits is [T][vocab] row-major.
inline double loss_next_token(std::span<const double> logits, std::int64_t vocab,
                              std::span<const std::int32_t> targets) {
    const std::int64_t T = static_cast<std::int64_t>(targets.size());
    if (static_cast<std::int64_t>(logits.size()) != T * vocab) {
        throw ShapeError("loss_next_token: logits size != targets*vocab");
    }
    double total = 0.0;
    for (std::int64_t t = 0; t < T; ++t) {
        const double* row = logits.data() + t * vocab;
        double max_l = row[0];
        for (std::int64_t v = 1; v < vocab; ++v) max_l = std::max(max_l, row[v]);
        double denom = 0.0;
        for (std::int64_t v = 0; v < vocab; ++v) denom += std::exp(row[v] - max_l);
        const std::int32_t y = targets[static_cast<std::size_t>(t)];
        if (y < 0 || y >= vocab) {
            throw DataError("target id out of range: " + std::to_string(y));
        }
        total += max_l + std::log(denom) - row[y];
    }
    return total / static_cast<double>(T);
}

// Reverse-mode pass; accumulates d(loss_scale * mean-CE)/d(params) into
// grads (size == params.size()). Requires the cache left by forward.
inline void backward(const ModelConfig& cfg, const RopeParams& rope,
                     const ParameterSet& params, const ForwardCache& cache,
                     std::span<const std::int32_t> tokens,
                     std::span<const std::int64_t> positions,
                     std::span<const std::int32_t> targets, double loss_scale,
                     std::vector<double>& grads) {
    const std::int64_t L = static_cast<std::int64_t>(tokens.size());
    if (!cache.valid || cache.seq_len != L) {
        throw UsageError("backward: no matching forward cache");
    }
    if (targets.size() != tokens.size()) {
        throw ShapeError("backward: targets size != tokens size");
    }
    if (grads.size() != params.values.size()) {
        throw ShapeError("backward: grads buffer size mismatch");
    }

    const std::int64_t D = cfg.d_model;
    const std::int64_t Dh = cfg.head_dim();
    const std::int64_t H = cfg.n_heads;
    const std::int64_t F = cfg.ffn_dim();
    const std::int64_t V = cfg.vocab_size;
    const double* pv = params.values.data();
    double* gv = grads.data();
    const double score_scale = rope.attn_scale / std::sqrt(static_cast<double>(Dh));
    const double inv_T = loss_scale / static_cast<double>(L);

    std::vector<double> dx(static_cast<std::size_t>(L * D), 0.0);  // d residual
    std::vector<double> dlogit_row(static_cast<std::size_t>(V));
    std::vector<double> dxn(static_cast<std::size_t>(D));

    // head + final norm
    for (std::int64_t t = 0; t < L; ++t) {
        const double* row = cache.logits.data() + t * V;
        double max_l = row[0];
        for (std::int64_t v = 1; v < V; ++v) max_l = std::max(max_l, row[v]);
        double denom = 0.0;
        for (std::int64_t v = 0; v < V; ++v) denom += std::exp(row[v] - max_l);
        const double inv_denom = 1.0 / denom;
        for (std::int64_t v = 0; v < V; ++v) {
            double p = std::exp(row[v] - max_l) * inv_denom;
            if (v == targets[static_cast<std::size_t>(t)]) p -= 1.0;
            dlogit_row[static_cast<std::size_t>(v)] = p * inv_T;
        }
        std::fill(dxn.begin(), dxn.end(), 0.0);
        kernel::linear_backward(pv + params.lm_head, cache.xn_final.data() + t * D,
                                dlogit_row.data(), gv + params.lm_head, dxn.data(),
                                V, D);
        kernel::rmsnorm_backward(cache.x_final.data() + t * D, pv + params.final_gain,
                                 dxn.data(), cache.inv_final[static_cast<std::size_t>(t)],
                                 gv + params.final_gain, dx.data() + t * D, D);
    }

    std::vector<double> dxa(static_cast<std::size_t>(L * D));
    std::vector<double> dq(static_cast<std::size_t>(L * D));
    std::vector<double> dk(static_cast<std::size_t>(L * D));
    std::vector<double> dv(static_cast<std::size_t>(L * D));
    std::vector<double> dctx(static_cast<std::size_t>(L * D));
    std::vector<double> dxf(static_cast<std::size_t>(D));
    std::vector<double> dh_act(static_cast<std::size_t>(F));
    std::vector<double> dh_pre(static_cast<std::size_t>(F));
    std::vector<double> dp_row(static_cast<std::size_t>(L));

    for (std::int64_t l = cfg.n_layers - 1; l >= 0; --l) {
        const auto& lc = cache.layers[static_cast<std::size_t>(l)];
        const auto& off = params.layers[static_cast<std::size_t>(l)];

        // feed-forward block: dx holds d(x_out); residual passes through,
        // branch flows back through w2, gelu, w1, norm into d(x_mid).
        for (std::int64_t t = 0; t < L; ++t) {
            std::fill(dxf.begin(), dxf.end(), 0.0);
            std::fill(dh_act.begin(), dh_act.end(), 0.0);
            kernel::linear_backward(pv + off.w2, lc.h_act.data() + t * F,
                                    dx.data() + t * D, gv + off.w2, dh_act.data(), D,
                                    F);
            for (std::int64_t i = 0; i < F; ++i) {
                dh_pre[static_cast<std::size_t>(i)] =
                    dh_act[static_cast<std::size_t>(i)] *
                    kernel::gelu_grad(lc.h_pre[static_cast<std::size_t>(t * F + i)]);
            }
            kernel::linear_backward(pv + off.w1, lc.xf.data() + t * D, dh_pre.data(),
                                    gv + off.w1, dxf.data(), F, D);
            kernel::rmsnorm_backward(lc.x_mid.data() + t * D, pv + off.ffn_gain,
                                     dxf.data(), lc.inv_ffn[static_cast<std::size_t>(t)],
                                     gv + off.ffn_gain, dx.data() + t * D, D);
        }

        // attention block
        std::fill(dctx.begin(), dctx.end(), 0.0);
        for (std::int64_t t = 0; t < L; ++t) {
            kernel::linear_backward(pv + off.wo, lc.ctx.data() + t * D,
                                    dx.data() + t * D, gv + off.wo,
                                    dctx.data() + t * D, D, D);
        }
        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        for (std::int64_t h = 0; h < H; ++h) {
            const std::int64_t hoff = h * Dh;
            const double* probs_h = lc.probs.data() + h * L * L;
            for (std::int64_t t = 0; t < L; ++t) {
                const double* prow = probs_h + t * L;
                const double* dctx_t = dctx.data() + t * D + hoff;
                double dot_pd = 0.0;
                for (std::int64_t j = 0; j <= t; ++j) {
                    const double* vj = lc.v.data() + j * D + hoff;
                    double acc = 0.0;
                    for (std::int64_t i = 0; i < Dh; ++i) acc += dctx_t[i] * vj[i];
                    dp_row[static_cast<std::size_t>(j)] = acc;
                    dot_pd += prow[j] * acc;
                }
                for (std::int64_t j = 0; j <= t; ++j) {
                    const double ds =
                        prow[j] * (dp_row[static_cast<std::size_t>(j)] - dot_pd) *
                        score_scale;
                    const double p = prow[j];
                    const double* kj = lc.k.data() + j * D + hoff;
                    const double* qt = lc.q.data() + t * D + hoff;
                    double* dq_t = dq.data() + t * D + hoff;
                    double* dk_j = dk.data() + j * D + hoff;
                    double* dv_j = dv.data() + j * D + hoff;
                    for (std::int64_t i = 0; i < Dh; ++i) {
                        dq_t[i] += ds * kj[i];
                        dk_j[i] += ds * qt[i];
                        dv_j[i] += p * dctx_t[i];
                    }
                }
            }
        }
        // undo the rotations (transpose of a rotation is rotation by -m)
        for (std::int64_t t = 0; t < L; ++t) {
            for (std::int64_t h = 0; h < H; ++h) {
                rope_rotate_inplace(
                    std::span<double>(dq.data() + t * D + h * Dh,
                                      static_cast<std::size_t>(Dh)),
                    -positions[static_cast<std::size_t>(t)], rope);
                rope_rotate_inplace(
                    std::span<double>(dk.data() + t * D + h * Dh,
                                      static_cast<std::size_t>(Dh)),
                    -positions[static_cast<std::size_t>(t)], rope);
            }
        }
        for (std::int64_t t = 0; t < L; ++t) {
            double* dxa_t = dxa.data() + t * D;
            std::fill(dxa_t, dxa_t + D, 0.0);
            kernel::linear_backward(pv + off.wq, lc.xa.data() + t * D,
                                    dq.data() + t * D, gv + off.wq, dxa_t, D, D);
            kernel::linear_backward(pv + off.wk, lc.xa.data() + t * D,
                                    dk.data() + t * D, gv + off.wk, dxa_t, D, D);
            kernel::linear_backward(pv + off.wv, lc.xa.data() + t * D,
                                    dv.data() + t * D, gv + off.wv, dxa_t, D, D);
            kernel::rmsnorm_backward(lc.x_in.data() + t * D, pv + off.attn_gain,
                                     dxa_t, lc.inv_attn[static_cast<std::size_t>(t)],
                                     gv + off.attn_gain, dx.data() + t * D, D);
        }
    }

    // embedding
    for (std::int64_t t = 0; t < L; ++t) {
        const std::int64_t id = tokens[static_cast<std::size_t>(t)];
        double* grow = gv + params.embed + id * D;
        const double* dxt = dx.data() + t * D;
        for (std::int64_t i = 0; i < D; ++i) grow[i] += dxt[i];
    }
}

// ---------------------------------------------------------------------------
// AdamW with linear warmup / linear decay
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr_base = 3e-4;
    std::int64_t warmup_steps = 10;
    std::int64_t total_steps = 0;  // 0 = constant lr after warmup
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// lr(step) for 0-based step index: base*(step+1)/warmup while warming up,
// then linear decay to 0 at total_steps.
inline double lr_at(const AdamConfig& cfg, std::int64_t step) {
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
        return cfg.lr_base * static_cast<double>(step + 1) /
               static_cast<double>(cfg.warmup_steps);
    }
    if (cfg.total_steps > cfg.warmup_steps) {
        const double frac = static_cast<double>(cfg.total_steps - step) /
                            static_cast<double>(cfg.total_steps - cfg.warmup_steps);
        return cfg.lr_base * std::max(0.0, frac);
    }
    return cfg.lr_base;
}

struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;

    static OptimizerState for_params(const ParameterSet& p) {
        OptimizerState s;
        s.m.assign(p.values.size(), 0.0);
        s.v.assign(p.values.size(), 0.0);
        return s;
    }
};

// One AdamW update with decoupled weight decay, consuming params.grads.
inline void adamw_step(ParameterSet& params, OptimizerState& opt,
                       const AdamConfig& cfg) {
    if (opt.m.size() != params.values.size()) {
        throw UsageError("adamw_step: optimizer state size mismatch");
    }
    const double lr = lr_at(cfg, opt.step);
    const std::int64_t t = opt.step + 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.values.size(); ++i) {
        const double g = params.grads[i];
        opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * g;
        opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = opt.m[i] / bc1;
        const double vhat = opt.v[i] / bc2;
        params.values[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                                  cfg.weight_decay * params.values[i]);
    }
    opt.step += 1;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::int64_t steps = 2000;
    std::int64_t batch_size = 32;
    double lr = 3e-4;
    std::int64_t warmup_steps = 10;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0;
    double init_std = 0.08;
    std::int64_t chunk_count = 2;  // N, for pose plans
    ContentStrategy content_strategy = ContentStrategy::uniform_bias;
    std::uint64_t seed = 0;
    int threads = 1;
};

struct TrainResult {
    ParameterSet params;
    std::vector<double> loss_trace;  // batch mean loss per step
};

// One training example assembled from a sampled plan.
struct BatchElement {
    std::vector<std::int32_t> tokens;
    std::vector<std::int32_t> targets;
    std::vector<std::int64_t> positions;
};

// Fills a batch element from a document suffix starting at crop. Targets are
// the next source token after each content index, which stays in range
// because the plan was built for text_len = doc.size() - crop - 1.
inline void fill_batch_element(const PositionPlan& plan,
                               const std::vector<std::int32_t>& doc,
                               std::int64_t crop, BatchElement& out) {
    const std::size_t n = plan.position_index.size();
    out.tokens.resize(n);
    out.targets.resize(n);
    out.positions.assign(plan.position_index.begin(), plan.position_index.end());
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = static_cast<std::size_t>(crop + plan.content_index[i]);
        out.tokens[i] = doc[src];
        out.targets[i] = doc[src + 1];
    }
}

// Trains from scratch on the corpus, re-sampling a plan for every example.
// plan_kind full uses the target window; pose/randpos use the train window.
// Bitwise deterministic given (seed, config), independent of thread count:
// batches are assembled from a single stream and per-element gradients are
// reduced in a fixed order.
inline TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                         const TokenCorpus& corpus, PlanKind plan_kind) {
    model_cfg.validate();
    if (train_cfg.steps < 0 || train_cfg.batch_size < 1) {
        throw ConfigError("train: steps must be >= 0, batch_size >= 1");
    }
    const std::int64_t plan_len = plan_kind == PlanKind::full
                                      ? model_cfg.target_window
                                      : model_cfg.train_window;

    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
        if (static_cast<std::int64_t>(corpus.documents[i].size()) >= plan_len + 1) {
            eligible.push_back(i);
        }
    }
    if (eligible.empty()) {
        throw DataError("corpus has no document of length >= " +
                        std::to_string(plan_len + 1));
    }

    ExtensionConfig ext;
    ext.original_len = model_cfg.train_window;
    ext.target_len = model_cfg.target_window;
    ext.chunk_count = train_cfg.chunk_count;
    ext.content_strategy = train_cfg.content_strategy;
    ext.validate();

    const RopeParams rope = model_cfg.effective_rope_params();
    SeededRng rng(train_cfg.seed);

    TrainResult result;
    result.params = build_parameter_set(model_cfg);
    result.params.init_random(rng, train_cfg.init_std);
    OptimizerState opt = OptimizerState::for_params(result.params);
    AdamConfig adam;
    adam.lr_base = train_cfg.lr;
    adam.warmup_steps = train_cfg.warmup_steps;
    adam.total_steps = train_cfg.steps;
    adam.beta1 = train_cfg.beta1;
    adam.beta2 = train_cfg.beta2;
    adam.eps = train_cfg.adam_eps;
    adam.weight_decay = train_cfg.weight_decay;

    const std::int64_t B = train_cfg.batch_size;
    std::vector<BatchElement> batch(static_cast<std::size_t>(B));
    std::vector<ForwardCache> caches(static_cast<std::size_t>(B));
    std::vector<std::vector<double>> elem_grads(
        static_cast<std::size_t>(B),
        std::vector<double>(result.params.values.size(), 0.0));
    std::vector<double> elem_loss(static_cast<std::size_t>(B), 0.0);

    const int workers =
        std::max(1, std::min<int>(train_cfg.threads, static_cast<int>(B)));
    result.loss_trace.reserve(static_cast<std::size_t>(train_cfg.steps));

    for (std::int64_t step = 0; step < train_cfg.steps; ++step) {
        // sequential, deterministic batch assembly: pick a document, crop a
        // random suffix so every example sees fresh text (the crop draw is
        // consumed identically for all plan kinds), then sample a plan
        for (std::int64_t b = 0; b < B; ++b) {
            const auto& doc = corpus.documents[eligible[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(eligible.size()) - 1))]];
            const std::int64_t crop = rng.uniform_int(
                0, static_cast<std::int64_t>(doc.size()) - plan_len - 1);
            const std::int64_t text_len =
                static_cast<std::int64_t>(doc.size()) - crop - 1;
            PositionPlan plan;
            switch (plan_kind) {
                case PlanKind::pose: plan = build_pose_plan(ext, text_len, rng); break;
                case PlanKind::randpos:
                    plan = build_randpos_plan(ext, text_len, rng);
                    break;
                case PlanKind::full: plan = build_full_plan(plan_len); break;
            }
            fill_batch_element(plan, doc, crop, batch[static_cast<std::size_t>(b)]);
        }

        // numeric phase, parallel over elements
        auto run_range = [&](int worker) {
            for (std::int64_t b = worker; b < B; b += workers) {
                auto& el = batch[static_cast<std::size_t>(b)];
                auto& grads = elem_grads[static_cast<std::size_t>(b)];
                std::fill(grads.begin(), grads.end(), 0.0);
                forward(model_cfg, rope, result.params, el.tokens, el.positions,
                        caches[static_cast<std::size_t>(b)]);
                elem_loss[static_cast<std::size_t>(b)] = loss_next_token(
                    caches[static_cast<std::size_t>(b)].logits, model_cfg.vocab_size,
                    el.targets);
                backward(model_cfg, rope, result.params,
                         caches[static_cast<std::size_t>(b)], el.tokens, el.positions,
                         el.targets, 1.0 / static_cast<double>(B), grads);
            }
        };
        if (workers == 1) {
            run_range(0);
        } else {
            std::vector<std::thread> pool;
            pool.reserve(static_cast<std::size_t>(workers));
            for (int w = 0; w < workers; ++w) pool.emplace_back(run_range, w);
            for (auto& th : pool) th.join();
        }

        // fixed-order reduction keeps results identical for any worker count
        result.params.zero_grads();
        for (std::int64_t b = 0; b < B; ++b) {
            const auto& g = elem_grads[static_cast<std::size_t>(b)];
            for (std::size_t i = 0; i < g.size(); ++i) {
                result.params.grads[i] += g[i];
            }
        }
        double loss = 0.0;
        for (std::int64_t b = 0; b < B; ++b) {
            loss += elem_loss[static_cast<std::size_t>(b)];
        }
        loss /= static_cast<double>(B);
        adamw_step(result.params, opt, adam);
        result.loss_trace.push_back(loss);
    }
    return result;
}

}  // namespace poselab
