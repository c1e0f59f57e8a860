#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lmlab/numerics/tensor.hpp"

namespace lmlab::layers {

inline constexpr double kNormEps = 1e-6;

// y = x / rms(x) over the last axis, times `gain` when it is defined.
// The attention-internal norms are the parameter-free form.
Tensor rmsnorm(const Tensor& x, const Tensor& gain = {}, double eps = kNormEps);

struct RotaryConfig {
    double base_frequency = 10000.0;
    std::size_t head_dim = 0;

    // θ_i = base^(-2i/d_h), i = 0 .. d_h/2 - 1. Throws ShapeError for odd d_h.
    std::vector<double> frequencies() const;
};

// Rotates each consecutive pair (2i, 2i+1) of row t by positions[t]·θ_i.
Tensor rotary_apply(const Tensor& x, std::span<const std::int64_t> positions,
                    const RotaryConfig& cfg);

struct AttentionParams {
    Tensor w_q;  // [d × h·d_h]
    Tensor w_k;  // [d × h·d_h]
    Tensor w_v;  // [d × h·d_h]
    Tensor w_o;  // [h·d_h × d]
    std::size_t heads = 0;
    std::size_t head_dim = 0;
    bool use_output_norm = false;  // encoder-decoder variant: norm the per-head output

    void validate() const;
};

// Optional instrumentation filled by attention().
struct AttentionTrace {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::vector<double>> head_probs;  // per head, rows×cols
    double max_abs_logit = 0.0;                  // before masking, across heads
    std::vector<std::int64_t> q_positions;
    std::vector<std::int64_t> k_positions;
};

// Multi-head attention with parameter-free RMSNorm on Q, K, V per head,
// rotary on Q and K after the norm, and the optional output norm.
// `keep` is a row-major T_q×T_k visibility mask (1 = attend).
Tensor attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& params,
                 std::span<const std::int64_t> q_positions,
                 std::span<const std::int64_t> k_positions, std::span<const std::uint8_t> keep,
                 const RotaryConfig& rotary, AttentionTrace* trace = nullptr);

// w_out(silu(x·w_gate) ⊙ (x·w_in)).
Tensor swiglu_ffn(const Tensor& x, const Tensor& w_in, const Tensor& w_gate, const Tensor& w_out);

// One matrix E[V×d] shared by every embedding and the output projection.
Tensor tied_embed(const Tensor& table, std::span<const std::int32_t> ids);
Tensor tied_unembed(const Tensor& hidden, const Tensor& table);

}  // namespace lmlab::layers
