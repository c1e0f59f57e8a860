#include <algorithm>
#include <cmath>

#include "lmlab/common/error.hpp"
#include "lmlab/layers/layers.hpp"
#include "lmlab/numerics/ops.hpp"

namespace lmlab::layers {

void AttentionParams::validate() const {
    if (heads == 0 || head_dim == 0) throw ShapeError("attention: heads and head_dim must be > 0");
    if (head_dim % 2 != 0) throw ShapeError("attention: head_dim must be even for rotary");
    const auto inner = heads * head_dim;
    for (const Tensor* w : {&w_q, &w_k, &w_v}) {
        if (w->rank() != 2 || w->dim(1) != inner) {
            throw ShapeError("attention: projection width must be h·d_h = " + std::to_string(inner));
        }
    }
    if (w_o.rank() != 2 || w_o.dim(0) != inner) {
        throw ShapeError("attention: output projection input width must be h·d_h");
    }
    if (w_k.dim(0) != w_v.dim(0)) throw ShapeError("attention: key/value input widths differ");
}

Tensor attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                 std::span<const std::int64_t> q_positions,
                 std::span<const std::int64_t> k_positions, std::span<const std::uint8_t> keep,
                 const RotaryConfig& rotary, AttentionTrace* trace) {
    p.validate();
    const auto tq = q_in.dim(0), tk = kv_in.dim(0);
    if (q_positions.size() != tq || k_positions.size() != tk) {
        throw ShapeError("attention: position vectors must match sequence lengths");
    }
    if (keep.size() != tq * tk) throw ShapeError("attention: mask must be T_q×T_k");
    for (std::size_t i = 0; i < tq; ++i) {
        if (std::none_of(keep.begin() + static_cast<std::ptrdiff_t>(i * tk),
                         keep.begin() + static_cast<std::ptrdiff_t>((i + 1) * tk),
                         [](std::uint8_t v) { return v != 0; })) {
            throw ShapeError("attention: query row " + std::to_string(i) + " is fully masked");
        }
    }

    const Tensor q_all = ops::matmul(q_in, p.w_q);
    const Tensor k_all = ops::matmul(kv_in, p.w_k);
    const Tensor v_all = ops::matmul(kv_in, p.w_v);
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.head_dim));

    if (trace) {
        trace->rows = tq;
        trace->cols = tk;
        trace->head_probs.clear();
        trace->max_abs_logit = 0.0;
        trace->q_positions.assign(q_positions.begin(), q_positions.end());
        trace->k_positions.assign(k_positions.begin(), k_positions.end());
    }

    std::vector<Tensor> heads;
    heads.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
        const auto off = h * p.head_dim;
        Tensor q = rotary_apply(rmsnorm(ops::slice_cols(q_all, off, p.head_dim)), q_positions, rotary);
        Tensor k = rotary_apply(rmsnorm(ops::slice_cols(k_all, off, p.head_dim)), k_positions, rotary);
        Tensor v = rmsnorm(ops::slice_cols(v_all, off, p.head_dim));
        Tensor logits = ops::scale(ops::matmul_nt(q, k), inv_sqrt);
        Tensor probs = ops::softmax(logits, -1, keep);
        Tensor out = ops::matmul(probs, v);
        if (p.use_output_norm) out = rmsnorm(out);
        if (trace) {
            for (double l : logits.data()) trace->max_abs_logit = std::max(trace->max_abs_logit, std::abs(l));
            trace->head_probs.emplace_back(probs.data().begin(), probs.data().end());
        }
        heads.push_back(std::move(out));
    }
    Tensor merged = heads.size() == 1 ? heads.front() : ops::concat_cols(heads);
    return ops::matmul(merged, p.w_o);
}

Tensor swiglu_ffn(const Tensor& x, const Tensor& w_in, const Tensor& w_gate, const Tensor& w_out) {
    if (w_in.shape() != w_gate.shape()) throw ShapeError("swiglu: w_in and w_gate shapes differ");
    if (w_out.rank() != 2 || w_in.rank() != 2 || w_out.dim(0) != w_in.dim(1)) {
        throw ShapeError("swiglu: w_out input width must equal d_ffn");
    }
    Tensor gate = ops::silu(ops::matmul(x, w_gate));
    Tensor lin = ops::matmul(x, w_in);
    return ops::matmul(ops::mul(gate, lin), w_out);
}

Tensor tied_embed(const Tensor& table, std::span<const std::int32_t> ids) {
    return ops::embedding(table, ids);
}

Tensor tied_unembed(const Tensor& hidden, const Tensor& table) {
    return ops::matmul_nt(hidden, table);
}

}  // namespace lmlab::layers
