#pragma once

#include <cstddef>

#include "lmlab/models/config.hpp"

namespace lmlab::models {

enum class FlopsMode { Train, Infer };

// Sequence split for the FLOPs estimate. Decoder-only: total length T and
// k ignored. Encoder-decoder: k encoder tokens and T-k decoder tokens.
struct SeqShape {
    std::size_t total = 0;
    std::size_t prefix = 0;
};

// Matmul-dominated breakdown of one forward pass (2·m·k·n per matmul).
// Attention products count the full T_q×T_k grid, masked or not.
struct FlopsBreakdown {
    double projections = 0.0;     // Q, K, V, O (self and cross)
    double attention_scores = 0.0;  // Q·Kᵀ
    double attention_context = 0.0; // P·V
    double ffn = 0.0;
    double unembed = 0.0;

    double total() const {
        return projections + attention_scores + attention_context + ffn + unembed;
    }
};

FlopsBreakdown forward_flops(const ModelConfig& cfg, SeqShape seq);

// Forward count, times three in training mode (forward + backward).
double flops_per_sequence(const ModelConfig& cfg, SeqShape seq, FlopsMode mode);

}  // namespace lmlab::models
