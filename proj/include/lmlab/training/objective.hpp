#pragma once

#include <span>
#include <vector>

#include "lmlab/data/corpus.hpp"
#include "lmlab/models/model.hpp"
#include "lmlab/numerics/tensor.hpp"

namespace lmlab::training {

// How a decoder-only model treats a row's prefix. Ignored by the
// encoder-decoder model, whose encoder always reads the prefix.
enum class PrefixAttention { Causal, Bidirectional };

// Model logits lined up with the row's targets: logits row i predicts
// targets[i], counted when mask[i] is set.
struct AlignedRow {
    models::ForwardOutput output;
    std::vector<TokenId> targets;
    std::vector<std::uint8_t> mask;

    const Tensor& logits() const { return output.logits; }
    std::size_t count() const;
};

// Runs the right forward pass for the model's architecture. Throws
// InputError when the row cannot be scored by it (loss inside an
// encoder prefix, empty prefix for the encoder-decoder model).
AlignedRow forward_row(const models::Model& model, const data::Row& row,
                       PrefixAttention prefix = PrefixAttention::Causal,
                       const models::ForwardOptions& opts = {});

inline constexpr double kZLossCoef = 1e-4;

struct LossTerms {
    Tensor objective;  // nll + z
    Tensor nll;
    Tensor z;
};

// nll = Σ_masked (lse_i − logit_i[target_i]) / denominator
// z   = coef · Σ_masked lse_i² / denominator
// The denominator defaults to the masked count (a per-row mean); pass the
// batch-wide count to make per-row terms sum to the batch mean.
LossTerms lm_loss(const Tensor& logits, std::span<const TokenId> targets,
                  std::span<const std::uint8_t> mask, double denominator = 0.0,
                  double z_coef = kZLossCoef);

}  // namespace lmlab::training
