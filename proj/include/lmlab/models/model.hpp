#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lmlab/common/tokens.hpp"
#include "lmlab/layers/layers.hpp"
#include "lmlab/models/config.hpp"
#include "lmlab/models/mask.hpp"
#include "lmlab/numerics/tensor.hpp"

namespace lmlab::models {

// Ordered, named parameter tensors. Iteration order is the creation order
// and is what checkpoints and the optimizer use.
class ParamSet {
public:
    Tensor& add(std::string name, Tensor value);
    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    bool contains(const std::string& name) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t total_elements() const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void zero_grad();

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
};

enum class AttentionSite { EncoderSelf, DecoderSelf, Cross };
std::string to_string(AttentionSite site);

// One attention call's softmax weights, per head.
struct CapturedAttention {
    AttentionSite site = AttentionSite::DecoderSelf;
    std::size_t layer = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::vector<double>> head_probs;
    double max_abs_logit = 0.0;
    std::vector<std::int64_t> q_positions;
    std::vector<std::int64_t> k_positions;
};

struct ForwardOptions {
    bool capture_attention = false;
    double dropout = 0.0;                // applied to attention and FFN outputs
    std::mt19937_64* rng = nullptr;      // required when dropout > 0
    bool extrapolate = false;            // allow sequences longer than max_seq
};

struct ForwardOutput {
    // DecLLM: [T×V], row t predicts token t+1.
    // RedLLM: [(T-k)×V], row t predicts target token t.
    Tensor logits;
    std::vector<std::int64_t> positions;          // rotary positions of the decoder queries
    std::vector<std::int64_t> encoder_positions;  // RedLLM only
    Tensor encoder_states;                        // RedLLM only, post final norm
    std::vector<CapturedAttention> attention;     // when capture_attention
};

struct InitOptions {
    // Zero gain on the decoder's final norm: a fresh model predicts the
    // uniform distribution (loss ln V).
    bool zero_output_gain = true;
};

class Model {
public:
    Model(ModelConfig cfg, std::uint64_t seed, InitOptions init = {});
    Model(ModelConfig cfg, ParamSet params);

    const ModelConfig& config() const { return cfg_; }
    ParamSet& params() { return params_; }
    const ParamSet& params() const { return params_; }

    // Decoder-only forward. `mask` is causal for pretraining or
    // prefix_bidirectional(k) for the bidirectional-input finetuning variant.
    ForwardOutput forward_decllm(std::span<const TokenId> tokens,
                                 AttentionMask mask = AttentionMask::causal(),
                                 const ForwardOptions& opts = {}) const;

    // Encoder-decoder forward: the encoder reads `input` (positions 0..k-1)
    // with full self-attention; the decoder reads [BOT] + target[0..n-2] at
    // positions k..k+n-1 with causal self-attention and cross-attention.
    ForwardOutput forward_redllm(std::span<const TokenId> input, std::span<const TokenId> target,
                                 const ForwardOptions& opts = {}) const;

private:
    ModelConfig cfg_;
    ParamSet params_;
};

// Parameter names and shapes in creation order.
std::vector<std::pair<std::string, Shape>> param_layout(const ModelConfig& cfg);

// Exact parameter count of a config; the tied embedding is counted once.
std::size_t count_params(const ModelConfig& cfg);
std::size_t count_embedding_params(const ModelConfig& cfg);
inline std::size_t count_nonembedding_params(const ModelConfig& cfg) {
    return count_params(cfg) - count_embedding_params(cfg);
}

}  // namespace lmlab::models
