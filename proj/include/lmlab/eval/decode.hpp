#pragma once

#include <functional>
#include <span>
#include <vector>

#include "lmlab/models/model.hpp"

namespace lmlab::eval {

// Returns next-token logits given the tokens generated so far.
using NextLogits = std::function<std::vector<double>(std::span<const TokenId> generated)>;

// Argmax loop, ties to the lowest id. Stops after max_new tokens or when
// `stop` is produced; the stop token is not included in the output.
std::vector<TokenId> greedy_decode(const NextLogits& next, std::size_t max_new, TokenId stop = kEodId);

// Continues `prompt`. With bidirectional_prompt the prompt attends to
// itself bidirectionally (the BiAttn finetuning variant).
std::vector<TokenId> greedy_decode_decllm(const models::Model& model, std::span<const TokenId> prompt,
                                          std::size_t max_new, bool bidirectional_prompt = false);

// Encodes `input` once per step and decodes from [BOT].
std::vector<TokenId> greedy_decode_redllm(const models::Model& model, std::span<const TokenId> input,
                                          std::size_t max_new);

}  // namespace lmlab::eval
