#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lmlab/common/tokens.hpp"
#include "lmlab/data/tokenizer.hpp"

namespace lmlab::data {

// One training or evaluation sequence.
//   tokens[0, prefix_len)   conditioning input (encoder input for RedLLM)
//   tokens[prefix_len, n)   continuation
// loss_mask[t] marks token t as a prediction target. A decoder-only model
// predicts t from tokens < t; the encoder-decoder model predicts targets
// from the prefix and the targets before t.
struct Row {
    std::vector<TokenId> tokens;
    std::size_t prefix_len = 0;
    std::vector<std::uint8_t> loss_mask;

    std::size_t loss_tokens() const;
    // Throws InputError on size mismatch, an empty loss mask, or a loss
    // position that nothing can predict (t == 0).
    void validate() const;
};

// Rows padded with [PAD] to a common width; pad positions carry no loss.
struct Batch {
    std::vector<Row> rows;
    std::size_t width = 0;
};

Batch make_batch(std::vector<Row> rows);

// Corpus readers. Plain text: documents are separated by one or more
// blank lines. JSONL: one object per line, document text in "text".
std::vector<std::string> read_text_documents(const std::string& path);
std::vector<std::string> read_jsonl_documents(const std::string& path, const std::string& field = "text");
// Chooses the reader by extension (.jsonl → JSONL).
std::vector<std::string> read_documents(const std::string& path);

enum class ChunkMode { Causal, Prefix };

// Documents are joined with [EOD] after each one and cut into consecutive
// length-T rows; a final partial row is dropped. Prefix mode splits every
// row at k = T/2 regardless of document boundaries.
std::vector<Row> chunk_tokens(std::span<const std::vector<TokenId>> documents, std::size_t seq_len,
                              ChunkMode mode);
std::vector<Row> chunk_pretrain(std::span<const std::string> documents, const Tokenizer& tok,
                                std::size_t seq_len, ChunkMode mode);

struct FinetuneExample {
    std::string input;
    std::string target;
};

std::vector<FinetuneExample> read_finetune_jsonl(const std::string& path);

struct FinetuneLimits {
    std::size_t max_input = 2048;
    std::size_t max_output = 512;
};

// Input and target are truncated to their heads; the target ends with
// [EOD] when it fits. The row is the same for both architectures
// (prefix_len = input length, loss on target only); the model decides
// whether the prefix goes to an encoder, a bidirectional prefix mask, or a
// causal mask.
Row format_finetune(const FinetuneExample& ex, const Tokenizer& tok, FinetuneLimits limits = {});

}  // namespace lmlab::data
