#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "lmlab/common/tokens.hpp"

namespace lmlab::data {

struct Merge {
    TokenId left = 0;
    TokenId right = 0;
    TokenId result = 0;
};

// Byte-level BPE. Every byte has its own id, so any input round-trips.
class Tokenizer {
public:
    // Bytes and special tokens only.
    Tokenizer();
    Tokenizer(std::vector<std::string> vocab, std::vector<Merge> merges);

    std::vector<TokenId> encode(std::string_view text) const;
    std::string decode(std::span<const TokenId> ids) const;

    std::size_t vocab_size() const { return vocab_.size(); }
    const std::vector<std::string>& vocab() const { return vocab_; }
    const std::vector<Merge>& merges() const { return merges_; }
    const std::string& token(TokenId id) const;

    nlohmann::json to_json() const;
    static Tokenizer from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static Tokenizer load(const std::string& path);

private:
    void encode_word(std::string_view word, std::vector<TokenId>& out) const;

    std::vector<std::string> vocab_;
    std::vector<Merge> merges_;
    std::unordered_map<std::uint64_t, std::uint32_t> rank_;  // (left, right) -> merge index
};

// Pre-tokenisation shared by training and encoding: a new word starts at
// every space or newline, which stays attached to the following text.
std::vector<std::string_view> split_words(std::string_view text);

struct TrainResult {
    Tokenizer tokenizer;
    bool complete = true;  // false when the corpus ran out of pairs first
    std::string warning;
};

// Greedy merges by weighted pair frequency. Ties go to the pair whose
// (left, right) byte strings compare lowest. A merge whose string already
// exists reuses that id instead of taking a new slot.
TrainResult bpe_train(std::span<const std::string> documents, std::size_t vocab_size);

inline std::uint64_t pair_key(TokenId a, TokenId b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
}

}  // namespace lmlab::data
