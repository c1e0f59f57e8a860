#pragma once

#include <cstdint>
#include <vector>

namespace lmlab::models {

enum class MaskKind { Causal, Full, PrefixBidirectional };

// Query-by-key visibility pattern.
//   causal:                   (i, j) visible iff j <= i
//   full:                     every (i, j) visible
//   prefix_bidirectional(k):  visible iff j < k or j <= i
struct AttentionMask {
    MaskKind kind = MaskKind::Causal;
    std::size_t prefix = 0;  // k, PrefixBidirectional only

    static AttentionMask causal() { return {MaskKind::Causal, 0}; }
    static AttentionMask full() { return {MaskKind::Full, 0}; }
    static AttentionMask prefix_bidirectional(std::size_t k) {
        return {MaskKind::PrefixBidirectional, k};
    }

    bool visible(std::size_t i, std::size_t j) const;

    // Row-major T_q×T_k keep-matrix. Keys whose `key_valid` entry is zero
    // (padding) are hidden from every query.
    std::vector<std::uint8_t> build(std::size_t rows, std::size_t cols,
                                    const std::vector<std::uint8_t>& key_valid = {}) const;

    bool operator==(const AttentionMask&) const = default;
};

}  // namespace lmlab::models
