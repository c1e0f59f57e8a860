#include "lmlab/models/mask.hpp"

#include "lmlab/common/error.hpp"

namespace lmlab::models {

bool AttentionMask::visible(std::size_t i, std::size_t j) const {
    switch (kind) {
        case MaskKind::Causal: return j <= i;
        case MaskKind::Full: return true;
        case MaskKind::PrefixBidirectional: return j < prefix || j <= i;
    }
    return false;
}

std::vector<std::uint8_t> AttentionMask::build(std::size_t rows, std::size_t cols,
                                               const std::vector<std::uint8_t>& key_valid) const {
    if (!key_valid.empty() && key_valid.size() != cols) {
        throw ShapeError("mask: key validity vector must have one entry per key");
    }
    std::vector<std::uint8_t> keep(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            const bool valid = key_valid.empty() || key_valid[j] != 0;
            keep[i * cols + j] = (valid && visible(i, j)) ? 1 : 0;
        }
    }
    return keep;
}

}  // namespace lmlab::models
