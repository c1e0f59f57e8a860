#pragma once

#include <cstdint>

namespace lmlab {

using TokenId = std::int32_t;

// Byte-level vocabulary layout: ids 0-255 are raw bytes, followed by the
// special tokens, followed by learned merges.
inline constexpr TokenId kEodId = 256;  // document separator
inline constexpr TokenId kPadId = 257;
inline constexpr TokenId kBotId = 258;  // first decoder input of the encoder-decoder model
inline constexpr TokenId kFirstMergeId = 259;

}  // namespace lmlab
