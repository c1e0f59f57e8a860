#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmlab/models/model.hpp"

namespace lmlab::eval {

// Dense row-major matrix of averaged attention weights.
struct AttentionMap {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> weights;

    double at(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
};

// Mean over every head of every capture of the given site. All captures
// must share one shape. Throws InputError when nothing was captured.
AttentionMap average_attention(std::span<const models::CapturedAttention> captures,
                               models::AttentionSite site);

// Attention mass each query t puts on keys [t-window+1, t] (clipped at 0).
std::vector<double> locality_curve(const AttentionMap& map, std::size_t window = 5);
std::vector<double> locality_metric(std::span<const models::CapturedAttention> captures,
                                    models::AttentionSite site = models::AttentionSite::DecoderSelf,
                                    std::size_t window = 5);

struct PooledAttention {
    std::size_t rows = 0;  // query bins (y)
    std::size_t cols = 0;  // key bins (x)
    std::vector<double> grid;
    std::size_t stride_q = 1;
    std::size_t stride_k = 1;
    bool pooled = true;
    std::string note;
};

// Mean pooling to out×out. Bin i covers [floor(i·R/out), floor((i+1)·R/out)),
// so strides are exact when the size is a multiple of out. A map smaller
// than out on either axis is returned unpooled with a note.
PooledAttention pool_attention(const AttentionMap& map, std::size_t out = 128);

// manifest.json + attention.bin (little-endian float32), one tensor per
// entry, laid out like a checkpoint.
void write_attention_dump(const std::filesystem::path& dir,
                          const std::vector<std::pair<std::string, AttentionMap>>& maps,
                          const nlohmann::json& meta = nlohmann::json::object());
std::vector<std::pair<std::string, AttentionMap>> read_attention_dump(const std::filesystem::path& dir);

}  // namespace lmlab::eval
