#include "lmlab/eval/attention_stats.hpp"

#include <algorithm>
#include <bit>
#include <fstream>

#include "lmlab/common/error.hpp"

namespace lmlab::eval {

AttentionMap average_attention(std::span<const models::CapturedAttention> captures, models::AttentionSite site) {
    AttentionMap m;
    std::size_t n = 0;
    for (const auto& c : captures) {
        if (c.site != site) continue;
        if (n == 0) {
            m.rows = c.rows;
            m.cols = c.cols;
            m.weights.assign(c.rows * c.cols, 0.0);
        } else if (c.rows != m.rows || c.cols != m.cols) {
            throw InputError("attention captures of one site must share a shape");
        }
        for (const auto& head : c.head_probs) {
            for (std::size_t i = 0; i < head.size(); ++i) m.weights[i] += head[i];
            ++n;
        }
    }
    if (n == 0) throw InputError("no captured attention for site " + models::to_string(site));
    for (auto& w : m.weights) w /= static_cast<double>(n);
    return m;
}

std::vector<double> locality_curve(const AttentionMap& map, std::size_t window) {
    if (window == 0) throw InputError("locality window must be positive");
    if (map.cols < map.rows) throw InputError("locality needs a self-attention map (T_k >= T_q)");
    std::vector<double> out(map.rows, 0.0);
    for (std::size_t t = 0; t < map.rows; ++t) {
        const std::size_t lo = t + 1 >= window ? t + 1 - window : 0;
        for (std::size_t j = lo; j <= t; ++j) out[t] += map.at(t, j);
    }
    return out;
}

std::vector<double> locality_metric(std::span<const models::CapturedAttention> captures, models::AttentionSite site,
                                    std::size_t window) {
    return locality_curve(average_attention(captures, site), window);
}

PooledAttention pool_attention(const AttentionMap& map, std::size_t out) {
    PooledAttention p;
    if (map.rows < out || map.cols < out) {
        p.rows = map.rows;
        p.cols = map.cols;
        p.grid = map.weights;
        p.pooled = false;
        p.note = "input " + std::to_string(map.rows) + "x" + std::to_string(map.cols) + " is smaller than " +
                 std::to_string(out) + "x" + std::to_string(out) + "; emitted unpooled";
        return p;
    }
    p.rows = p.cols = out;
    p.stride_q = map.rows / out;
    p.stride_k = map.cols / out;
    p.grid.assign(out * out, 0.0);
    auto edge = [out](std::size_t i, std::size_t n) { return i * n / out; };
    for (std::size_t bi = 0; bi < out; ++bi) {
        const auto r0 = edge(bi, map.rows), r1 = edge(bi + 1, map.rows);
        for (std::size_t bj = 0; bj < out; ++bj) {
            const auto c0 = edge(bj, map.cols), c1 = edge(bj + 1, map.cols);
            double s = 0.0;
            for (auto r = r0; r < r1; ++r)
                for (auto c = c0; c < c1; ++c) s += map.at(r, c);
            p.grid[bi * out + bj] = s / static_cast<double>((r1 - r0) * (c1 - c0));
        }
    }
    if (map.rows % out || map.cols % out) p.note = "uneven bins: sizes are not multiples of the output grid";
    return p;
}

void write_attention_dump(const std::filesystem::path& dir,
                          const std::vector<std::pair<std::string, AttentionMap>>& maps, const nlohmann::json& meta) {
    static_assert(std::endian::native == std::endian::little);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw InputError("cannot create " + dir.string() + ": " + ec.message());
    std::ofstream bin(dir / "attention.bin", std::ios::binary);
    if (!bin) throw InputError("cannot write " + (dir / "attention.bin").string());
    nlohmann::json tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, m] : maps) {
        std::vector<float> f(m.weights.begin(), m.weights.end());
        const auto bytes = f.size() * sizeof(float);
        bin.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(bytes));
        tensors.push_back({{"name", name}, {"shape", {m.rows, m.cols}}, {"dtype", "float32"},
                           {"offset", offset}, {"bytes", bytes}});
        offset += bytes;
    }
    nlohmann::json manifest{{"format", "lmlab-attention"}, {"version", 1}, {"byte_order", "little"},
                            {"meta", meta}, {"tensors", tensors}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

std::vector<std::pair<std::string, AttentionMap>> read_attention_dump(const std::filesystem::path& dir) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw InputError("no attention manifest in " + dir.string());
    std::ifstream bin(dir / "attention.bin", std::ios::binary);
    if (!bin) throw InputError("missing attention.bin in " + dir.string());
    std::vector<std::pair<std::string, AttentionMap>> out;
    try {
        const auto j = nlohmann::json::parse(mf);
        for (const auto& t : j.at("tensors")) {
            AttentionMap m;
            m.rows = t.at("shape").at(0).get<std::size_t>();
            m.cols = t.at("shape").at(1).get<std::size_t>();
            std::vector<float> f(m.rows * m.cols);
            bin.seekg(static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
            bin.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
            if (!bin) throw InputError("attention.bin truncated");
            m.weights.assign(f.begin(), f.end());
            out.emplace_back(t.at("name").get<std::string>(), std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed attention manifest: " + std::string(e.what()));
    }
    return out;
}

}  // namespace lmlab::eval
