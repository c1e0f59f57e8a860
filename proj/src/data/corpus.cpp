#include "lmlab/data/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lmlab/common/error.hpp"

namespace lmlab::data {

std::size_t Row::loss_tokens() const {
    return static_cast<std::size_t>(std::count(loss_mask.begin(), loss_mask.end(), std::uint8_t{1}));
}

void Row::validate() const {
    if (loss_mask.size() != tokens.size()) throw InputError("row: loss mask length differs from tokens");
    if (prefix_len > tokens.size()) throw InputError("row: prefix longer than row");
    if (loss_tokens() == 0) throw InputError("row: no loss tokens");
    if (!loss_mask.empty() && loss_mask[0]) throw InputError("row: position 0 has nothing to condition on");
}

Batch make_batch(std::vector<Row> rows) {
    Batch b;
    for (const auto& r : rows) {
        r.validate();
        b.width = std::max(b.width, r.tokens.size());
    }
    for (auto& r : rows) {
        r.tokens.resize(b.width, kPadId);
        r.loss_mask.resize(b.width, 0);
    }
    b.rows = std::move(rows);
    return b;
}

namespace {

std::ifstream open(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot read " + path);
    return f;
}

bool blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

template <typename Fn>
void for_each_json_line(const std::string& path, Fn fn) {
    auto f = open(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (blank(line)) continue;
        try {
            fn(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

}  // namespace

std::vector<std::string> read_text_documents(const std::string& path) {
    auto f = open(path);
    std::vector<std::string> docs;
    std::string line, cur;
    bool open_doc = false;
    while (std::getline(f, line)) {
        if (blank(line)) {
            if (open_doc) docs.push_back(std::move(cur));
            cur.clear();
            open_doc = false;
            continue;
        }
        if (open_doc) cur += '\n';
        cur += line;
        open_doc = true;
    }
    if (open_doc) docs.push_back(std::move(cur));
    return docs;
}

std::vector<std::string> read_jsonl_documents(const std::string& path, const std::string& field) {
    std::vector<std::string> docs;
    for_each_json_line(path, [&](const nlohmann::json& j) { docs.push_back(j.at(field).get<std::string>()); });
    return docs;
}

std::vector<std::string> read_documents(const std::string& path) {
    const bool jsonl = path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0;
    return jsonl ? read_jsonl_documents(path) : read_text_documents(path);
}

std::vector<Row> chunk_tokens(std::span<const std::vector<TokenId>> documents, std::size_t seq_len,
                              ChunkMode mode) {
    if (documents.empty()) throw InputError("chunk: empty document stream");
    if (seq_len < 2) throw InputError("chunk: sequence length must be at least 2");
    if (mode == ChunkMode::Prefix && seq_len % 2 != 0) throw InputError("chunk: prefix mode needs an even T");

    std::vector<TokenId> stream;
    for (const auto& d : documents) {
        stream.insert(stream.end(), d.begin(), d.end());
        stream.push_back(kEodId);
    }
    const std::size_t k = mode == ChunkMode::Prefix ? seq_len / 2 : 0;
    std::vector<Row> rows;
    for (std::size_t off = 0; off + seq_len <= stream.size(); off += seq_len) {
        Row r;
        r.tokens.assign(stream.begin() + static_cast<std::ptrdiff_t>(off),
                        stream.begin() + static_cast<std::ptrdiff_t>(off + seq_len));
        r.prefix_len = k;
        r.loss_mask.assign(seq_len, 1);
        if (mode == ChunkMode::Causal) {
            r.loss_mask[0] = 0;
        } else {
            std::fill(r.loss_mask.begin(), r.loss_mask.begin() + static_cast<std::ptrdiff_t>(k), 0);
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<Row> chunk_pretrain(std::span<const std::string> documents, const Tokenizer& tok,
                                std::size_t seq_len, ChunkMode mode) {
    std::vector<std::vector<TokenId>> ids;
    ids.reserve(documents.size());
    for (const auto& d : documents) ids.push_back(tok.encode(d));
    return chunk_tokens(ids, seq_len, mode);
}

std::vector<FinetuneExample> read_finetune_jsonl(const std::string& path) {
    std::vector<FinetuneExample> out;
    for_each_json_line(path, [&](const nlohmann::json& j) {
        out.push_back({j.at("input").get<std::string>(), j.at("target").get<std::string>()});
    });
    return out;
}

Row format_finetune(const FinetuneExample& ex, const Tokenizer& tok, FinetuneLimits limits) {
    auto input = tok.encode(ex.input);
    auto target = tok.encode(ex.target);
    target.push_back(kEodId);
    if (input.size() > limits.max_input) input.resize(limits.max_input);
    if (target.size() > limits.max_output) target.resize(limits.max_output);
    if (input.empty()) throw InputError("finetune: empty input");
    if (target.empty()) throw InputError("finetune: target fully truncated");

    Row r;
    r.prefix_len = input.size();
    r.tokens = std::move(input);
    r.tokens.insert(r.tokens.end(), target.begin(), target.end());
    r.loss_mask.assign(r.tokens.size(), 0);
    std::fill(r.loss_mask.begin() + static_cast<std::ptrdiff_t>(r.prefix_len), r.loss_mask.end(), 1);
    return r;
}

}  // namespace lmlab::data
