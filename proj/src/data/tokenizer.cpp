#include "lmlab/data/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "lmlab/common/error.hpp"

namespace lmlab::data {

namespace {

const char* const kSpecialNames[] = {"[EOD]", "[PAD]", "[BOT]"};

std::vector<std::string> base_vocab() {
    std::vector<std::string> v;
    v.reserve(kFirstMergeId);
    for (int b = 0; b < 256; ++b) v.emplace_back(1, static_cast<char>(b));
    for (const char* s : kSpecialNames) v.emplace_back(s);
    return v;
}

std::string to_hex(const std::string& s) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(2 * s.size());
    for (unsigned char c : s) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 15]);
    }
    return out;
}

std::string from_hex(const std::string& h) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        throw InputError("tokenizer: bad hex digit in vocab");
    };
    if (h.size() % 2) throw InputError("tokenizer: odd-length hex vocab entry");
    std::string out(h.size() / 2, '\0');
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<char>(nibble(h[2 * i]) * 16 + nibble(h[2 * i + 1]));
    }
    return out;
}

bool is_special(TokenId id) { return id >= kEodId && id < kFirstMergeId; }

}  // namespace

std::vector<std::string_view> split_words(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 1; i < text.size(); ++i) {
        if (text[i] == ' ' || text[i] == '\n') {
            out.push_back(text.substr(start, i - start));
            start = i;
        }
    }
    if (start < text.size()) out.push_back(text.substr(start));
    return out;
}

Tokenizer::Tokenizer() : vocab_(base_vocab()) {}

Tokenizer::Tokenizer(std::vector<std::string> vocab, std::vector<Merge> merges)
    : vocab_(std::move(vocab)), merges_(std::move(merges)) {
    const auto base = base_vocab();
    if (vocab_.size() < base.size() || !std::equal(base.begin(), base.end(), vocab_.begin())) {
        throw InputError("tokenizer: vocab must start with the 256 bytes and the special tokens");
    }
    const auto n = static_cast<TokenId>(vocab_.size());
    for (std::size_t i = 0; i < merges_.size(); ++i) {
        const auto& m = merges_[i];
        for (TokenId id : {m.left, m.right, m.result}) {
            if (id < 0 || id >= n || is_special(id)) throw InputError("tokenizer: merge references invalid id");
        }
        if (vocab_[m.result] != vocab_[m.left] + vocab_[m.right]) {
            throw InputError("tokenizer: merge " + std::to_string(i) + " does not concatenate its parts");
        }
        rank_.emplace(pair_key(m.left, m.right), static_cast<std::uint32_t>(i));
    }
}

const std::string& Tokenizer::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size()) {
        throw InputError("tokenizer: id " + std::to_string(id) + " out of range");
    }
    return vocab_[static_cast<std::size_t>(id)];
}

void Tokenizer::encode_word(std::string_view word, std::vector<TokenId>& out) const {
    std::vector<TokenId> ids;
    ids.reserve(word.size());
    for (unsigned char c : word) ids.push_back(c);
    while (ids.size() > 1) {
        std::uint32_t best = UINT32_MAX;
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
            auto it = rank_.find(pair_key(ids[i], ids[i + 1]));
            if (it != rank_.end()) best = std::min(best, it->second);
        }
        if (best == UINT32_MAX) break;
        const auto& m = merges_[best];
        std::size_t w = 0;
        for (std::size_t r = 0; r < ids.size(); ++r) {
            if (r + 1 < ids.size() && ids[r] == m.left && ids[r + 1] == m.right) {
                ids[w++] = m.result;
                ++r;
            } else {
                ids[w++] = ids[r];
            }
        }
        ids.resize(w);
    }
    out.insert(out.end(), ids.begin(), ids.end());
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
    std::vector<TokenId> out;
    for (auto w : split_words(text)) encode_word(w, out);
    return out;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) out += token(id);
    return out;
}

nlohmann::json Tokenizer::to_json() const {
    nlohmann::json vocab = nlohmann::json::array();
    for (const auto& t : vocab_) vocab.push_back(to_hex(t));
    nlohmann::json merges = nlohmann::json::array();
    for (const auto& m : merges_) merges.push_back({m.left, m.right, m.result});
    return {{"format", "byte-bpe"},
            {"vocab_encoding", "hex"},
            {"special", {{"[EOD]", kEodId}, {"[PAD]", kPadId}, {"[BOT]", kBotId}}},
            {"vocab", vocab},
            {"merges", merges}};
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "byte-bpe") throw InputError("tokenizer: unknown format");
        std::vector<std::string> vocab;
        for (const auto& h : j.at("vocab")) vocab.push_back(from_hex(h.get<std::string>()));
        std::vector<Merge> merges;
        for (const auto& m : j.at("merges")) {
            merges.push_back({m.at(0).get<TokenId>(), m.at(1).get<TokenId>(), m.at(2).get<TokenId>()});
        }
        return Tokenizer(std::move(vocab), std::move(merges));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("tokenizer: malformed JSON: ") + e.what());
    }
}

void Tokenizer::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw InputError("cannot write " + path);
    f << to_json().dump(1) << '\n';
}

Tokenizer Tokenizer::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot read tokenizer " + path);
    try {
        return from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

TrainResult bpe_train(std::span<const std::string> documents, std::size_t vocab_size) {
    if (vocab_size <= static_cast<std::size_t>(kFirstMergeId)) {
        throw InputError("bpe_train: vocab_size must exceed 256 bytes + 3 special tokens");
    }
    std::map<std::string_view, std::int64_t> word_counts;
    for (const auto& doc : documents) {
        for (auto w : split_words(doc)) ++word_counts[w];
    }
    if (word_counts.empty()) throw InputError("bpe_train: empty corpus");

    std::vector<std::vector<TokenId>> words;
    std::vector<std::int64_t> freq;
    for (const auto& [w, c] : word_counts) {
        words.emplace_back(w.begin(), w.end());
        for (auto& id : words.back()) id = static_cast<unsigned char>(id);
        freq.push_back(c);
    }

    std::vector<std::string> vocab = base_vocab();
    std::unordered_map<std::string, TokenId> lookup;
    for (int b = 0; b < 256; ++b) lookup.emplace(vocab[b], b);

    struct Entry {
        std::int64_t count;
        TokenId left, right;
    };
    auto before = [&vocab](const Entry& a, const Entry& b) {
        if (a.count != b.count) return a.count > b.count;
        if (int c = vocab[a.left].compare(vocab[b.left]); c != 0) return c < 0;
        if (int c = vocab[a.right].compare(vocab[b.right]); c != 0) return c < 0;
        return pair_key(a.left, a.right) < pair_key(b.left, b.right);
    };
    std::set<Entry, decltype(before)> queue(before);
    std::unordered_map<std::uint64_t, std::int64_t> counts;
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> where;

    auto apply_delta = [&](std::unordered_map<std::uint64_t, std::int64_t>& delta) {
        for (const auto& [key, d] : delta) {
            if (d == 0) continue;
            const auto l = static_cast<TokenId>(key >> 32), r = static_cast<TokenId>(key & 0xffffffffu);
            auto& c = counts[key];
            if (c > 0) queue.erase(Entry{c, l, r});
            c += d;
            if (c > 0) queue.insert(Entry{c, l, r});
        }
    };

    {
        std::unordered_map<std::uint64_t, std::int64_t> init;
        for (std::uint32_t w = 0; w < words.size(); ++w) {
            for (std::size_t i = 0; i + 1 < words[w].size(); ++i) {
                const auto key = pair_key(words[w][i], words[w][i + 1]);
                init[key] += freq[w];
                where[key].push_back(w);
            }
        }
        apply_delta(init);
    }

    TrainResult result;
    std::vector<Merge> merges;
    while (vocab.size() < vocab_size && !queue.empty()) {
        const Entry best = *queue.begin();
        const std::string joined = vocab[best.left] + vocab[best.right];
        TokenId id;
        if (auto it = lookup.find(joined); it != lookup.end()) {
            id = it->second;
        } else {
            id = static_cast<TokenId>(vocab.size());
            vocab.push_back(joined);
            lookup.emplace(joined, id);
        }
        merges.push_back({best.left, best.right, id});

        const auto key = pair_key(best.left, best.right);
        auto affected = std::move(where[key]);
        where.erase(key);
        std::sort(affected.begin(), affected.end());
        affected.erase(std::unique(affected.begin(), affected.end()), affected.end());

        std::unordered_map<std::uint64_t, std::int64_t> delta;
        for (auto w : affected) {
            auto& sym = words[w];
            bool hit = false;
            for (std::size_t i = 0; i + 1 < sym.size() && !hit; ++i) {
                hit = sym[i] == best.left && sym[i + 1] == best.right;
            }
            if (!hit) continue;
            for (std::size_t i = 0; i + 1 < sym.size(); ++i) delta[pair_key(sym[i], sym[i + 1])] -= freq[w];
            std::vector<TokenId> next;
            next.reserve(sym.size());
            for (std::size_t i = 0; i < sym.size(); ++i) {
                if (i + 1 < sym.size() && sym[i] == best.left && sym[i + 1] == best.right) {
                    next.push_back(id);
                    ++i;
                } else {
                    next.push_back(sym[i]);
                }
            }
            sym = std::move(next);
            for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
                const auto k = pair_key(sym[i], sym[i + 1]);
                delta[k] += freq[w];
                where[k].push_back(w);
            }
        }
        apply_delta(delta);
    }
    if (vocab.size() < vocab_size) {
        result.complete = false;
        result.warning = "corpus exhausted after " + std::to_string(merges.size()) +
                         " merges; vocabulary has " + std::to_string(vocab.size()) +
                         " of the requested " + std::to_string(vocab_size) + " entries";
    }
    result.tokenizer = Tokenizer(std::move(vocab), std::move(merges));
    return result;
}

}  // namespace lmlab::data
