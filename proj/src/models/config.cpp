#include "lmlab/models/config.hpp"

#include <algorithm>

#include "lmlab/common/error.hpp"
#include "lmlab/common/tokens.hpp"

namespace lmlab::models {

std::string to_string(Arch arch) { return arch == Arch::DecLLM ? "DecLLM" : "RedLLM"; }

Arch arch_from_string(const std::string& s) {
    if (s == "DecLLM" || s == "dec") return Arch::DecLLM;
    if (s == "RedLLM" || s == "red") return Arch::RedLLM;
    throw InputError("unknown arch '" + s + "' (expected DecLLM or RedLLM)");
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& m) { throw InputError("model config: " + m); };
    if (d == 0 || d_ffn == 0 || h == 0 || d_h == 0) fail("dimensions must be positive");
    if (d_h % 2 != 0) fail("d_h must be even (rotary rotates dimension pairs)");
    if (vocab_size < static_cast<std::size_t>(kFirstMergeId)) {
        fail("vocab_size must cover the 256 bytes and special tokens");
    }
    if (max_seq == 0) fail("max_seq must be positive");
    if (arch == Arch::DecLLM) {
        if (L_dec == 0) fail("L_dec must be positive");
    } else {
        if (L_enc == 0 || L_dec_red == 0) fail("L_enc and L_dec_red must be positive");
        if (L_enc != L_dec_red) fail("encoder-decoder model must be balanced (L_enc == L_dec_red)");
    }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"arch", to_string(c.arch)},
                       {"d", c.d},
                       {"d_ffn", c.d_ffn},
                       {"h", c.h},
                       {"d_h", c.d_h},
                       {"L_dec", c.L_dec},
                       {"L_enc", c.L_enc},
                       {"L_dec_red", c.L_dec_red},
                       {"vocab_size", c.vocab_size},
                       {"max_seq", c.max_seq},
                       {"size_tag", c.size_tag},
                       {"rotary_base", c.rotary_base}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    static const std::vector<std::string> known{"arch", "d", "d_ffn", "h", "d_h", "L_dec", "L_enc",
                                                "L_dec_red", "vocab_size", "max_seq", "size_tag",
                                                "rotary_base"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw InputError("model config: unknown field '" + key + "'");
        }
    }
    ModelConfig out;
    try {
        out.arch = arch_from_string(j.at("arch").get<std::string>());
        out.d = j.at("d").get<std::size_t>();
        out.d_ffn = j.at("d_ffn").get<std::size_t>();
        out.h = j.at("h").get<std::size_t>();
        out.d_h = j.at("d_h").get<std::size_t>();
        out.L_dec = j.value("L_dec", std::size_t{0});
        out.L_enc = j.value("L_enc", std::size_t{0});
        out.L_dec_red = j.value("L_dec_red", std::size_t{0});
        out.vocab_size = j.at("vocab_size").get<std::size_t>();
        out.max_seq = j.at("max_seq").get<std::size_t>();
        out.size_tag = j.value("size_tag", std::string("custom"));
        out.rotary_base = j.value("rotary_base", 10000.0);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("model config: ") + e.what());
    }
    out.validate();
    c = out;
}

namespace {

struct Row {
    const char* tag;
    std::size_t d, d_ffn, h, d_h, l_dec, l_red;
};

// Model Size | d | d_ffn | h | d_h | L_dec | L_red (per side)
constexpr Row kTable[] = {
    {"150M", 1024, 4096, 8, 128, 8, 3},    {"1B", 2048, 8192, 16, 128, 16, 7},
    {"2B", 2560, 10240, 20, 128, 20, 9},   {"4B", 3072, 12288, 24, 128, 24, 10},
    {"8B", 4096, 16384, 32, 128, 32, 14},
};

}  // namespace

ModelConfig preset(const std::string& name) {
    for (const auto& r : kTable) {
        for (Arch arch : {Arch::DecLLM, Arch::RedLLM}) {
            const std::string full = (arch == Arch::DecLLM ? "dec-" : "red-") + std::string(r.tag);
            if (full != name) continue;
            ModelConfig c;
            c.arch = arch;
            c.d = r.d;
            c.d_ffn = r.d_ffn;
            c.h = r.h;
            c.d_h = r.d_h;
            c.L_dec = arch == Arch::DecLLM ? r.l_dec : 0;
            c.L_enc = arch == Arch::RedLLM ? r.l_red : 0;
            c.L_dec_red = arch == Arch::RedLLM ? r.l_red : 0;
            c.vocab_size = 32768;
            c.max_seq = 2048;
            c.size_tag = r.tag;
            return c;
        }
    }
    if (name == "dec-desk" || name == "red-desk") {
        ModelConfig c;
        c.arch = name == "dec-desk" ? Arch::DecLLM : Arch::RedLLM;
        c.d = 64;
        c.d_ffn = 256;
        c.h = 4;
        c.d_h = 16;
        c.L_dec = c.arch == Arch::DecLLM ? 2 : 0;
        c.L_enc = c.L_dec_red = c.arch == Arch::RedLLM ? 2 : 0;
        c.vocab_size = 512;
        c.max_seq = 256;
        c.size_tag = "desk";
        return c;
    }
    throw InputError("unknown model preset '" + name + "'");
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const char* prefix : {"dec-", "red-"}) {
        for (const auto& r : kTable) out.push_back(prefix + std::string(r.tag));
        out.push_back(prefix + std::string("desk"));
    }
    return out;
}

}  // namespace lmlab::models
