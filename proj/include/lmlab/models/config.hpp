#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace lmlab::models {

enum class Arch { DecLLM, RedLLM };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& s);

// Architecture hyperparameters. Field names match the JSON config schema.
struct ModelConfig {
    Arch arch = Arch::DecLLM;
    std::size_t d = 64;
    std::size_t d_ffn = 256;
    std::size_t h = 4;
    std::size_t d_h = 16;
    std::size_t L_dec = 2;      // decoder-only depth
    std::size_t L_enc = 0;      // encoder-decoder: encoder depth
    std::size_t L_dec_red = 0;  // encoder-decoder: decoder depth
    std::size_t vocab_size = 512;
    std::size_t max_seq = 256;
    std::string size_tag = "custom";
    double rotary_base = 10000.0;

    // Throws InputError on an inconsistent config (odd d_h, unbalanced
    // encoder-decoder, vocabulary too small for the special tokens, ...).
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Named presets: "dec-150M" ... "dec-8B", "red-150M" ... "red-8B" (the
// published configuration table, vocabulary 32768, T = 2048) and the
// desk-scale "dec-desk" / "red-desk".
ModelConfig preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace lmlab::models
