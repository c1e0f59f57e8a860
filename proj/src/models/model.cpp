#include "lmlab/models/model.hpp"

#include <algorithm>
#include <cmath>

#include "lmlab/common/error.hpp"
#include "lmlab/common/rng.hpp"
#include "lmlab/numerics/ops.hpp"

namespace lmlab::models {

Tensor& ParamSet::add(std::string name, Tensor value) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    entries_.emplace_back(std::move(name), std::move(value));
    return entries_.back().second;
}

const Tensor& ParamSet::get(const std::string& name) const {
    for (const auto& [n, t] : entries_) {
        if (n == name) return t;
    }
    throw std::out_of_range("no parameter named " + name);
}

Tensor& ParamSet::get(const std::string& name) {
    return const_cast<Tensor&>(static_cast<const ParamSet&>(*this).get(name));
}

bool ParamSet::contains(const std::string& name) const {
    for (const auto& e : entries_) {
        if (e.first == name) return true;
    }
    return false;
}

std::size_t ParamSet::total_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
}

void ParamSet::zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
}

std::string to_string(AttentionSite site) {
    switch (site) {
        case AttentionSite::EncoderSelf: return "encoder_self";
        case AttentionSite::DecoderSelf: return "decoder_self";
        case AttentionSite::Cross: return "cross";
    }
    return "?";
}

namespace {

layers::AttentionParams attn_params(const ParamSet& p, const std::string& prefix,
                                    const ModelConfig& c, bool output_norm) {
    layers::AttentionParams a;
    a.w_q = p.get(prefix + ".wq");
    a.w_k = p.get(prefix + ".wk");
    a.w_v = p.get(prefix + ".wv");
    a.w_o = p.get(prefix + ".wo");
    a.heads = c.h;
    a.head_dim = c.d_h;
    a.use_output_norm = output_norm;
    return a;
}

std::vector<std::int64_t> iota_positions(std::size_t n, std::int64_t start) {
    std::vector<std::int64_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[i] = start + static_cast<std::int64_t>(i);
    return pos;
}

std::vector<std::uint8_t> key_validity(std::span<const TokenId> tokens) {
    std::vector<std::uint8_t> valid(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) valid[i] = tokens[i] != kPadId;
    return valid;
}

// A padding query in self-attention that sees no valid key attends to itself.
void unblock_self_rows(std::vector<std::uint8_t>& keep, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < n && !any; ++j) any = keep[i * n + j] != 0;
        if (!any) keep[i * n + i] = 1;
    }
}

void check_length(const ModelConfig& c, std::size_t n, const ForwardOptions& opts) {
    if (!opts.extrapolate && n > c.max_seq) {
        throw InputError("sequence length " + std::to_string(n) + " exceeds max_seq " +
                         std::to_string(c.max_seq));
    }
}

Tensor maybe_dropout(const Tensor& x, const ForwardOptions& opts) {
    if (opts.dropout <= 0.0) return x;
    if (!opts.rng) throw std::invalid_argument("dropout requested without a generator");
    return ops::dropout(x, opts.dropout, *opts.rng);
}

void record(ForwardOutput& out, AttentionSite site, std::size_t layer,
            layers::AttentionTrace& trace) {
    CapturedAttention c;
    c.site = site;
    c.layer = layer;
    c.rows = trace.rows;
    c.cols = trace.cols;
    c.head_probs = std::move(trace.head_probs);
    c.max_abs_logit = trace.max_abs_logit;
    c.q_positions = std::move(trace.q_positions);
    c.k_positions = std::move(trace.k_positions);
    out.attention.push_back(std::move(c));
}

// x + attn(rmsnorm(x)) over self-attention.
Tensor self_attention_sublayer(const ParamSet& p, const ModelConfig& c, const std::string& attn,
                               const std::string& norm, const Tensor& x,
                               std::span<const std::int64_t> pos,
                               const std::vector<std::uint8_t>& keep, bool output_norm,
                               const ForwardOptions& opts, ForwardOutput& out, AttentionSite site,
                               std::size_t layer) {
    const layers::RotaryConfig rot{c.rotary_base, c.d_h};
    layers::AttentionTrace trace;
    Tensor h = layers::rmsnorm(x, p.get(norm));
    Tensor a = layers::attention(h, h, attn_params(p, attn, c, output_norm), pos, pos, keep, rot,
                                 opts.capture_attention ? &trace : nullptr);
    if (opts.capture_attention) record(out, site, layer, trace);
    return ops::add(x, maybe_dropout(a, opts));
}

Tensor ffn_sublayer(const ParamSet& p, const std::string& ffn, const std::string& norm,
                    const Tensor& x, const ForwardOptions& opts) {
    Tensor h = layers::rmsnorm(x, p.get(norm));
    Tensor f = layers::swiglu_ffn(h, p.get(ffn + ".w_in"), p.get(ffn + ".w_gate"),
                                  p.get(ffn + ".w_out"));
    return ops::add(x, maybe_dropout(f, opts));
}

}  // namespace

std::vector<std::pair<std::string, Shape>> param_layout(const ModelConfig& c) {
    std::vector<std::pair<std::string, Shape>> out;
    const auto inner = c.h * c.d_h;
    auto attention = [&](const std::string& pre) {
        out.push_back({pre + ".wq", {c.d, inner}});
        out.push_back({pre + ".wk", {c.d, inner}});
        out.push_back({pre + ".wv", {c.d, inner}});
        out.push_back({pre + ".wo", {inner, c.d}});
    };
    auto ffn = [&](const std::string& pre) {
        out.push_back({pre + ".w_in", {c.d, c.d_ffn}});
        out.push_back({pre + ".w_gate", {c.d, c.d_ffn}});
        out.push_back({pre + ".w_out", {c.d_ffn, c.d}});
    };
    auto norm = [&](const std::string& name) { out.push_back({name, {c.d}}); };

    out.push_back({"embed", {c.vocab_size, c.d}});
    if (c.arch == Arch::DecLLM) {
        for (std::size_t l = 0; l < c.L_dec; ++l) {
            const auto pre = "dec." + std::to_string(l);
            norm(pre + ".attn_norm");
            attention(pre + ".attn");
            norm(pre + ".ffn_norm");
            ffn(pre + ".ffn");
        }
    } else {
        for (std::size_t l = 0; l < c.L_enc; ++l) {
            const auto pre = "enc." + std::to_string(l);
            norm(pre + ".attn_norm");
            attention(pre + ".attn");
            norm(pre + ".ffn_norm");
            ffn(pre + ".ffn");
        }
        norm("enc.final_norm");
        for (std::size_t l = 0; l < c.L_dec_red; ++l) {
            const auto pre = "dec." + std::to_string(l);
            norm(pre + ".self_norm");
            attention(pre + ".self");
            norm(pre + ".cross_norm");
            attention(pre + ".cross");
            norm(pre + ".ffn_norm");
            ffn(pre + ".ffn");
        }
    }
    norm("dec.final_norm");
    return out;
}

Model::Model(ModelConfig cfg, std::uint64_t seed, InitOptions init) : cfg_(std::move(cfg)) {
    cfg_.validate();
    auto gen = SeedSplitter(seed).stream("init");
    for (auto& [name, shape] : param_layout(cfg_)) {
        std::vector<double> v(shape_numel(shape));
        if (shape.size() == 1) {
            // Norm gains start at one, except the optional zeroed output gain.
            const double g = (name == "dec.final_norm" && init.zero_output_gain) ? 0.0 : 1.0;
            std::fill(v.begin(), v.end(), g);
        } else {
            // Embedding rows have std 1/sqrt(d); projections 1/sqrt(fan_in).
            const double stddev = 1.0 / std::sqrt(static_cast<double>(
                                            name == "embed" ? shape[1] : shape[0]));
            for (auto& x : v) x = standard_normal(gen) * stddev;
        }
        params_.add(name, Tensor::from(shape, std::move(v), true));
    }
}

Model::Model(ModelConfig cfg, ParamSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
    cfg_.validate();
    const auto layout = param_layout(cfg_);
    if (layout.size() != params_.size()) {
        throw InputError("parameter set does not match model config");
    }
    auto it = params_.begin();
    for (const auto& [name, shape] : layout) {
        if (it->first != name || it->second.shape() != shape) {
            throw InputError("parameter '" + it->first + "' does not match config (expected " +
                             name + " " + shape_str(shape) + ")");
        }
        ++it;
    }
}

ForwardOutput Model::forward_decllm(std::span<const TokenId> tokens, AttentionMask mask,
                                    const ForwardOptions& opts) const {
    if (cfg_.arch != Arch::DecLLM) throw std::logic_error("forward_decllm on an encoder-decoder model");
    if (tokens.empty()) throw std::invalid_argument("forward_decllm: empty sequence");
    if (mask.kind == MaskKind::Full) throw std::invalid_argument("decoder-only model needs a causal or prefix mask");
    const auto n = tokens.size();
    check_length(cfg_, n, opts);
    ForwardOutput out;
    out.positions = iota_positions(n, 0);
    auto keep = mask.build(n, n, key_validity(tokens));
    unblock_self_rows(keep, n);

    const Tensor& embed = params_.get("embed");
    Tensor x = layers::tied_embed(embed, tokens);
    for (std::size_t l = 0; l < cfg_.L_dec; ++l) {
        const auto pre = "dec." + std::to_string(l);
        x = self_attention_sublayer(params_, cfg_, pre + ".attn", pre + ".attn_norm", x,
                                    out.positions, keep, false, opts, out,
                                    AttentionSite::DecoderSelf, l);
        x = ffn_sublayer(params_, pre + ".ffn", pre + ".ffn_norm", x, opts);
    }
    x = layers::rmsnorm(x, params_.get("dec.final_norm"));
    out.logits = layers::tied_unembed(x, embed);
    return out;
}

ForwardOutput Model::forward_redllm(std::span<const TokenId> input, std::span<const TokenId> target,
                                    const ForwardOptions& opts) const {
    if (cfg_.arch != Arch::RedLLM) throw std::logic_error("forward_redllm on a decoder-only model");
    if (input.empty()) throw std::invalid_argument("forward_redllm: prefix length k must be >= 1");
    if (target.empty()) throw std::invalid_argument("forward_redllm: empty target");
    const auto k = input.size(), m = target.size();
    check_length(cfg_, k + m, opts);
    ForwardOutput out;
    out.encoder_positions = iota_positions(k, 0);
    out.positions = iota_positions(m, static_cast<std::int64_t>(k));

    const Tensor& embed = params_.get("embed");
    const auto enc_valid = key_validity(input);

    auto enc_keep = AttentionMask::full().build(k, k, enc_valid);
    unblock_self_rows(enc_keep, k);
    Tensor x = layers::tied_embed(embed, input);
    for (std::size_t l = 0; l < cfg_.L_enc; ++l) {
        const auto pre = "enc." + std::to_string(l);
        x = self_attention_sublayer(params_, cfg_, pre + ".attn", pre + ".attn_norm", x,
                                    out.encoder_positions, enc_keep, true, opts, out,
                                    AttentionSite::EncoderSelf, l);
        x = ffn_sublayer(params_, pre + ".ffn", pre + ".ffn_norm", x, opts);
    }
    const Tensor enc = layers::rmsnorm(x, params_.get("enc.final_norm"));
    out.encoder_states = enc;

    std::vector<TokenId> dec_in(m);
    dec_in[0] = kBotId;
    for (std::size_t t = 1; t < m; ++t) dec_in[t] = target[t - 1];
    auto self_keep = AttentionMask::causal().build(m, m, key_validity(dec_in));
    unblock_self_rows(self_keep, m);
    const auto cross_keep = AttentionMask::full().build(m, k, enc_valid);
    const layers::RotaryConfig rot{cfg_.rotary_base, cfg_.d_h};

    Tensor y = layers::tied_embed(embed, dec_in);
    for (std::size_t l = 0; l < cfg_.L_dec_red; ++l) {
        const auto pre = "dec." + std::to_string(l);
        y = self_attention_sublayer(params_, cfg_, pre + ".self", pre + ".self_norm", y,
                                    out.positions, self_keep, true, opts, out,
                                    AttentionSite::DecoderSelf, l);
        layers::AttentionTrace trace;
        Tensor h = layers::rmsnorm(y, params_.get(pre + ".cross_norm"));
        Tensor a = layers::attention(h, enc, attn_params(params_, pre + ".cross", cfg_, true),
                                     out.positions, out.encoder_positions, cross_keep, rot,
                                     opts.capture_attention ? &trace : nullptr);
        if (opts.capture_attention) record(out, AttentionSite::Cross, l, trace);
        y = ops::add(y, maybe_dropout(a, opts));
        y = ffn_sublayer(params_, pre + ".ffn", pre + ".ffn_norm", y, opts);
    }
    y = layers::rmsnorm(y, params_.get("dec.final_norm"));
    out.logits = layers::tied_unembed(y, embed);
    return out;
}

std::size_t count_embedding_params(const ModelConfig& c) { return c.vocab_size * c.d; }

std::size_t count_params(const ModelConfig& c) {
    const auto attn = 4 * c.d * c.h * c.d_h;
    const auto ffn = 3 * c.d * c.d_ffn;
    const auto norm = c.d;
    std::size_t n = count_embedding_params(c);
    if (c.arch == Arch::DecLLM) {
        n += c.L_dec * (attn + ffn + 2 * norm) + norm;
    } else {
        n += c.L_enc * (attn + ffn + 2 * norm) + norm;
        n += c.L_dec_red * (2 * attn + ffn + 3 * norm) + norm;
    }
    return n;
}

}  // namespace lmlab::models
