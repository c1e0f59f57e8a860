#include "lmlab/models/flops.hpp"

#include <stdexcept>

namespace lmlab::models {

namespace {

double mm(double m, double k, double n) { return 2.0 * m * k * n; }

// One stack of self-attention + FFN layers over `len` tokens.
void add_self_layers(FlopsBreakdown& f, const ModelConfig& c, double layers, double len) {
    const double inner = static_cast<double>(c.h * c.d_h);
    const double d = static_cast<double>(c.d);
    f.projections += layers * (3.0 * mm(len, d, inner) + mm(len, inner, d));
    f.attention_scores += layers * static_cast<double>(c.h) * mm(len, static_cast<double>(c.d_h), len);
    f.attention_context += layers * static_cast<double>(c.h) * mm(len, len, static_cast<double>(c.d_h));
    f.ffn += layers * (3.0 * mm(len, d, static_cast<double>(c.d_ffn)));
}

}  // namespace

FlopsBreakdown forward_flops(const ModelConfig& c, SeqShape seq) {
    FlopsBreakdown f;
    const double d = static_cast<double>(c.d);
    const double vocab = static_cast<double>(c.vocab_size);
    if (c.arch == Arch::DecLLM) {
        if (seq.total == 0) throw std::invalid_argument("flops: empty sequence");
        const double t = static_cast<double>(seq.total);
        add_self_layers(f, c, static_cast<double>(c.L_dec), t);
        f.unembed = mm(t, d, vocab);
        return f;
    }
    if (seq.prefix == 0 || seq.prefix >= seq.total) {
        throw std::invalid_argument("flops: encoder-decoder needs 1 <= k < T");
    }
    const double k = static_cast<double>(seq.prefix);
    const double m = static_cast<double>(seq.total - seq.prefix);
    const double inner = static_cast<double>(c.h * c.d_h);
    const double layers = static_cast<double>(c.L_dec_red);
    add_self_layers(f, c, static_cast<double>(c.L_enc), k);
    add_self_layers(f, c, layers, m);
    // Cross-attention: queries/outputs over the decoder, keys/values over the encoder.
    f.projections += layers * (2.0 * mm(m, d, inner) + 2.0 * mm(k, d, inner));
    f.attention_scores += layers * static_cast<double>(c.h) * mm(m, static_cast<double>(c.d_h), k);
    f.attention_context += layers * static_cast<double>(c.h) * mm(m, k, static_cast<double>(c.d_h));
    f.unembed = mm(m, d, vocab);
    return f;
}

double flops_per_sequence(const ModelConfig& cfg, SeqShape seq, FlopsMode mode) {
    const double fwd = forward_flops(cfg, seq).total();
    return mode == FlopsMode::Train ? 3.0 * fwd : fwd;
}

}  // namespace lmlab::models
