#include "lmlab/eval/decode.hpp"

#include "lmlab/common/error.hpp"

namespace lmlab::eval {

std::vector<TokenId> greedy_decode(const NextLogits& next, std::size_t max_new, TokenId stop) {
    std::vector<TokenId> out;
    while (out.size() < max_new) {
        const auto logits = next(out);
        if (logits.empty()) throw InputError("greedy_decode: empty logits");
        std::size_t best = 0;
        for (std::size_t i = 1; i < logits.size(); ++i) {
            if (logits[i] > logits[best]) best = i;  // strict: ties keep the lower id
        }
        const auto id = static_cast<TokenId>(best);
        if (id == stop) break;
        out.push_back(id);
    }
    return out;
}

namespace {

std::vector<double> last_row(const Tensor& logits) {
    const auto V = logits.dim(1);
    const auto d = logits.data();
    return {d.end() - static_cast<std::ptrdiff_t>(V), d.end()};
}

}  // namespace

std::vector<TokenId> greedy_decode_decllm(const models::Model& model, std::span<const TokenId> prompt,
                                          std::size_t max_new, bool bidirectional_prompt) {
    if (prompt.empty()) throw InputError("greedy_decode: empty prompt");
    NoGradGuard ng;
    models::ForwardOptions opts;
    opts.extrapolate = true;
    const auto mask = bidirectional_prompt ? models::AttentionMask::prefix_bidirectional(prompt.size())
                                           : models::AttentionMask::causal();
    std::vector<TokenId> seq(prompt.begin(), prompt.end());
    return greedy_decode(
        [&](std::span<const TokenId> generated) {
            seq.resize(prompt.size());
            seq.insert(seq.end(), generated.begin(), generated.end());
            return last_row(model.forward_decllm(seq, mask, opts).logits);
        },
        max_new);
}

std::vector<TokenId> greedy_decode_redllm(const models::Model& model, std::span<const TokenId> input,
                                          std::size_t max_new) {
    if (input.empty()) throw InputError("greedy_decode: empty encoder input");
    NoGradGuard ng;
    models::ForwardOptions opts;
    opts.extrapolate = true;
    return greedy_decode(
        [&](std::span<const TokenId> generated) {
            // The last decoder slot's own token is never read; only its prediction is.
            std::vector<TokenId> target(generated.begin(), generated.end());
            target.push_back(kPadId);
            return last_row(model.forward_redllm(input, target, opts).logits);
        },
        max_new);
}

}  // namespace lmlab::eval
