#include "lmlab/training/objective.hpp"

#include <algorithm>

#include "lmlab/common/error.hpp"
#include "lmlab/numerics/ops.hpp"

namespace lmlab::training {

std::size_t AlignedRow::count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

AlignedRow forward_row(const models::Model& model, const data::Row& row, PrefixAttention prefix,
                       const models::ForwardOptions& opts) {
    row.validate();
    const auto n = row.tokens.size();
    const auto k = row.prefix_len;
    AlignedRow a;
    if (model.config().arch == models::Arch::DecLLM) {
        const auto mask = prefix == PrefixAttention::Bidirectional
                              ? models::AttentionMask::prefix_bidirectional(k)
                              : models::AttentionMask::causal();
        a.output = model.forward_decllm(row.tokens, mask, opts);
        a.targets.assign(n, 0);
        a.mask.assign(n, 0);
        for (std::size_t t = 0; t + 1 < n; ++t) {
            a.targets[t] = row.tokens[t + 1];
            a.mask[t] = row.loss_mask[t + 1];
        }
        return a;
    }
    if (k == 0 || k >= n) throw InputError("encoder-decoder row needs 1 <= prefix_len < length");
    if (std::any_of(row.loss_mask.begin(), row.loss_mask.begin() + static_cast<std::ptrdiff_t>(k),
                    [](std::uint8_t m) { return m != 0; })) {
        throw InputError("encoder-decoder row has loss inside the encoder prefix");
    }
    std::span<const TokenId> tokens(row.tokens);
    a.output = model.forward_redllm(tokens.first(k), tokens.subspan(k), opts);
    a.targets.assign(row.tokens.begin() + static_cast<std::ptrdiff_t>(k), row.tokens.end());
    a.mask.assign(row.loss_mask.begin() + static_cast<std::ptrdiff_t>(k), row.loss_mask.end());
    return a;
}

LossTerms lm_loss(const Tensor& logits, std::span<const TokenId> targets,
                  std::span<const std::uint8_t> mask, double denominator, double z_coef) {
    if (logits.rank() != 2 || targets.size() != logits.dim(0) || mask.size() != logits.dim(0)) {
        throw ShapeError("lm_loss: logits, targets and mask disagree on length");
    }
    const auto count = static_cast<double>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
    if (count == 0) throw InputError("lm_loss: every position is masked");
    if (denominator <= 0.0) denominator = count;

    std::vector<double> w(mask.size());
    std::vector<std::int32_t> idx(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        w[i] = mask[i] ? 1.0 / denominator : 0.0;
        idx[i] = mask[i] ? targets[i] : 0;
    }
    Tensor lse = ops::logsumexp_rows(logits);
    LossTerms t;
    t.nll = ops::sub(ops::weighted_sum(lse, w), ops::weighted_sum(ops::pick(logits, idx), w));
    t.z = ops::scale(ops::weighted_sum(ops::mul(lse, lse), w), z_coef);
    t.objective = ops::add(t.nll, t.z);
    return t;
}

}  // namespace lmlab::training
