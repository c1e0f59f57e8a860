#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lmlab/data/corpus.hpp"
#include "lmlab/models/model.hpp"
#include "lmlab/training/objective.hpp"

namespace lmlab::eval {

struct EvalRecord {
    std::string model;
    std::int64_t step = 0;
    std::uint64_t params = 0;
    double train_flops = 0.0;
    std::string domain;
    std::size_t context_len = 0;
    std::size_t prefix_len = 0;
    double nll = 0.0;  // token-weighted mean over suffix tokens
    double ppl = 0.0;  // exp(nll)
    std::size_t rows = 0;
};

// Identifies the model and data in emitted records.
struct EvalMeta {
    std::string model;
    std::int64_t step = 0;
    std::uint64_t params = 0;
    double train_flops = 0.0;
    std::string domain = "default";
};

inline const char* kEvalHeader = "model,step,params,train_flops,domain,context_len,prefix_len,nll,ppl,rows";
std::string format_record(const EvalRecord& r);
void write_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records);
std::vector<EvalRecord> read_records(const std::filesystem::path& path);

// ln p(target) at every counted position of an aligned row, in order.
// Every architecture is scored through this one function.
std::vector<double> target_logprobs(const training::AlignedRow& row);

// exp of the negative mean log-probability. Values are summed in sorted
// order so the result does not depend on how rows were ordered or split.
double ppl_from_logprobs(std::vector<double> logprobs);

// The first T tokens of `tokens` with the loss on positions >= k.
data::Row prefix_row(std::span<const TokenId> tokens, std::size_t k);

// Suffix perplexity over rows sharing one (T, k). DecLLM reads the prefix
// causally (or bidirectionally for finetuned BiAttn models), RedLLM encodes
// it. Rows may be longer than the model's max_seq.
EvalRecord prefix_ppl(const models::Model& model, std::span<const data::Row> rows, const EvalMeta& meta,
                      training::PrefixAttention prefix = training::PrefixAttention::Causal);

// One record per (k, T) cell with k < T. Each sequence at least T tokens
// long contributes its first T tokens; shorter ones are skipped. Throws
// InputError for a cell no sequence qualifies for.
std::vector<EvalRecord> extrapolation_sweep(const models::Model& model,
                                            std::span<const std::vector<TokenId>> sequences,
                                            std::span<const std::size_t> prefix_lengths,
                                            std::span<const std::size_t> context_lengths,
                                            const EvalMeta& meta);

// Mean over rows of ln p(token t) for t = k .. T-1 (index 0 is position k).
std::vector<double> per_position_logprob(const models::Model& model, std::span<const data::Row> rows);

// Arithmetic mean of per-domain perplexities (the cross-domain report).
double macro_average_ppl(std::span<const EvalRecord> records);

}  // namespace lmlab::eval
