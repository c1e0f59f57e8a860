#include "lmlab/eval/perplexity.hpp"

#include <algorithm>
#include <cmath>

#include "lmlab/common/csv.hpp"
#include "lmlab/common/error.hpp"

namespace lmlab::eval {

namespace {

double mean_nll(std::vector<double> logprobs) {
    if (logprobs.empty()) throw InputError("no scored tokens");
    std::sort(logprobs.begin(), logprobs.end());
    double s = 0.0;
    for (double lp : logprobs) s += lp;
    return -s / static_cast<double>(logprobs.size());
}

}  // namespace

std::string format_record(const EvalRecord& r) {
    return csv::join({r.model, std::to_string(r.step), std::to_string(r.params), csv::format_double(r.train_flops),
                      r.domain, std::to_string(r.context_len), std::to_string(r.prefix_len),
                      csv::format_double(r.nll), csv::format_double(r.ppl), std::to_string(r.rows)});
}

void write_records(const std::filesystem::path& path, const std::vector<EvalRecord>& records) {
    csv::Table t;
    t.header = {"model", "step", "params", "train_flops", "domain", "context_len", "prefix_len", "nll", "ppl", "rows"};
    for (const auto& r : records) {
        t.rows.push_back({r.model, std::to_string(r.step), std::to_string(r.params), csv::format_double(r.train_flops),
                          r.domain, std::to_string(r.context_len), std::to_string(r.prefix_len),
                          csv::format_double(r.nll), csv::format_double(r.ppl), std::to_string(r.rows)});
    }
    csv::write(path, t);
}

std::vector<EvalRecord> read_records(const std::filesystem::path& path) {
    const auto t = csv::read(path);
    std::vector<EvalRecord> out;
    const auto c_model = t.column("model"), c_step = t.column("step"), c_params = t.column("params"),
               c_flops = t.column("train_flops"), c_domain = t.column("domain"), c_ctx = t.column("context_len"),
               c_k = t.column("prefix_len"), c_nll = t.column("nll"), c_ppl = t.column("ppl"), c_rows = t.column("rows");
    try {
        for (const auto& row : t.rows) {
            EvalRecord r;
            r.model = row.at(c_model);
            r.step = std::stoll(row.at(c_step));
            r.params = std::stoull(row.at(c_params));
            r.train_flops = std::stod(row.at(c_flops));
            r.domain = row.at(c_domain);
            r.context_len = std::stoull(row.at(c_ctx));
            r.prefix_len = std::stoull(row.at(c_k));
            r.nll = std::stod(row.at(c_nll));
            r.ppl = std::stod(row.at(c_ppl));
            r.rows = std::stoull(row.at(c_rows));
            out.push_back(std::move(r));
        }
    } catch (const std::exception& e) {
        throw InputError(path.string() + ": malformed eval record (" + e.what() + ")");
    }
    return out;
}

std::vector<double> target_logprobs(const training::AlignedRow& row) {
    const Tensor& logits = row.logits();
    const auto V = logits.dim(1);
    const auto data = logits.data();
    std::vector<double> out;
    for (std::size_t i = 0; i < row.mask.size(); ++i) {
        if (!row.mask[i]) continue;
        const double* r = data.data() + i * V;
        const double m = *std::max_element(r, r + V);
        double s = 0.0;
        for (std::size_t c = 0; c < V; ++c) s += std::exp(r[c] - m);
        out.push_back(r[static_cast<std::size_t>(row.targets[i])] - m - std::log(s));
    }
    return out;
}

double ppl_from_logprobs(std::vector<double> logprobs) { return std::exp(mean_nll(std::move(logprobs))); }

data::Row prefix_row(std::span<const TokenId> tokens, std::size_t k) {
    if (k == 0 || k >= tokens.size()) throw InputError("prefix_row: need 1 <= k < T");
    data::Row r;
    r.tokens.assign(tokens.begin(), tokens.end());
    r.prefix_len = k;
    r.loss_mask.assign(tokens.size(), 0);
    std::fill(r.loss_mask.begin() + static_cast<std::ptrdiff_t>(k), r.loss_mask.end(), 1);
    return r;
}

EvalRecord prefix_ppl(const models::Model& model, std::span<const data::Row> rows, const EvalMeta& meta,
                      training::PrefixAttention prefix) {
    if (rows.empty()) throw InputError("prefix_ppl: empty eval set");
    const auto T = rows.front().tokens.size(), k = rows.front().prefix_len;
    NoGradGuard ng;
    models::ForwardOptions opts;
    opts.extrapolate = true;
    std::vector<double> lps;
    for (const auto& row : rows) {
        if (row.tokens.size() != T || row.prefix_len != k) {
            throw InputError("prefix_ppl: rows must share context and prefix length");
        }
        auto scored = target_logprobs(training::forward_row(model, row, prefix, opts));
        lps.insert(lps.end(), scored.begin(), scored.end());
    }
    EvalRecord rec;
    rec.model = meta.model;
    rec.step = meta.step;
    rec.params = meta.params;
    rec.train_flops = meta.train_flops;
    rec.domain = meta.domain;
    rec.context_len = T;
    rec.prefix_len = k;
    rec.nll = mean_nll(std::move(lps));
    rec.ppl = std::exp(rec.nll);
    rec.rows = rows.size();
    return rec;
}

std::vector<EvalRecord> extrapolation_sweep(const models::Model& model,
                                            std::span<const std::vector<TokenId>> sequences,
                                            std::span<const std::size_t> prefix_lengths,
                                            std::span<const std::size_t> context_lengths,
                                            const EvalMeta& meta) {
    std::vector<EvalRecord> out;
    for (auto T : context_lengths) {
        for (auto k : prefix_lengths) {
            if (k >= T) continue;
            std::vector<data::Row> rows;
            for (const auto& s : sequences) {
                if (s.size() >= T) rows.push_back(prefix_row(std::span(s).first(T), k));
            }
            if (rows.empty()) {
                throw InputError("extrapolation sweep: no sequence has " + std::to_string(T) + " tokens");
            }
            out.push_back(prefix_ppl(model, rows, meta));
        }
    }
    return out;
}

std::vector<double> per_position_logprob(const models::Model& model, std::span<const data::Row> rows) {
    if (rows.empty()) throw InputError("per_position_logprob: no rows");
    const auto T = rows.front().tokens.size(), k = rows.front().prefix_len;
    NoGradGuard ng;
    models::ForwardOptions opts;
    opts.extrapolate = true;
    std::vector<double> sum(T - k, 0.0);
    for (const auto& row : rows) {
        if (row.tokens.size() != T || row.prefix_len != k) {
            throw InputError("per_position_logprob: rows must have equal length and prefix");
        }
        auto lp = target_logprobs(training::forward_row(model, row, training::PrefixAttention::Causal, opts));
        if (lp.size() != sum.size()) throw InputError("per_position_logprob: row must score every suffix token");
        for (std::size_t i = 0; i < lp.size(); ++i) sum[i] += lp[i];
    }
    for (auto& s : sum) s /= static_cast<double>(rows.size());
    return sum;
}

double macro_average_ppl(std::span<const EvalRecord> records) {
    if (records.empty()) throw InputError("macro_average_ppl: no records");
    double s = 0.0;
    for (const auto& r : records) s += r.ppl;
    return s / static_cast<double>(records.size());
}

}  // namespace lmlab::eval
