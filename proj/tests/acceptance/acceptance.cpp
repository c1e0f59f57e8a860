// One PASS/FAIL line per acceptance criterion. Exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "../unit/gradcheck.hpp"
#include "lmlab/common/error.hpp"
#include "lmlab/eval/attention_stats.hpp"
#include "lmlab/eval/decode.hpp"
#include "lmlab/eval/perplexity.hpp"
#include "lmlab/layers/layers.hpp"
#include "lmlab/models/flops.hpp"
#include "lmlab/numerics/ops.hpp"
#include "lmlab/scaling/scaling.hpp"
#include "lmlab/training/trainer.hpp"

using namespace lmlab;
using lmlab::testing::grad_check;
using lmlab::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects sub-checks; the first failures are kept for the report.
struct Checks {
    Outcome out;
    int failed = 0;

    void expect(bool ok, const std::string& what) {
        if (ok) return;
        out.pass = false;
        if (++failed <= 3) out.detail += (out.detail.empty() ? "" : "; ") + what;
    }
    Outcome done(const std::string& summary) {
        if (out.pass) out.detail = summary;
        else if (failed > 3) out.detail += "; +" + std::to_string(failed - 3) + " more";
        return out;
    }
};

std::string fmt(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<TokenId> random_tokens(std::size_t n, std::uint64_t seed, TokenId hi = 255) {
    std::mt19937_64 g(seed);
    std::vector<TokenId> out(n);
    for (auto& t : out) t = static_cast<TokenId>(g() % static_cast<std::uint64_t>(hi + 1));
    return out;
}

std::vector<std::int64_t> iota(std::size_t n, std::int64_t start = 0) {
    std::vector<std::int64_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = start + static_cast<std::int64_t>(i);
    return v;
}

models::ModelConfig tiny(models::Arch arch) {
    models::ModelConfig c;
    c.arch = arch;
    c.d = 8;
    c.d_ffn = 16;
    c.h = 2;
    c.d_h = 4;
    c.L_dec = arch == models::Arch::DecLLM ? 2 : 0;
    c.L_enc = c.L_dec_red = arch == models::Arch::RedLLM ? 2 : 0;
    c.vocab_size = 262;
    c.max_seq = 32;
    return c;
}

layers::AttentionParams random_attention(std::size_t d, std::size_t heads, std::size_t dh, std::uint64_t seed,
                                         bool out_norm) {
    layers::AttentionParams p;
    p.w_q = random_tensor({d, heads * dh}, seed);
    p.w_k = random_tensor({d, heads * dh}, seed + 1);
    p.w_v = random_tensor({d, heads * dh}, seed + 2);
    p.w_o = random_tensor({heads * dh, d}, seed + 3);
    p.heads = heads;
    p.head_dim = dh;
    p.use_output_norm = out_norm;
    return p;
}

bool rows_equal(const Tensor& a, const Tensor& b, std::size_t row) {
    for (std::size_t c = 0; c < a.dim(1); ++c)
        if (a.at(row, c) != b.at(row, c)) return false;
    return true;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    Checks c;
    double worst = 0.0;
    auto record = [&](const std::string& name, const testing::GradCheckResult& r) {
        worst = std::max(worst, r.max_rel_error);
        c.expect(r.max_rel_error < 1e-4, name + " rel err " + fmt(r.max_rel_error));
    };
    const std::size_t d = 8, h = 2, dh = 4;
    layers::RotaryConfig rot{10000.0, dh};

    {
        auto x = random_tensor({3, d}, 1), g = random_tensor({d}, 2), w = random_tensor({3, d}, 3, 1.0, false);
        record("rmsnorm", grad_check([&] { return ops::sum(ops::mul(layers::rmsnorm(x, g), w)); }, {x, g}));
    }
    {
        auto x = random_tensor({4, dh}, 4), w = random_tensor({4, dh}, 5, 1.0, false);
        auto pos = iota(4, 3);
        record("rotary", grad_check([&] { return ops::sum(ops::mul(layers::rotary_apply(x, pos, rot), w)); }, {x}));
    }
    for (bool out_norm : {false, true}) {
        auto p = random_attention(d, h, dh, 10, out_norm);
        auto xq = random_tensor({3, d}, 20), xk = random_tensor({5, d}, 21), w = random_tensor({3, d}, 22, 1.0, false);
        auto qp = iota(3, 5), kp = iota(5);
        std::vector<std::uint8_t> keep(15, 1);
        keep[1] = keep[7] = 0;
        record(out_norm ? "cross attention" : "attention", grad_check([&] {
                   return ops::sum(ops::mul(layers::attention(xq, xk, p, qp, kp, keep, rot), w));
               }, {xq, xk, p.w_q, p.w_k, p.w_v, p.w_o}));
    }
    {
        auto x = random_tensor({3, d}, 30), wi = random_tensor({d, 16}, 31), wg = random_tensor({d, 16}, 32),
             wo = random_tensor({16, d}, 33), w = random_tensor({3, d}, 34, 1.0, false);
        record("swiglu", grad_check([&] { return ops::sum(ops::mul(layers::swiglu_ffn(x, wi, wg, wo), w)); },
                                    {x, wi, wg, wo}));
    }
    {
        auto table = random_tensor({20, d}, 40), hidden = random_tensor({3, d}, 41);
        std::vector<std::int32_t> ids{3, 7, 3};
        auto w = random_tensor({3, 20}, 42, 1.0, false);
        record("tied embedding", grad_check([&] {
                   auto e = layers::tied_embed(table, ids);
                   return ops::sum(ops::mul(layers::tied_unembed(ops::add(e, hidden), table), w));
               }, {table, hidden}));
    }
    {
        auto logits = random_tensor({4, 10}, 50, 3.0);
        std::vector<TokenId> targets{1, 9, 4, 4};
        std::vector<std::uint8_t> mask{1, 0, 1, 1};
        record("lm loss", grad_check([&] { return training::lm_loss(logits, targets, mask).objective; }, {logits}));
    }
    for (auto arch : {models::Arch::DecLLM, models::Arch::RedLLM}) {
        models::Model m(tiny(arch), 60, {false});
        auto row = eval::prefix_row(random_tokens(7, 61), 3);
        auto f = [&] {
            auto a = training::forward_row(m, row);
            return training::lm_loss(a.logits(), a.targets, a.mask).objective;
        };
        std::vector<Tensor> leaves;
        for (auto& [name, t] : m.params()) leaves.push_back(t);
        record(arch == models::Arch::DecLLM ? "DecLLM" : "RedLLM", grad_check(f, leaves));
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 120, "runtime " + fmt(secs) + " s");
    return c.done("max rel err " + fmt(worst) + " over layers and both full models, " + fmt(secs) + " s");
}

Outcome bounded_logits() {
    Checks c;
    std::size_t violations = 0;
    double worst_margin = -INFINITY;
    std::mt19937_64 g(2024);
    for (std::uint64_t draw = 0; draw < 1000; ++draw) {
        const std::size_t dh = draw % 2 ? 4 : 8, heads = 2, d = 16;
        layers::RotaryConfig rot{10000.0, dh};
        auto p = random_attention(d, heads, dh, 1000 + draw * 4, false);
        const double scale = std::pow(10.0, static_cast<double>(g() % 5));  // up to 1e4
        auto xq = random_tensor({4, d}, 9000 + 2 * draw, scale, false);
        auto xk = random_tensor({6, d}, 9001 + 2 * draw, scale, false);
        const auto off = static_cast<std::int64_t>(g() % 5000);
        auto qp = iota(4, off), kp = iota(6, off);
        std::vector<std::uint8_t> keep(24, 1);
        layers::AttentionTrace trace;
        layers::attention(xq, xk, p, qp, kp, keep, rot, &trace);
        const double bound = std::sqrt(static_cast<double>(dh));
        worst_margin = std::max(worst_margin, trace.max_abs_logit - bound);
        if (trace.max_abs_logit > bound + 1e-9) ++violations;
    }
    c.expect(violations == 0, std::to_string(violations) + " violations");
    return c.done("1000 draws, 0 violations, max |logit| - sqrt(d_h) = " + fmt(worst_margin));
}

Outcome mask_semantics() {
    Checks c;
    models::Model dec(tiny(models::Arch::DecLLM), 70, {false});
    auto toks = random_tokens(10, 71);
    const auto base = dec.forward_decllm(toks).logits;
    for (std::size_t t = 0; t < 10; ++t) {
        auto pert = toks;
        pert[t] = (pert[t] + 17) % 256;
        const auto out = dec.forward_decllm(pert).logits;
        for (std::size_t r = 0; r < t; ++r) c.expect(rows_equal(base, out, r), "causal leak into row " + std::to_string(r));
        c.expect(!rows_equal(base, out, t), "causal row " + std::to_string(t) + " ignores its own token");
    }

    const std::size_t k = 4;
    const auto pmask = models::AttentionMask::prefix_bidirectional(k);
    const auto pbase = dec.forward_decllm(toks, pmask).logits;
    for (std::size_t j = 0; j < 10; ++j) {
        auto pert = toks;
        pert[j] = (pert[j] + 5) % 256;
        const auto out = dec.forward_decllm(pert, pmask).logits;
        for (std::size_t r = 0; r < 10; ++r) {
            const bool visible = j < k || j <= r;
            c.expect(rows_equal(pbase, out, r) != visible,
                     "prefix mask: row " + std::to_string(r) + " vs token " + std::to_string(j));
        }
    }
    const auto p1 = dec.forward_decllm(toks, models::AttentionMask::prefix_bidirectional(1)).logits;
    c.expect(std::equal(p1.data().begin(), p1.data().end(), base.data().begin()), "prefix_bidirectional(1) != causal");
    c.expect(models::AttentionMask::prefix_bidirectional(1).build(10, 10) == models::AttentionMask::causal().build(10, 10),
             "prefix_bidirectional(1) mask differs from causal");

    models::Model red(tiny(models::Arch::RedLLM), 72, {false});
    auto input = random_tokens(6, 73), target = random_tokens(5, 74);
    const auto rbase = red.forward_redllm(input, target);
    for (std::size_t j = 0; j < input.size(); ++j) {
        auto pert = input;
        pert[j] = (pert[j] + 9) % 256;
        const auto out = red.forward_redllm(pert, target);
        for (std::size_t r = 0; r < input.size(); ++r) {
            c.expect(!rows_equal(rbase.encoder_states, out.encoder_states, r), "encoder not bidirectional");
        }
        for (std::size_t r = 0; r < target.size(); ++r) c.expect(!rows_equal(rbase.logits, out.logits, r), "decoder blind to input");
    }
    for (std::size_t t = 0; t < target.size(); ++t) {
        auto pert = target;
        pert[t] = (pert[t] + 9) % 256;
        const auto out = red.forward_redllm(input, pert);
        for (std::size_t r = 0; r <= t; ++r) c.expect(rows_equal(rbase.logits, out.logits, r), "decoder causal leak");
        if (t + 1 < target.size()) c.expect(!rows_equal(rbase.logits, out.logits, t + 1), "decoder ignores history");
    }
    return c.done("causal, prefix_bidirectional(4), encoder and decoder perturbations exact; prefix_bidirectional(1) == causal");
}

Outcome rotary_positions() {
    Checks c;
    const std::size_t d = 8, h = 2, dh = 4;
    layers::RotaryConfig rot{10000.0, dh};
    double worst = 0.0;
    for (bool out_norm : {false, true}) {
        auto p = random_attention(d, h, dh, 80, out_norm);
        auto xq = random_tensor({4, d}, 81, 1.0, false), xk = random_tensor({6, d}, 82, 1.0, false);
        std::vector<std::uint8_t> keep(24, 1);
        auto run = [&](std::int64_t off) {
            auto qp = iota(4, 6 + off), kp = iota(6, off);
            return layers::attention(xq, xk, p, qp, kp, keep, rot);
        };
        const auto base = run(0);
        for (std::int64_t off : {1, 17, 300, 4096}) {
            const auto s = run(off);
            for (std::size_t i = 0; i < base.numel(); ++i) worst = std::max(worst, std::abs(s.at(i) - base.at(i)));
        }
    }
    c.expect(worst < 1e-9, "offset drift " + fmt(worst));

    models::Model red(tiny(models::Arch::RedLLM), 83);
    for (std::size_t k : {1u, 3u, 9u}) {
        models::ForwardOptions opts;
        opts.capture_attention = true;
        const auto out = red.forward_redllm(random_tokens(k, 84), random_tokens(4, 85), opts);
        c.expect(out.positions.front() == static_cast<std::int64_t>(k), "first decoder position != k");
        c.expect(out.encoder_positions.back() == static_cast<std::int64_t>(k) - 1, "encoder positions");
        for (const auto& a : out.attention) {
            if (a.site != models::AttentionSite::EncoderSelf) {
                c.expect(a.q_positions.front() == static_cast<std::int64_t>(k), "attention query position");
            }
        }
    }
    return c.done("max offset drift " + fmt(worst) + "; first decoder position == k for k = 1, 3, 9");
}

Outcome optimizer_oracle() {
    Checks c;
    // Scalar oracle: unfactored Adafactor, decay 0.8, eps1 1e-30, update-RMS clip 1.
    const double target = -0.7, lr = 0.03;
    models::ParamSet ps;
    auto& p = ps.add("x", Tensor::from({3}, {2.0, -1.0, 0.25}, true));
    training::Adafactor opt;
    double x[3] = {2.0, -1.0, 0.25}, v[3] = {0, 0, 0}, worst = 0.0;
    for (int t = 1; t <= 10; ++t) {
        ps.zero_grad();
        // f = Σ (x − target)⁴ / 4, g = (x − target)³
        auto dlt = ops::sub(p, Tensor::full({3}, target));
        auto sq = ops::mul(dlt, dlt);
        backward(ops::scale(ops::sum(ops::mul(sq, sq)), 0.25));
        opt.step(ps, lr);

        const double beta = 1.0 - std::pow(static_cast<double>(t), -0.8);
        double u[3], ss = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double g = std::pow(x[i] - target, 3);
            v[i] = beta * v[i] + (1.0 - beta) * (g * g + 1e-30);
            u[i] = g / std::sqrt(v[i]);
            ss += u[i] * u[i];
        }
        const double clip = std::max(1.0, std::sqrt(ss / 3.0));
        for (int i = 0; i < 3; ++i) {
            x[i] -= lr * u[i] / clip;
            worst = std::max(worst, std::abs(p.at(i) - x[i]));
        }
    }
    c.expect(worst < 1e-12, "trace drift " + fmt(worst));
    const double l0 = training::lr_schedule(0, 10000), lp = training::lr_schedule(2000, 10000),
                 le = training::lr_schedule(10000, 10000);
    c.expect(l0 == 0.0, "lr(0) = " + fmt(l0, 17));
    c.expect(std::abs(lp - 0.01) < 1e-15, "lr(peak) = " + fmt(lp, 17));
    c.expect(std::abs(le - 0.001) < 1e-15, "lr(end) = " + fmt(le, 17));
    return c.done("10-step trace max drift " + fmt(worst) + "; schedule 0 / 0.01 / 0.001");
}

struct TrainResult {
    std::int64_t steps = 0;
    double loss = INFINITY;
};

TrainResult train_until(models::Model& m, std::vector<data::Row> rows, double threshold, std::int64_t max_steps,
                        std::int64_t warmup) {
    training::TrainConfig tc;
    tc.steps = max_steps;
    tc.batch_size = 1;
    tc.warmup = warmup;
    tc.seed = 3;
    training::Trainer tr(m, tc, std::move(rows));
    TrainResult r;
    while (tr.completed_steps() < max_steps) {
        r.loss = tr.step().loss;
        r.steps = tr.completed_steps();
        if (r.loss < threshold) break;
    }
    return r;
}

Outcome desk_training() {
    const auto t0 = std::chrono::steady_clock::now();
    Checks c;
    std::string text;
    while (text.size() < 4000) text += "the quick brown fox jumps over the lazy dog. ";
    const std::vector<std::string> docs{text};
    std::string summary;

    for (auto arch : {models::Arch::DecLLM, models::Arch::RedLLM}) {
        const bool red = arch == models::Arch::RedLLM;
        auto cfg = models::preset(red ? "red-desk" : "dec-desk");
        models::Model m(cfg, 11);
        auto rows = data::chunk_pretrain(docs, data::Tokenizer{}, 256,
                                         red ? data::ChunkMode::Prefix : data::ChunkMode::Causal);
        if (red) c.expect(rows.front().prefix_len == 128, "RedLLM rows must split at k=128");
        const auto r = train_until(m, rows, 0.1, 1000, 50);
        const auto name = red ? "RedLLM" : "DecLLM";
        c.expect(r.loss < 0.1, std::string(name) + " loss " + fmt(r.loss) + " after " + std::to_string(r.steps));
        summary += std::string(name) + " loss " + fmt(r.loss) + " at step " + std::to_string(r.steps) + ", ";
    }

    // Copy task: 8 fixed random-letter strings of length 128.
    {
        models::Model m(models::preset("red-desk"), 12);
        std::mt19937_64 g(5);
        std::vector<data::Row> rows;
        std::vector<std::vector<TokenId>> inputs;
        for (int i = 0; i < 8; ++i) {
            std::vector<TokenId> s(128);
            for (auto& t : s) t = static_cast<TokenId>('a' + g() % 26);
            inputs.push_back(s);
            data::Row row;
            row.tokens = s;
            row.tokens.insert(row.tokens.end(), s.begin(), s.end());
            row.prefix_len = 128;
            row.loss_mask.assign(256, 0);
            std::fill(row.loss_mask.begin() + 128, row.loss_mask.end(), 1);
            rows.push_back(std::move(row));
        }
        // Teacher-forced argmax correct everywhere implies exact greedy reproduction.
        auto all_argmax_correct = [&] {
            NoGradGuard ng;
            for (const auto& row : rows) {
                const auto a = training::forward_row(m, row);
                for (std::size_t i = 0; i < a.targets.size(); ++i) {
                    std::size_t best = 0;
                    for (std::size_t v = 1; v < a.logits().dim(1); ++v)
                        if (a.logits().at(i, v) > a.logits().at(i, best)) best = v;
                    if (static_cast<TokenId>(best) != a.targets[i]) return false;
                }
            }
            return true;
        };
        training::TrainConfig tc;
        tc.steps = 1000;
        tc.batch_size = 1;
        tc.warmup = 50;
        tc.seed = 3;
        training::Trainer tr(m, tc, rows);
        bool solved = false;
        while (tr.completed_steps() < tc.steps && !solved) {
            tr.step();
            if (tr.completed_steps() % 25 == 0) solved = all_argmax_correct();
        }
        std::size_t exact = 0;
        for (const auto& s : inputs) exact += eval::greedy_decode_redllm(m, s, 128) == s;
        c.expect(exact == inputs.size(),
                 "copy: " + std::to_string(exact) + "/8 exact after " + std::to_string(tr.completed_steps()) + " steps");
        summary += "copy " + std::to_string(exact) + "/8 exact at step " + std::to_string(tr.completed_steps()) + ", ";
    }
    const double secs = seconds_since(t0);
    c.expect(secs < 900, "runtime " + fmt(secs) + " s");
    return c.done(summary + fmt(secs) + " s");
}

Outcome flops_ratio() {
    Checks c;
    std::string detail;
    for (const char* size : {"150M", "1B", "2B", "4B", "8B"}) {
        const auto dec = models::preset(std::string("dec-") + size), red = models::preset(std::string("red-") + size);
        const double ratio = models::flops_per_sequence(dec, {2048, 0}, models::FlopsMode::Train) /
                             models::flops_per_sequence(red, {2048, 1024}, models::FlopsMode::Train);
        detail += std::string(detail.empty() ? "" : ", ") + size + " " + fmt(ratio, 4);
        c.expect(ratio >= 1.6 && ratio <= 2.4, std::string(size) + " ratio " + fmt(ratio, 4) + " outside [1.6, 2.4]");
    }
    auto out = c.done(detail);
    if (!out.pass) out.detail += " (all rows: " + detail + ")";
    return out;
}

Outcome scaling_recovery() {
    Checks c;
    auto synth = [](double noise, std::uint64_t seed) {
        std::mt19937_64 g(seed);
        std::normal_distribution<double> z(0.0, noise);
        std::vector<scaling::Observation> obs;
        for (int i = 0; i < 12; ++i) {
            const double C = std::pow(10.0, 15.0 + 0.5 * i);
            obs.push_back({C, 5.0 * std::pow(C, -0.22) * (noise > 0 ? std::exp(z(g)) : 1.0)});
        }
        return obs;
    };
    const double clean = std::abs(scaling::fit_power_law(synth(0, 0)).alpha - 0.22);
    c.expect(clean < 1e-6, "noiseless |dalpha| " + fmt(clean));
    double noisy = 0.0;
    for (std::uint64_t s = 0; s < 100; ++s) noisy = std::max(noisy, std::abs(scaling::fit_power_law(synth(0.01, s)).alpha - 0.22));
    c.expect(noisy < 0.02, "1% noise |dalpha| " + fmt(noisy));

    // Crossing curves a: 10·C^-0.1, b: 30·C^-0.2 on a shared 10-budget grid.
    std::vector<eval::EvalRecord> rs;
    for (int i = 0; i < 10; ++i) {
        const double C = std::pow(10.0, 2.0 + 0.6 * i);
        for (auto [tag, a, alpha] : {std::tuple{"a", 10.0, 0.1}, std::tuple{"b", 30.0, 0.2}}) {
            eval::EvalRecord r;
            r.model = tag;
            r.step = i;
            r.train_flops = C;
            r.ppl = a * std::pow(C, -alpha);
            rs.push_back(r);
        }
    }
    std::vector<std::pair<std::string, std::int64_t>> brute;
    for (const auto& r : rs) {
        bool dominated = false;
        for (const auto& s : rs) dominated = dominated || (&s != &r && s.train_flops <= r.train_flops && s.ppl <= r.ppl);
        if (!dominated) brute.emplace_back(r.model, r.step);
    }
    std::vector<std::pair<std::string, std::int64_t>> got;
    for (const auto& p : scaling::pareto_frontier(rs)) got.emplace_back(p.model, p.step);
    std::sort(brute.begin(), brute.end());
    std::sort(got.begin(), got.end());
    c.expect(got == brute, "frontier differs from brute-force envelope");
    return c.done("noiseless |dalpha| " + fmt(clean) + ", worst of 100 noisy " + fmt(noisy) + ", frontier == envelope (" +
                  std::to_string(got.size()) + " points)");
}

Outcome evaluation_identities() {
    Checks c;
    std::vector<data::Row> rows;
    for (std::uint64_t s = 0; s < 3; ++s) rows.push_back(eval::prefix_row(random_tokens(64, 90 + s), 32));
    double worst_ppl = 0.0, worst_nll = 0.0;
    for (const char* preset : {"dec-desk", "red-desk"}) {
        models::Model m(models::preset(preset), 1);
        const auto rec = eval::prefix_ppl(m, rows, {preset});
        worst_ppl = std::max(worst_ppl, std::abs(rec.ppl / 512.0 - 1.0));
        worst_nll = std::max(worst_nll, std::abs(rec.nll - std::log(512.0)));
    }
    c.expect(worst_ppl < 1e-12, "uniform ppl rel err " + fmt(worst_ppl));

    // Causal attention of a real model: one visible key at position 0.
    models::Model m(models::preset("dec-desk"), 2, {false});
    models::ForwardOptions opts;
    opts.capture_attention = true;
    const auto out = m.forward_decllm(random_tokens(256, 93), models::AttentionMask::causal(), opts);
    const auto curve = eval::locality_metric(out.attention);
    c.expect(curve.front() == 1.0, "locality(0) = " + fmt(curve.front(), 17));
    for (double v : curve) c.expect(v >= 0.0 && v <= 1.0 + 1e-12, "locality outside [0, 1]");

    const std::size_t n = 64;
    models::CapturedAttention uni;
    uni.rows = uni.cols = n;
    uni.head_probs.emplace_back(n * n, 0.0);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t j = 0; j <= t; ++j) uni.head_probs[0][t * n + j] = 1.0 / static_cast<double>(t + 1);
    const auto uc = eval::locality_metric(std::vector{uni});
    double closed = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double expect = static_cast<double>(std::min<std::size_t>(5, t + 1)) / static_cast<double>(t + 1);
        closed = std::max(closed, std::abs(uc[t] - expect));
    }
    c.expect(closed < 1e-10, "closed-form drift " + fmt(closed));

    const auto map = eval::average_attention(out.attention, models::AttentionSite::DecoderSelf);
    const auto pooled = eval::pool_attention(map, 128);
    double total = 0.0, pooled_total = 0.0;
    for (double v : map.weights) total += v;
    for (double v : pooled.grid) pooled_total += v * static_cast<double>(pooled.stride_q * pooled.stride_k);
    c.expect(pooled.rows == 128 && std::abs(total - pooled_total) < 1e-9, "mass drift " + fmt(std::abs(total - pooled_total)));
    return c.done("uniform ppl rel err " + fmt(worst_ppl) + " (nll - ln V " + fmt(worst_nll) + "), locality(0) == 1, closed form drift " + fmt(closed) +
                  ", pooled mass drift " + fmt(std::abs(total - pooled_total)));
}

Outcome data_pipeline() {
    Checks c;
    std::ifstream f(LMLAB_FIXTURES "/bpe_1k.txt");
    std::stringstream ss;
    ss << f.rdbuf();
    const std::vector<std::string> docs{ss.str()};
    const auto tok = data::bpe_train(docs, 450).tokenizer;
    std::mt19937_64 g(17);
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
        std::string s(g() % 300, '\0');
        for (auto& ch : s) ch = g() % 3 ? "the river bridge "[g() % 17] : static_cast<char>(g() % 256);
        if (tok.decode(tok.encode(s)) != s) ++bad;
    }
    c.expect(bad == 0, std::to_string(bad) + "/1000 strings did not round-trip");

    std::size_t prefix_rows = 0;
    for (std::size_t T : {16u, 64u, 130u, 256u}) {
        for (const auto& r : data::chunk_pretrain(docs, tok, T, data::ChunkMode::Prefix)) {
            ++prefix_rows;
            c.expect(r.prefix_len == T / 2, "prefix row with k != T/2");
            for (std::size_t t = 0; t < T; ++t) c.expect(r.loss_mask[t] == (t >= T / 2), "prefix loss mask");
        }
    }
    std::size_t ft = 0;
    for (int i = 0; i < 200; ++i) {
        std::string in(1 + g() % 40, 'a'), out(1 + g() % 40, 'b');
        for (auto& ch : in) ch = static_cast<char>('a' + g() % 26);
        const auto row = data::format_finetune({in, out}, data::Tokenizer{});
        const auto k = in.size();
        c.expect(row.prefix_len == k, "finetune prefix length");
        for (std::size_t t = 0; t < row.tokens.size(); ++t) c.expect(row.loss_mask[t] == (t >= k), "finetune mask");
        c.expect(row.loss_tokens() == out.size() + 1, "finetune target span");
        ++ft;
    }
    return c.done("1000/1000 round trips, " + std::to_string(prefix_rows) + " prefix rows with k == T/2, " +
                  std::to_string(ft) + " finetune masks exact");
}

// --- CLI -------------------------------------------------------------------

const fs::path kWork = fs::temp_directory_path() / "lmlab_acceptance";

int lmlab(const std::string& args) {
    const auto cmd = std::string(LMLAB_BIN) + " " + args + " >>" + (kWork / "cli.log").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Every artifact except run.json (which records its own output directory).
bool same_artifacts(const fs::path& a, const fs::path& b, std::size_t& files) {
    std::vector<fs::path> rel;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file() && e.path().filename() != "run.json") rel.push_back(fs::relative(e.path(), a));
    }
    if (rel.empty()) return false;
    for (const auto& r : rel) {
        if (!fs::exists(b / r) || slurp(a / r) != slurp(b / r)) return false;
        ++files;
    }
    return true;
}

Outcome cli_determinism() {
    Checks c;
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    const std::string corpus = LMLAB_FIXTURES "/bpe_1k.txt";
    auto dir = [](const std::string& n) { return (kWork / n).string(); };
    const std::string tok = dir("tok") + "/tokenizer.json";
    const std::vector<std::pair<std::string, std::string>> runs{
        {"tok", "tokenizer-train --data " + corpus + " --vocab-size 320"},
        {"pre", "pretrain --model red-desk --data " + corpus + " --tokenizer " + tok +
                    " --seq-len 32 --steps 30 --batch-size 4 --warmup 5 --checkpoint-every 10"},
        {"ev10", "eval-ppl --checkpoint " + dir("pre") + "/checkpoints/10 --data " + corpus + " --tokenizer " + tok +
                     " --context-len 32"},
        {"ev20", "eval-ppl --checkpoint " + dir("pre") + "/checkpoints/20 --data " + corpus + " --tokenizer " + tok +
                     " --context-len 32"},
        {"ev30", "eval-ppl --checkpoint " + dir("pre") + " --data " + corpus + " --tokenizer " + tok +
                     " --context-len 32"},
        {"ext", "extrapolate --checkpoint " + dir("pre") + " --data " + corpus + " --tokenizer " + tok +
                    " --context-lens 32,64,128 --prefix-lens 8,16 --max-rows 3"},
        {"att", "analyze-attention --checkpoint " + dir("pre") + " --data " + corpus + " --tokenizer " + tok +
                    " --context-len 64 --pool 16"},
        {"dec", "decode --checkpoint " + dir("pre") + " --tokenizer " + tok + " --prompt river --max-new 16"},
        {"fin", "finetune --init " + dir("pre") + " --data " + dir("ft.jsonl") + " --tokenizer " + tok +
                    " --steps 5 --batch-size 2 --max-input 16 --max-output 15"},
        {"fit", "fit-scaling --records " + dir("ev10") + "/eval.csv," + dir("ev20") + "/eval.csv," + dir("ev30") +
                    "/eval.csv --budgets 1e9,5e9"},
        {"fro", "frontier --records " + dir("ev10") + "/eval.csv," + dir("ev20") + "/eval.csv," + dir("ev30") + "/eval.csv"},
        {"flo", "flops --model red-1B --seq 2048"},
    };
    std::ofstream(kWork / "ft.jsonl") << R"({"input": "the river", "target": "flows"})" << '\n'
                                      << R"({"input": "a bridge", "target": "spans"})" << '\n';
    std::size_t files = 0, commands = 0;
    for (const auto& [name, args] : runs) {
        const int code = lmlab(args + " --out " + dir(name));
        c.expect(code == 0, name + " exited " + std::to_string(code));
        if (code != 0) continue;
        const int again = lmlab("replay " + dir(name) + "/run.json --out " + dir(name + "_replay"));
        c.expect(again == 0, name + " replay exited " + std::to_string(again));
        c.expect(same_artifacts(dir(name), dir(name + "_replay"), files), name + " artifacts differ on replay");
        ++commands;
    }
    return c.done(std::to_string(commands) + " commands replayed from run.json, " + std::to_string(files) +
                  " artifacts byte-identical");
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient correctness", gradient_correctness},
        {"bounded attention logits", bounded_logits},
        {"mask semantics", mask_semantics},
        {"rotary offset invariance and continuous positions", rotary_positions},
        {"optimizer oracle and schedule endpoints", optimizer_oracle},
        {"desk training", desk_training},
        {"flops ratio DecLLM/RedLLM in [1.6, 2.4]", flops_ratio},
        {"scaling fit recovery and frontier", scaling_recovery},
        {"evaluation identities", evaluation_identities},
        {"data pipeline", data_pipeline},
        {"cli determinism", cli_determinism},
    };
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu criteria, %d failed\n", criteria.size(), failures);
    return failures ? 1 : 0;
}
