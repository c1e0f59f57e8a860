#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gradcheck.hpp"
#include "lmlab/common/error.hpp"
#include "lmlab/models/flops.hpp"
#include "lmlab/numerics/ops.hpp"
#include "lmlab/training/checkpoint.hpp"
#include "lmlab/training/trainer.hpp"

using namespace lmlab;
using namespace lmlab::training;
using lmlab::testing::grad_check;
using lmlab::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

models::ModelConfig small(models::Arch arch) {
    auto c = models::preset(arch == models::Arch::DecLLM ? "dec-desk" : "red-desk");
    c.d = 16;
    c.d_ffn = 32;
    c.h = 2;
    c.d_h = 8;
    c.vocab_size = 300;
    c.max_seq = 64;
    return c;
}

std::vector<data::Row> repeated_rows(std::size_t T, data::ChunkMode mode, std::size_t n_chars = 3000) {
    std::string text;
    while (text.size() < n_chars) text += "a stitch in time saves nine. ";
    std::vector<std::string> docs{text};
    return data::chunk_pretrain(docs, data::Tokenizer{}, T, mode);
}

fs::path fresh_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("lmlab_train_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Direct log-softmax.
double oracle_nll(const Tensor& logits, std::size_t row, TokenId target) {
    double m = -INFINITY;
    for (std::size_t c = 0; c < logits.dim(1); ++c) m = std::max(m, logits.at(row, c));
    double s = 0;
    for (std::size_t c = 0; c < logits.dim(1); ++c) s += std::exp(logits.at(row, c) - m);
    return m + std::log(s) - logits.at(row, static_cast<std::size_t>(target));
}

}  // namespace

TEST_CASE("lm_loss examples") {
    std::vector<TokenId> targets{1, 3, 0, 2};
    std::vector<std::uint8_t> all{1, 1, 1, 1};
    auto uniform = lm_loss(Tensor::zeros({4, 7}), targets, all);
    CHECK(uniform.nll.item() == doctest::Approx(std::log(7.0)).epsilon(1e-15));
    CHECK(uniform.z.item() == doctest::Approx(1e-4 * std::log(7.0) * std::log(7.0)).epsilon(1e-14));

    auto onehot = Tensor::from({1, 4}, {0, 0, 60, 0});
    std::vector<TokenId> t2{2};
    std::vector<std::uint8_t> m1{1};
    auto sharp = lm_loss(onehot, t2, m1);
    CHECK(sharp.nll.item() < 1e-20);
    CHECK(sharp.z.item() == doctest::Approx(1e-4 * 3600.0).epsilon(1e-12));
    CHECK(sharp.objective.item() == doctest::Approx(sharp.nll.item() + sharp.z.item()));

    std::vector<std::uint8_t> none{0, 0, 0, 0};
    CHECK_THROWS_AS(lm_loss(Tensor::zeros({4, 7}), targets, none), InputError);
}

TEST_CASE("lm_loss matches a direct log-softmax oracle") {
    auto logits = random_tensor({4, 300}, 5, 3.0, false);
    std::vector<TokenId> targets{10, 299, 0, 57};
    std::vector<std::uint8_t> mask{1, 0, 1, 1};
    auto loss = lm_loss(logits, targets, mask);
    double expect = 0;
    for (std::size_t r : {0u, 2u, 3u}) expect += oracle_nll(logits, r, targets[r]);
    CHECK(std::abs(loss.nll.item() - expect / 3.0) < 1e-10);

    auto half = lm_loss(logits, targets, mask, 6.0);
    CHECK(std::abs(half.nll.item() - expect / 6.0) < 1e-10);
}

TEST_CASE("lm_loss gradient") {
    auto logits = random_tensor({3, 9}, 6, 2.0);
    std::vector<TokenId> targets{4, 0, 8};
    std::vector<std::uint8_t> mask{1, 1, 0};
    auto res = grad_check([&] { return lm_loss(logits, targets, mask).objective; }, {logits});
    CHECK(res.max_rel_error < 1e-6);
    // The masked row receives no gradient at all.
    logits.zero_grad();
    backward(lm_loss(logits, targets, mask).objective);
    for (std::size_t c = 0; c < 9; ++c) CHECK(logits.grad()[2 * 9 + c] == 0.0);
}

TEST_CASE("loss-masked tokens contribute nothing through the input path") {
    models::Model m(small(models::Arch::DecLLM), 3, {false});
    data::Row row;
    row.tokens = {5, 6, 7, 8, 9};
    row.prefix_len = 2;
    row.loss_mask = {0, 0, 1, 1, 0};
    auto loss_with = [&](TokenId last) {
        auto r = row;
        r.tokens.back() = last;
        auto a = forward_row(m, r);
        return lm_loss(a.logits(), a.targets, a.mask).objective.item();
    };
    // The final token is masked and predicts nothing, so its identity
    // cannot change the loss.
    CHECK(loss_with(9) == loss_with(200));

    auto a = forward_row(m, row);
    m.params().zero_grad();
    auto logits = a.output.logits;
    backward(lm_loss(logits, a.targets, a.mask).objective);
    const auto V = logits.dim(1);
    for (std::size_t r : {0u, 3u, 4u})
        for (std::size_t c = 0; c < V; ++c) CHECK(logits.grad()[r * V + c] == 0.0);
}

TEST_CASE("aligned rows for both architectures") {
    data::Row row;
    row.tokens = {1, 2, 3, 4, 5, 6};
    row.prefix_len = 4;
    row.loss_mask = {0, 0, 0, 0, 1, 1};
    models::Model dec(small(models::Arch::DecLLM), 1);
    models::Model red(small(models::Arch::RedLLM), 1);
    auto d = forward_row(dec, row);
    auto r = forward_row(red, row);
    CHECK(d.count() == 2);
    CHECK(r.count() == 2);
    CHECK(d.targets[3] == 5);
    CHECK(d.targets[4] == 6);
    CHECK(r.targets == std::vector<TokenId>{5, 6});
    CHECK(r.output.positions.front() == 4);

    auto causal = row;
    causal.prefix_len = 0;
    CHECK_THROWS_AS(forward_row(red, causal), InputError);
    auto leaky = row;
    leaky.loss_mask = {0, 1, 0, 0, 1, 1};
    CHECK_THROWS_AS(forward_row(red, leaky), InputError);
}

TEST_CASE("adafactor hand step") {
    models::ParamSet ps;
    auto& p = ps.add("w", Tensor::from({1}, {2.0}, true));
    backward(ops::sum(p));  // g = 1
    Adafactor opt;
    opt.step(ps, 0.01);
    CHECK(p.at(0) == doctest::Approx(1.99).epsilon(1e-15));
    CHECK(opt.second_moments().at("w")[0] == doctest::Approx(1.0).epsilon(1e-15));

    ps.zero_grad();
    opt.step(ps, 0.01);
    CHECK(p.at(0) == doctest::Approx(1.99).epsilon(1e-15));
}

TEST_CASE("adafactor ten-step trace matches a scalar hand computation") {
    const double c = 0.3, lr = 0.05;
    models::ParamSet ps;
    auto& p = ps.add("x", Tensor::from({2}, {1.5, -0.4}, true));
    Adafactor opt;

    double x[2] = {1.5, -0.4}, v[2] = {0, 0};
    for (int t = 1; t <= 10; ++t) {
        ps.zero_grad();
        // f = Σ (x_i − c)² / 2  →  g = x − c
        auto d = ops::sub(p, Tensor::full({2}, c));
        backward(ops::scale(ops::sum(ops::mul(d, d)), 0.5));
        opt.step(ps, lr);

        const double beta = 1.0 - std::pow(t, -0.8);
        double u[2], sq = 0;
        for (int i = 0; i < 2; ++i) {
            const double g = x[i] - c;
            v[i] = beta * v[i] + (1 - beta) * (g * g + 1e-30);
            u[i] = g / std::sqrt(v[i]);
            sq += u[i] * u[i];
        }
        const double scale = std::max(1.0, std::sqrt(sq / 2));
        for (int i = 0; i < 2; ++i) x[i] -= lr * u[i] / scale;
        CAPTURE(t);
        CHECK(std::abs(p.at(0) - x[0]) < 1e-12);
        CHECK(std::abs(p.at(1) - x[1]) < 1e-12);
    }
    CHECK(opt.steps() == 10);
}

TEST_CASE("adafactor update tends to lr under a constant gradient") {
    models::ParamSet ps;
    auto& p = ps.add("w", Tensor::from({3}, {0, 0, 0}, true));
    Adafactor opt;
    double prev = 0;
    for (int t = 0; t < 100; ++t) {
        ps.zero_grad();
        backward(ops::scale(ops::sum(p), 0.7));
        prev = p.at(0);
        opt.step(ps, 0.02);
    }
    CHECK(std::abs((prev - p.at(0)) - 0.02) < 1e-12);
}

TEST_CASE("adafactor is independent of parameter order and rejects non-finite gradients") {
    auto run = [](bool reversed) {
        models::ParamSet ps;
        std::vector<std::pair<std::string, Tensor>> items{{"a", random_tensor({3, 2}, 1)},
                                                          {"b", random_tensor({4}, 2)}};
        if (reversed) std::reverse(items.begin(), items.end());
        for (auto& [n, t] : items) ps.add(n, t);
        Adafactor opt;
        for (int s = 0; s < 3; ++s) {
            ps.zero_grad();
            backward(ops::add(ops::sum(ops::mul(ps.get("a"), ps.get("a"))), ops::sum(ops::silu(ps.get("b")))));
            opt.step(ps, 0.1);
        }
        std::vector<double> out(ps.get("a").data().begin(), ps.get("a").data().end());
        out.insert(out.end(), ps.get("b").data().begin(), ps.get("b").data().end());
        return out;
    };
    CHECK(run(false) == run(true));

    models::ParamSet ps;
    auto& w = ps.add("w", Tensor::from({2}, {1.0, 2.0}, true));
    backward(ops::sum(w));
    w.mutable_grad()[1] = NAN;
    Adafactor opt;
    CHECK_THROWS_AS(opt.step(ps, 0.1), NonFiniteError);
    CHECK(w.at(0) == 1.0);
    CHECK(opt.steps() == 0);
}

TEST_CASE("learning-rate schedule endpoints") {
    CHECK(lr_schedule(0, 10000) == 0.0);
    CHECK(lr_schedule(1000, 10000) == doctest::Approx(0.005).epsilon(1e-15));
    CHECK(lr_schedule(2000, 10000) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(lr_schedule(6000, 10000) == doctest::Approx(0.0055).epsilon(1e-13));
    CHECK(lr_schedule(10000, 10000) == doctest::Approx(0.001).epsilon(1e-13));
    CHECK(lr_schedule(20000, 10000) == doctest::Approx(0.001).epsilon(1e-13));
    for (std::int64_t s = 2000; s < 10000; s += 500) CHECK(lr_schedule(s + 500, 10000) < lr_schedule(s, 10000));
    TrainConfig ft;
    ft.lr_kind = LrKind::Constant;
    CHECK(ft.lr_at(1) == 0.001);
    CHECK(ft.lr_at(100000) == 0.001);
}

TEST_CASE("gradient clipping") {
    auto make = [](std::vector<double> g) {
        models::ParamSet ps;
        auto& t = ps.add("g", Tensor::from({g.size()}, std::vector<double>(g.size(), 0.0), true));
        backward(ops::sum(t));
        std::copy(g.begin(), g.end(), t.mutable_grad().begin());
        return ps;
    };
    auto small_ps = make({0.3, 0.4});
    CHECK(clip_grads(small_ps) == doctest::Approx(0.5));
    CHECK(small_ps.get("g").grad()[0] == 0.3);

    auto big = make({0.0, 4.0});
    CHECK(clip_grads(big) == doctest::Approx(4.0));
    CHECK(big.get("g").grad()[1] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(global_grad_norm(big) == doctest::Approx(1.0).epsilon(1e-15));

    auto dir = make({1.0, -2.0});
    clip_grads(dir);
    const auto g = dir.get("g").grad();
    const double cosine = (g[0] * 1.0 + g[1] * -2.0) / (std::sqrt(5.0) * global_grad_norm(dir));
    CHECK(cosine == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("decoder-only training lowers the loss") {
    models::Model m(small(models::Arch::DecLLM), 1);
    TrainConfig tc;
    tc.steps = 120;
    tc.batch_size = 2;
    tc.warmup = 10;
    auto rows = repeated_rows(32, data::ChunkMode::Causal);
    Trainer tr(m, tc, rows);
    std::vector<double> losses;
    for (int s = 0; s < 120; ++s) losses.push_back(tr.step().loss);
    CHECK(losses.front() == doctest::Approx(std::log(300.0)).epsilon(1e-12));
    auto avg = [&](int from) {
        double a = 0;
        for (int i = from; i < from + 20; ++i) a += losses[static_cast<std::size_t>(i)];
        return a / 20;
    };
    for (int w = 0; w + 40 <= 120; w += 20) CHECK(avg(w + 20) < avg(w));
    CHECK(tr.last().tokens_seen == 120u * 2u * 32u);
    CHECK(tr.last().wall_seconds == 0.0);
}

TEST_CASE("training log bookkeeping") {
    models::Model m(small(models::Arch::RedLLM), 2);
    TrainConfig tc;
    tc.steps = 5;
    tc.batch_size = 3;
    tc.warmup = 2;
    Trainer tr(m, tc, repeated_rows(32, data::ChunkMode::Prefix));
    double flops = 0;
    std::uint64_t tokens = 0;
    for (int s = 1; s <= 5; ++s) {
        auto log = tr.step();
        CHECK(log.step == s);
        CHECK(log.lr == tc.lr_at(s));
        CHECK(log.train_flops > flops);
        CHECK(log.tokens_seen > tokens);
        flops = log.train_flops;
        tokens = log.tokens_seen;
    }
    CHECK(flops == doctest::Approx(15 * models::flops_per_sequence(m.config(), {32, 16}, models::FlopsMode::Train)));
    CHECK(std::string(kTrainLogHeader) == "step,loss,z_loss,lr,grad_norm,tokens_seen,train_flops,wall_seconds");
    const auto line = format_log_row(tr.last());
    CHECK(std::count(line.begin(), line.end(), ',') == 7);

    models::Model dec(small(models::Arch::DecLLM), 2);
    CHECK_NOTHROW(Trainer(dec, tc, repeated_rows(32, data::ChunkMode::Prefix)));
    CHECK_THROWS_AS(Trainer(m, tc, repeated_rows(32, data::ChunkMode::Causal)), InputError);
}

TEST_CASE("batches cover every row once per epoch") {
    models::Model m(small(models::Arch::DecLLM), 1);
    TrainConfig tc;
    tc.batch_size = 4;
    auto rows = repeated_rows(16, data::ChunkMode::Causal, 200);
    REQUIRE(rows.size() == 12);
    Trainer tr(m, tc, rows);
    std::vector<int> seen(12, 0);
    for (int s = 1; s <= 3; ++s)
        for (auto i : tr.batch_indices(s)) ++seen[i];
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK(tr.batch_indices(4) != tr.batch_indices(1));
}

TEST_CASE("resume reproduces the uninterrupted run bit-exactly") {
    TrainConfig tc;
    tc.steps = 30;
    tc.batch_size = 2;
    tc.warmup = 5;
    tc.dropout = 0.1;
    tc.seed = 9;
    auto rows = repeated_rows(32, data::ChunkMode::Prefix);

    models::Model a(small(models::Arch::RedLLM), 4);
    Trainer ta(a, tc, rows);
    std::vector<double> full;
    auto dir = fresh_dir("resume");
    for (int s = 1; s <= 20; ++s) {
        auto log = ta.step();
        if (s == 10) ta.save_checkpoint(dir);
        if (s > 10) full.push_back(log.loss);
    }

    models::Model b(small(models::Arch::RedLLM), 777);
    Trainer tb(b, tc, rows);
    tb.load_checkpoint(latest_checkpoint(dir));
    CHECK(tb.completed_steps() == 10);
    std::vector<double> resumed;
    for (int s = 0; s < 10; ++s) resumed.push_back(tb.step().loss);
    CHECK(resumed == full);
    CHECK(tb.last().train_flops == ta.last().train_flops);
}

TEST_CASE("checkpoint save-load-save is byte identical") {
    models::Model m(small(models::Arch::DecLLM), 5);
    TrainConfig tc;
    tc.batch_size = 1;
    Trainer tr(m, tc, repeated_rows(32, data::ChunkMode::Causal));
    tr.step();
    tr.step();
    auto d1 = fresh_dir("ck1"), d2 = fresh_dir("ck2");
    tr.save_checkpoint(d1);
    auto ck = read_checkpoint(d1 / "2");
    write_checkpoint(d2 / "2", ck);
    CHECK(slurp(d1 / "2" / "manifest.json") == slurp(d2 / "2" / "manifest.json"));
    CHECK(slurp(d1 / "2" / "params.bin") == slurp(d2 / "2" / "params.bin"));

    auto restored = model_from_checkpoint(ck);
    std::vector<TokenId> toks{1, 2, 3};
    auto x = m.forward_decllm(toks).logits, y = restored.forward_decllm(toks).logits;
    CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
    CHECK_THROWS_AS(read_checkpoint(fresh_dir("missing")), InputError);
}

TEST_CASE("non-finite parameters halt training with the step number") {
    models::Model m(small(models::Arch::DecLLM), 6);
    TrainConfig tc;
    tc.batch_size = 1;
    Trainer tr(m, tc, repeated_rows(32, data::ChunkMode::Causal));
    tr.step();
    m.params().get("dec.0.ffn.w_in").mutable_data()[0] = NAN;
    try {
        tr.step();
        FAIL("expected NonFiniteError");
    } catch (const NonFiniteError& e) {
        CHECK(std::string(e.what()).find("step 2") != std::string::npos);
    }
}

TEST_CASE("train config json") {
    TrainConfig c;
    c.steps = 77;
    c.prefix = PrefixAttention::Bidirectional;
    c.lr_kind = LrKind::Constant;
    nlohmann::json j = c;
    auto back = j.get<TrainConfig>();
    CHECK(nlohmann::json(back) == j);
    auto partial = nlohmann::json{{"steps", 3}}.get<TrainConfig>();
    CHECK(partial.steps == 3);
    CHECK(partial.batch_size == 32);
    CHECK_THROWS_AS((nlohmann::json{{"stepz", 3}}.get<TrainConfig>()), InputError);
}
