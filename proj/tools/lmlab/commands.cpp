#include <fstream>
#include <iostream>
#include <map>

#include "config.hpp"
#include "lmlab/common/csv.hpp"
#include "lmlab/common/error.hpp"
#include "lmlab/eval/attention_stats.hpp"
#include "lmlab/eval/decode.hpp"
#include "lmlab/eval/perplexity.hpp"
#include "lmlab/models/flops.hpp"
#include "lmlab/scaling/scaling.hpp"
#include "lmlab/training/checkpoint.hpp"
#include "lmlab/training/trainer.hpp"

namespace lmlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path out_dir(const json& cfg) {
    fs::path p = cfg.at("out").get<std::string>();
    fs::create_directories(p);
    return p;
}

std::string str(const json& cfg, const char* key) { return cfg.at(key).get<std::string>(); }
std::int64_t num(const json& cfg, const char* key) { return cfg.at(key).get<std::int64_t>(); }
std::size_t count(const json& cfg, const char* key) {
    const auto v = num(cfg, key);
    if (v < 0) throw UsageError(std::string(key) + " must not be negative");
    return static_cast<std::size_t>(v);
}

// A preset name or a path to a model config JSON.
models::ModelConfig model_config(const std::string& name_or_path) {
    if (fs::exists(name_or_path) && fs::is_regular_file(name_or_path)) {
        std::ifstream f(name_or_path);
        try {
            auto c = json::parse(f).get<models::ModelConfig>();
            c.validate();
            return c;
        } catch (const std::exception& e) {
            throw UsageError("bad model config " + name_or_path + ": " + e.what());
        }
    }
    try {
        return models::preset(name_or_path);
    } catch (const InputError& e) {
        throw UsageError(e.what());
    }
}

std::string model_name(const models::ModelConfig& c) {
    return std::string(c.arch == models::Arch::DecLLM ? "dec-" : "red-") + c.size_tag;
}

data::Tokenizer tokenizer(const json& cfg) {
    const auto path = str(cfg, "tokenizer");
    return path.empty() ? data::Tokenizer{} : data::Tokenizer::load(path);
}

fs::path resolve_checkpoint(const fs::path& p) {
    if (fs::exists(p / "manifest.json")) return p;
    if (fs::is_directory(p / "checkpoints")) return training::latest_checkpoint(p / "checkpoints");
    if (fs::is_directory(p)) return training::latest_checkpoint(p);
    throw InputError("missing checkpoint: " + p.string());
}

struct LoadedModel {
    models::Model model;
    eval::EvalMeta meta;
};

// A trained checkpoint, or a freshly initialised preset when no checkpoint is given.
LoadedModel load_model(const json& cfg) {
    const auto ck_path = str(cfg, "checkpoint");
    eval::EvalMeta meta;
    if (ck_path.empty()) {
        auto c = model_config(str(cfg, "model"));
        meta.model = model_name(c);
        meta.params = count_params(c);
        return {models::Model(c, static_cast<std::uint64_t>(num(cfg, "seed"))), meta};
    }
    const auto ck = training::read_checkpoint(resolve_checkpoint(ck_path));
    meta.model = model_name(ck.model);
    meta.step = ck.step;
    meta.params = count_params(ck.model);
    if (ck.extra.contains("train_flops")) meta.train_flops = ck.extra["train_flops"].get<double>();
    return {training::model_from_checkpoint(ck), meta};
}

void check_vocab(const data::Tokenizer& tok, const models::ModelConfig& c) {
    if (tok.vocab_size() > c.vocab_size) {
        throw UsageError("tokenizer has " + std::to_string(tok.vocab_size()) + " tokens but the model only " +
                         std::to_string(c.vocab_size));
    }
}

std::vector<std::vector<TokenId>> eval_sequences(const json& cfg, const data::Tokenizer& tok, std::size_t T) {
    const auto docs = data::read_documents(str(cfg, "data"));
    auto rows = data::chunk_pretrain(docs, tok, T, data::ChunkMode::Causal);
    const auto max_rows = count(cfg, "max_rows");
    if (max_rows > 0 && rows.size() > max_rows) rows.resize(max_rows);
    if (rows.empty()) throw InputError("corpus has fewer than " + std::to_string(T) + " tokens");
    std::vector<std::vector<TokenId>> out;
    for (auto& r : rows) out.push_back(std::move(r.tokens));
    return out;
}

std::size_t context_len(const json& cfg, const models::ModelConfig& c) {
    const auto T = count(cfg, "context_len");
    return T == 0 ? c.max_seq : T;
}

// Runs the training loop, writing log.csv and checkpoints under out/.
void train_loop(models::Model& model, const training::TrainConfig& tc, std::vector<data::Row> rows, const json& cfg) {
    const auto out = out_dir(cfg);
    const auto ck_dir = out / "checkpoints";
    training::Trainer trainer(model, tc, std::move(rows));

    std::vector<std::string> kept;
    if (cfg.at("resume").get<bool>() && fs::is_directory(ck_dir)) {
        const auto latest = training::latest_checkpoint(ck_dir);
        trainer.load_checkpoint(latest);
        std::ifstream old(out / "log.csv");
        std::string line;
        std::getline(old, line);
        while (std::getline(old, line)) {
            if (std::stoll(line.substr(0, line.find(','))) <= trainer.completed_steps()) kept.push_back(line);
        }
        std::cerr << "resumed from " << latest.string() << '\n';
    }
    std::ofstream log(out / "log.csv", std::ios::trunc);
    log << training::kTrainLogHeader << '\n';
    for (const auto& l : kept) log << l << '\n';

    const auto every = num(cfg, "checkpoint_every");
    const auto print_every = std::max<std::int64_t>(1, num(cfg, "print_every"));
    while (trainer.completed_steps() < tc.steps) {
        const auto s = trainer.step();
        log << training::format_log_row(s) << '\n' << std::flush;
        if (s.step % print_every == 0 || s.step == tc.steps) {
            std::cerr << "step " << s.step << " loss " << s.loss << " lr " << s.lr << '\n';
        }
        if (every > 0 && s.step % every == 0 && s.step != tc.steps) trainer.save_checkpoint(ck_dir);
    }
    trainer.save_checkpoint(ck_dir);
    std::cout << "final loss " << trainer.last().loss << " after " << trainer.completed_steps() << " steps\n";
}

void cmd_tokenizer_train(const json& cfg) {
    const auto docs = data::read_documents(str(cfg, "data"));
    const auto res = data::bpe_train(docs, count(cfg, "vocab_size"));
    if (!res.complete) std::cerr << "warning: " << res.warning << '\n';
    const auto path = out_dir(cfg) / "tokenizer.json";
    res.tokenizer.save(path.string());
    std::cout << "vocab " << res.tokenizer.vocab_size() << " -> " << path.string() << '\n';
}

void cmd_pretrain(const json& cfg) {
    const auto mc = model_config(str(cfg, "model"));
    const auto tok = tokenizer(cfg);
    check_vocab(tok, mc);
    auto T = count(cfg, "seq_len");
    if (T == 0) T = mc.max_seq;
    const auto mode = mc.arch == models::Arch::DecLLM ? data::ChunkMode::Causal : data::ChunkMode::Prefix;
    auto rows = data::chunk_pretrain(data::read_documents(str(cfg, "data")), tok, T, mode);
    if (rows.empty()) throw InputError("corpus is shorter than one " + std::to_string(T) + "-token row");

    training::TrainConfig tc;
    tc.steps = num(cfg, "steps");
    tc.batch_size = count(cfg, "batch_size");
    tc.warmup = num(cfg, "warmup");
    tc.peak_lr = cfg.at("peak_lr").get<double>();
    tc.floor_ratio = cfg.at("floor_ratio").get<double>();
    tc.clip = cfg.at("clip").get<double>();
    tc.z_loss = cfg.at("z_loss").get<double>();
    tc.dropout = cfg.at("dropout").get<double>();
    tc.seed = static_cast<std::uint64_t>(num(cfg, "seed"));
    tc.shuffle = cfg.at("shuffle").get<bool>();
    models::Model model(mc, tc.seed);
    train_loop(model, tc, std::move(rows), cfg);
}

void cmd_finetune(const json& cfg) {
    const auto ck = training::read_checkpoint(resolve_checkpoint(str(cfg, "init")));
    auto model = training::model_from_checkpoint(ck);
    const auto tok = tokenizer(cfg);
    check_vocab(tok, ck.model);
    const data::FinetuneLimits limits{count(cfg, "max_input"), count(cfg, "max_output")};
    std::vector<data::Row> rows;
    for (const auto& ex : data::read_finetune_jsonl(str(cfg, "data"))) rows.push_back(data::format_finetune(ex, tok, limits));
    if (rows.empty()) throw InputError("no finetuning examples in " + str(cfg, "data"));

    training::TrainConfig tc;
    tc.steps = num(cfg, "steps");
    tc.batch_size = count(cfg, "batch_size");
    tc.lr_kind = training::LrKind::Constant;
    tc.constant_lr = cfg.at("lr").get<double>();
    tc.clip = cfg.at("clip").get<double>();
    tc.z_loss = cfg.at("z_loss").get<double>();
    tc.dropout = cfg.at("dropout").get<double>();
    tc.prefix = cfg.at("bidirectional").get<bool>() ? training::PrefixAttention::Bidirectional
                                                    : training::PrefixAttention::Causal;
    tc.seed = static_cast<std::uint64_t>(num(cfg, "seed"));
    tc.shuffle = cfg.at("shuffle").get<bool>();
    train_loop(model, tc, std::move(rows), cfg);
}

eval::EvalMeta with_domain(eval::EvalMeta meta, const json& cfg) {
    meta.domain = str(cfg, "domain");
    if (!str(cfg, "name").empty()) meta.model = str(cfg, "name");
    return meta;
}

void cmd_eval_ppl(const json& cfg) {
    auto [model, meta] = load_model(cfg);
    const auto tok = tokenizer(cfg);
    check_vocab(tok, model.config());
    const auto T = context_len(cfg, model.config());
    auto k = count(cfg, "prefix_len");
    if (k == 0) k = T / 2;
    std::vector<data::Row> rows;
    for (const auto& s : eval_sequences(cfg, tok, T)) rows.push_back(eval::prefix_row(s, k));
    const auto prefix = cfg.at("bidirectional").get<bool>() ? training::PrefixAttention::Bidirectional
                                                            : training::PrefixAttention::Causal;
    const auto rec = eval::prefix_ppl(model, rows, with_domain(meta, cfg), prefix);
    eval::write_records(out_dir(cfg) / "eval.csv", {rec});
    std::cout << "ppl " << csv::format_double(rec.ppl) << " (nll " << csv::format_double(rec.nll) << ", " << rec.rows
              << " rows, T=" << T << ", k=" << k << ")\n";
}

void cmd_extrapolate(const json& cfg) {
    auto [model, meta] = load_model(cfg);
    const auto tok = tokenizer(cfg);
    check_vocab(tok, model.config());
    const auto Ts = cfg.at("context_lens").get<std::vector<std::size_t>>();
    const auto ks = cfg.at("prefix_lens").get<std::vector<std::size_t>>();
    if (Ts.empty() || ks.empty()) throw UsageError("extrapolate needs context and prefix lengths");
    const auto seqs = eval_sequences(cfg, tok, *std::max_element(Ts.begin(), Ts.end()));
    const auto recs = eval::extrapolation_sweep(model, seqs, ks, Ts, with_domain(meta, cfg));
    eval::write_records(out_dir(cfg) / "extrapolation.csv", recs);
    for (const auto& r : recs) {
        std::cout << "T=" << r.context_len << " k=" << r.prefix_len << " ppl " << csv::format_double(r.ppl) << '\n';
    }
}

void cmd_analyze_attention(const json& cfg) {
    auto [model, meta] = load_model(cfg);
    const auto tok = tokenizer(cfg);
    check_vocab(tok, model.config());
    const auto T = context_len(cfg, model.config());
    auto k = count(cfg, "prefix_len");
    if (k == 0) k = T / 2;
    const bool red = model.config().arch == models::Arch::RedLLM;

    std::vector<data::Row> rows;
    std::vector<models::CapturedAttention> caps;
    models::ForwardOptions opts;
    opts.capture_attention = true;
    opts.extrapolate = true;
    for (const auto& s : eval_sequences(cfg, tok, T)) {
        rows.push_back(eval::prefix_row(s, k));
        NoGradGuard ng;
        auto out = training::forward_row(model, rows.back(), training::PrefixAttention::Causal, opts).output;
        for (auto& c : out.attention) caps.push_back(std::move(c));
    }
    const auto out = out_dir(cfg);
    const auto window = count(cfg, "window");

    std::vector<models::AttentionSite> sites;
    if (red) sites = {models::AttentionSite::EncoderSelf, models::AttentionSite::DecoderSelf, models::AttentionSite::Cross};
    else sites = {models::AttentionSite::DecoderSelf};

    csv::Table locality;
    locality.header = {"model", "site", "position", "local_prob"};
    std::vector<std::pair<std::string, eval::AttentionMap>> dump;
    json notes = json::object();
    for (auto site : sites) {
        const auto map = eval::average_attention(caps, site);
        const auto name = models::to_string(site);
        if (site != models::AttentionSite::Cross) {
            const auto curve = eval::locality_curve(map, window);
            // decoder positions continue after the encoder
            const std::size_t offset = red && site == models::AttentionSite::DecoderSelf ? k : 0;
            for (std::size_t t = 0; t < curve.size(); ++t) {
                locality.rows.push_back({meta.model, name, std::to_string(t + offset), csv::format_double(curve[t])});
            }
        }
        const auto pooled = eval::pool_attention(map, count(cfg, "pool"));
        if (!pooled.note.empty()) notes[name] = pooled.note;
        dump.push_back({name, {pooled.rows, pooled.cols, pooled.grid}});
    }
    csv::write(out / "locality.csv", locality);

    csv::Table pos;
    pos.header = {"model", "position", "logprob"};
    const auto lp = eval::per_position_logprob(model, rows);
    for (std::size_t i = 0; i < lp.size(); ++i) pos.rows.push_back({meta.model, std::to_string(k + i), csv::format_double(lp[i])});
    csv::write(out / "per_position.csv", pos);

    eval::write_attention_dump(out / "attention", dump,
                               {{"model", meta.model}, {"step", meta.step}, {"rows", rows.size()}, {"context_len", T},
                                {"prefix_len", k}, {"axes", "y: query, x: key"}, {"notes", notes}});
    std::cout << "analyzed " << rows.size() << " rows -> " << out.string() << '\n';
}

void cmd_decode(const json& cfg) {
    auto [model, meta] = load_model(cfg);
    const auto tok = tokenizer(cfg);
    check_vocab(tok, model.config());
    std::vector<std::string> prompts;
    if (!str(cfg, "prompt").empty()) prompts.push_back(str(cfg, "prompt"));
    if (!str(cfg, "prompts").empty()) {
        for (const auto& ex : data::read_finetune_jsonl(str(cfg, "prompts"))) prompts.push_back(ex.input);
    }
    if (prompts.empty()) throw UsageError("decode needs --prompt or --prompts");
    const auto max_new = count(cfg, "max_new");
    const bool bidir = cfg.at("bidirectional").get<bool>();
    std::ofstream f(out_dir(cfg) / "decode.jsonl", std::ios::trunc);
    for (const auto& p : prompts) {
        const auto ids = tok.encode(p);
        const auto gen = model.config().arch == models::Arch::DecLLM
                             ? eval::greedy_decode_decllm(model, ids, max_new, bidir)
                             : eval::greedy_decode_redllm(model, ids, max_new);
        const auto text = tok.decode(gen);
        f << json{{"input", p}, {"output", text}, {"tokens", gen}}.dump() << '\n';
        std::cout << text << '\n';
    }
}

std::vector<eval::EvalRecord> read_all_records(const json& cfg) {
    std::vector<eval::EvalRecord> out;
    for (const auto& p : cfg.at("records")) {
        const auto rs = eval::read_records(p.get<std::string>());
        out.insert(out.end(), rs.begin(), rs.end());
    }
    if (out.empty()) throw InputError("no eval records given");
    return out;
}

std::string family_of(const std::string& model) { return model.substr(0, model.find('-')); }

void cmd_fit_scaling(const json& cfg) {
    const auto records = read_all_records(cfg);
    const auto cov = [&] {
        try {
            return scaling::covariate_from_string(str(cfg, "covariate"));
        } catch (const InputError& e) {
            throw UsageError(e.what());
        }
    }();
    const bool irreducible = cfg.at("irreducible").get<bool>();
    std::map<std::string, std::vector<eval::EvalRecord>> families;
    for (const auto& r : records) {
        const auto fam = family_of(r.model);
        if (str(cfg, "family").empty() || fam == str(cfg, "family")) families[fam].push_back(r);
    }
    if (families.empty()) throw InputError("no records for family " + str(cfg, "family"));

    const auto out = out_dir(cfg);
    json fits = json::array();
    csv::Table iso;
    iso.header = {"family", "budget", "model", "params", "ppl", "extrapolated", "optimum", "optimal_params"};
    const auto budgets = cfg.at("budgets").get<std::vector<double>>();
    for (const auto& [fam, rs] : families) {
        std::vector<eval::EvalRecord> use = rs;
        if (cfg.at("frontier_only").get<bool>()) {
            use.clear();
            for (const auto& p : scaling::pareto_frontier(rs)) {
                for (const auto& r : rs) {
                    if (r.model == p.model && r.step == p.step && r.train_flops == p.budget) {
                        use.push_back(r);
                        break;
                    }
                }
            }
        }
        const auto fit = scaling::fit_power_law(use, cov, irreducible, fam);
        fits.push_back(scaling::to_json(fit));
        std::cout << fam << ": alpha " << csv::format_double(fit.alpha) << " a " << csv::format_double(fit.a) << " e "
                  << csv::format_double(fit.e) << '\n';
        if (budgets.empty()) continue;
        const auto curves = scaling::size_curves(rs, irreducible);
        for (const auto& s : scaling::isoflop_slice(curves, budgets)) {
            for (std::size_t i = 0; i < s.points.size(); ++i) {
                const auto& p = s.points[i];
                iso.rows.push_back({fam, csv::format_double(s.budget), p.model, csv::format_double(p.params),
                                    csv::format_double(p.ppl), p.extrapolated || s.extrapolated ? "1" : "0",
                                    i == s.argmin ? "1" : "0", csv::format_double(s.optimal_params)});
            }
        }
    }
    std::ofstream(out / "fits.json") << (fits.size() == 1 ? fits[0] : fits).dump(2) << '\n';
    if (!budgets.empty()) csv::write(out / "isoflop.csv", iso);
}

void cmd_frontier(const json& cfg) {
    auto records = read_all_records(cfg);
    if (!str(cfg, "family").empty()) {
        std::erase_if(records, [&](const auto& r) { return family_of(r.model) != str(cfg, "family"); });
    }
    const auto f = scaling::pareto_frontier(records);
    scaling::write_frontier(out_dir(cfg) / "frontier.csv", f);
    for (const auto& p : f) std::cout << csv::format_double(p.budget) << ' ' << p.model << ' ' << csv::format_double(p.ppl) << '\n';
}

void cmd_flops(const json& cfg) {
    const auto mc = model_config(str(cfg, "model"));
    const auto T = count(cfg, "seq");
    auto k = count(cfg, "prefix");
    if (mc.arch == models::Arch::RedLLM && k == 0) k = T / 2;
    if (mc.arch == models::Arch::DecLLM) k = 0;
    const auto mode = str(cfg, "mode");
    if (mode != "train" && mode != "infer") throw UsageError("mode must be train or infer");
    const auto flops = models::flops_per_sequence(mc, {T, k}, mode == "train" ? models::FlopsMode::Train
                                                                               : models::FlopsMode::Infer);
    const json result{{"model", model_name(mc)},
                      {"params", count_params(mc)},
                      {"nonembedding_params", models::count_nonembedding_params(mc)},
                      {"seq", T},
                      {"prefix", k},
                      {"mode", mode},
                      {"flops_per_sequence", flops}};
    std::ofstream(out_dir(cfg) / "flops.json") << result.dump(2) << '\n';
    std::cout << "params " << count_params(mc) << '\n' << "flops_per_sequence " << csv::format_double(flops) << '\n';
}

Option opt(std::string key, Kind kind, json fallback, std::string help) {
    return {std::move(key), kind, std::move(fallback), std::move(help)};
}

std::vector<Option> with_common(std::string command, std::vector<Option> opts) {
    opts.push_back(opt("out", Kind::Path, "lmlab-out/" + command, "output directory"));
    opts.push_back(opt("seed", Kind::Int, 0, "seed for init, data order and dropout"));
    return opts;
}

std::vector<Option> model_source() {
    return {opt("checkpoint", Kind::Path, "", "checkpoint step dir or run dir (latest step)"),
            opt("model", Kind::String, "dec-desk", "preset or config JSON, used untrained when no checkpoint"),
            opt("tokenizer", Kind::Path, "", "tokenizer.json (default: bytes only)"),
            opt("name", Kind::String, "", "model tag in outputs (default from the config)")};
}

std::vector<Option> join(std::vector<Option> a, const std::vector<Option>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::vector<Option> train_options(std::int64_t steps, std::int64_t batch) {
    return {opt("steps", Kind::Int, steps, "optimizer steps"),
            opt("batch_size", Kind::Int, batch, "rows per step"),
            opt("clip", Kind::Float, 1.0, "global gradient-norm clip"),
            opt("z_loss", Kind::Float, training::kZLossCoef, "z-loss coefficient"),
            opt("shuffle", Kind::Bool, true, "shuffle rows every epoch"),
            opt("checkpoint_every", Kind::Int, 0, "extra checkpoint interval (0: final only)"),
            opt("print_every", Kind::Int, 50, "progress interval on stderr"),
            opt("resume", Kind::Bool, false, "continue from the latest checkpoint in out/checkpoints")};
}

}  // namespace

const std::vector<Command>& commands() {
    static const std::vector<Command> table = [] {
        std::vector<Command> t;
        t.push_back({"tokenizer-train", "Train a byte-level BPE tokenizer",
                     with_common("tokenizer-train", {opt("data", Kind::Path, "", "text or JSONL corpus"),
                                                     opt("vocab_size", Kind::Int, 512, "target vocabulary size")}),
                     cmd_tokenizer_train});
        t.push_back({"pretrain", "Pretrain (causal LM for DecLLM, prefix LM for RedLLM)",
                     with_common("pretrain", join({opt("model", Kind::String, "dec-desk", "preset or config JSON"),
                                                   opt("data", Kind::Path, "", "text or JSONL corpus"),
                                                   opt("tokenizer", Kind::Path, "", "tokenizer.json"),
                                                   opt("seq_len", Kind::Int, 0, "row length (0: model max_seq)"),
                                                   opt("warmup", Kind::Int, 2000, "linear warmup steps"),
                                                   opt("peak_lr", Kind::Float, 0.01, "peak learning rate"),
                                                   opt("floor_ratio", Kind::Float, 0.1, "final lr / peak lr"),
                                                   opt("dropout", Kind::Float, 0.0, "dropout rate")},
                                                  train_options(5000, 32))),
                     cmd_pretrain});
        t.push_back({"finetune", "Finetune on input/target JSONL with loss on the target only",
                     with_common("finetune", join({opt("init", Kind::Path, "", "pretrained checkpoint or run dir"),
                                                   opt("data", Kind::Path, "", "JSONL with input and target"),
                                                   opt("tokenizer", Kind::Path, "", "tokenizer.json"),
                                                   opt("lr", Kind::Float, training::kFinetuneLr, "constant learning rate"),
                                                   opt("dropout", Kind::Float, 0.1, "dropout rate"),
                                                   opt("bidirectional", Kind::Bool, false, "DecLLM: bidirectional attention over the input"),
                                                   opt("max_input", Kind::Int, 2048, "input tokens kept"),
                                                   opt("max_output", Kind::Int, 512, "target tokens kept")},
                                                  train_options(1000, 8))),
                     cmd_finetune});
        t.push_back({"eval-ppl", "Prefix-LM perplexity of the suffix",
                     with_common("eval-ppl", join(model_source(),
                                                  {opt("data", Kind::Path, "", "text or JSONL corpus"),
                                                   opt("context_len", Kind::Int, 0, "T (0: model max_seq)"),
                                                   opt("prefix_len", Kind::Int, 0, "k (0: T/2)"),
                                                   opt("max_rows", Kind::Int, 0, "cap on rows (0: all)"),
                                                   opt("domain", Kind::String, "default", "domain tag"),
                                                   opt("bidirectional", Kind::Bool, false, "DecLLM: bidirectional prefix")})),
                     cmd_eval_ppl});
        t.push_back({"extrapolate", "Perplexity over a grid of context and prefix lengths",
                     with_common("extrapolate", join(model_source(),
                                                     {opt("data", Kind::Path, "", "text or JSONL corpus"),
                                                      opt("context_lens", Kind::IntList, json{256, 512, 1024, 2048}, "T values"),
                                                      opt("prefix_lens", Kind::IntList, json{128}, "k values"),
                                                      opt("max_rows", Kind::Int, 8, "cap on rows (0: all)"),
                                                      opt("domain", Kind::String, "default", "domain tag")})),
                     cmd_extrapolate});
        t.push_back({"analyze-attention", "Locality curves, per-position log-prob and pooled attention maps",
                     with_common("analyze-attention", join(model_source(),
                                                           {opt("data", Kind::Path, "", "text or JSONL corpus"),
                                                            opt("context_len", Kind::Int, 0, "T (0: model max_seq)"),
                                                            opt("prefix_len", Kind::Int, 0, "k (0: T/2)"),
                                                            opt("max_rows", Kind::Int, 4, "rows averaged (0: all)"),
                                                            opt("window", Kind::Int, 5, "locality window"),
                                                            opt("pool", Kind::Int, 128, "pooled grid size")})),
                     cmd_analyze_attention});
        t.push_back({"decode", "Greedy decoding",
                     with_common("decode", join(model_source(),
                                                {opt("prompt", Kind::String, "", "prompt text"),
                                                 opt("prompts", Kind::Path, "", "JSONL with an input field"),
                                                 opt("max_new", Kind::Int, 64, "tokens to generate"),
                                                 opt("bidirectional", Kind::Bool, false, "DecLLM: bidirectional prompt")})),
                     cmd_decode});
        t.push_back({"fit-scaling", "Fit power laws (and isoFLOP slices) to eval records",
                     with_common("fit-scaling", {opt("records", Kind::PathList, json::array(), "eval CSV files"),
                                                 opt("covariate", Kind::String, "flops", "flops or params"),
                                                 opt("irreducible", Kind::Bool, false, "fit e + a·x^-alpha"),
                                                 opt("family", Kind::String, "", "only this family (model tag prefix)"),
                                                 opt("frontier_only", Kind::Bool, false, "fit the compute frontier only"),
                                                 opt("budgets", Kind::FloatList, json::array(), "isoFLOP budgets")}),
                     cmd_fit_scaling});
        t.push_back({"frontier", "Compute-optimal frontier over checkpoints",
                     with_common("frontier", {opt("records", Kind::PathList, json::array(), "eval CSV files"),
                                              opt("family", Kind::String, "", "only this family")}),
                     cmd_frontier});
        t.push_back({"flops", "Parameter count and FLOPs per sequence",
                     with_common("flops", {opt("model", Kind::String, "dec-desk", "preset or config JSON"),
                                           opt("seq", Kind::Int, 2048, "sequence length"),
                                           opt("prefix", Kind::Int, 0, "RedLLM encoder length (0: seq/2)"),
                                           opt("mode", Kind::String, "train", "train or infer")}),
                     cmd_flops});
        return t;
    }();
    return table;
}

}  // namespace lmlab::cli
