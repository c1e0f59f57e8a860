#include "lmlab/training/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "lmlab/common/csv.hpp"
#include "lmlab/common/error.hpp"
#include "lmlab/common/rng.hpp"
#include "lmlab/models/flops.hpp"
#include "lmlab/training/checkpoint.hpp"

namespace lmlab::training {

double TrainConfig::lr_at(std::int64_t step) const {
    if (lr_kind == LrKind::Constant) return constant_lr;
    return lr_schedule(step, steps, warmup, peak_lr, floor_ratio);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"steps", c.steps},
                       {"batch_size", c.batch_size},
                       {"lr_kind", c.lr_kind == LrKind::Constant ? "constant" : "warmup_cosine"},
                       {"warmup", c.warmup},
                       {"peak_lr", c.peak_lr},
                       {"floor_ratio", c.floor_ratio},
                       {"constant_lr", c.constant_lr},
                       {"clip", c.clip},
                       {"z_loss", c.z_loss},
                       {"dropout", c.dropout},
                       {"prefix", c.prefix == PrefixAttention::Bidirectional ? "bidirectional" : "causal"},
                       {"seed", c.seed},
                       {"shuffle", c.shuffle},
                       {"wall_clock", c.wall_clock}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    nlohmann::json defaults = TrainConfig{};
    for (const auto& [key, _] : j.items()) {
        if (!defaults.contains(key)) throw InputError("train config: unknown field '" + key + "'");
    }
    auto merged = defaults;
    merged.update(j);
    try {
        c.steps = merged.at("steps").get<std::int64_t>();
        c.batch_size = merged.at("batch_size").get<std::size_t>();
        const auto kind = merged.at("lr_kind").get<std::string>();
        if (kind != "constant" && kind != "warmup_cosine") throw InputError("train config: bad lr_kind '" + kind + "'");
        c.lr_kind = kind == "constant" ? LrKind::Constant : LrKind::WarmupCosine;
        c.warmup = merged.at("warmup").get<std::int64_t>();
        c.peak_lr = merged.at("peak_lr").get<double>();
        c.floor_ratio = merged.at("floor_ratio").get<double>();
        c.constant_lr = merged.at("constant_lr").get<double>();
        c.clip = merged.at("clip").get<double>();
        c.z_loss = merged.at("z_loss").get<double>();
        c.dropout = merged.at("dropout").get<double>();
        const auto prefix = merged.at("prefix").get<std::string>();
        if (prefix != "causal" && prefix != "bidirectional") throw InputError("train config: bad prefix '" + prefix + "'");
        c.prefix = prefix == "bidirectional" ? PrefixAttention::Bidirectional : PrefixAttention::Causal;
        c.seed = merged.at("seed").get<std::uint64_t>();
        c.shuffle = merged.at("shuffle").get<bool>();
        c.wall_clock = merged.at("wall_clock").get<bool>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("train config: ") + e.what());
    }
}

std::string format_log_row(const StepLog& r) {
    return csv::join({std::to_string(r.step), csv::format_double(r.loss), csv::format_double(r.z_loss),
                      csv::format_double(r.lr), csv::format_double(r.grad_norm), std::to_string(r.tokens_seen),
                      csv::format_double(r.train_flops), csv::format_double(r.wall_seconds)});
}

Trainer::Trainer(models::Model& model, TrainConfig cfg, std::vector<data::Row> rows)
    : model_(model), cfg_(cfg), rows_(std::move(rows)), start_(std::chrono::steady_clock::now()) {
    if (rows_.empty()) throw InputError("trainer: no training rows");
    if (cfg_.batch_size == 0) throw InputError("trainer: batch_size must be positive");
    if (cfg_.steps < 0) throw InputError("trainer: negative step count");
    if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0) throw InputError("trainer: dropout must be in [0, 1)");
    const bool red = model_.config().arch == models::Arch::RedLLM;
    for (const auto& r : rows_) {
        r.validate();
        if (red && (r.prefix_len == 0 || r.prefix_len >= r.tokens.size())) {
            throw InputError("trainer: encoder-decoder training needs prefix rows (1 <= k < T)");
        }
    }
}

std::vector<std::size_t> Trainer::batch_indices(std::int64_t step) const {
    const auto n = rows_.size();
    std::vector<std::size_t> out;
    out.reserve(cfg_.batch_size);
    std::uint64_t cached_epoch = UINT64_MAX;
    std::vector<std::size_t> perm;
    for (std::size_t i = 0; i < cfg_.batch_size; ++i) {
        const auto g = static_cast<std::uint64_t>(step - 1) * cfg_.batch_size + i;
        const auto epoch = g / n;
        if (epoch != cached_epoch) {
            perm.resize(n);
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            if (cfg_.shuffle) {
                auto gen = SeedSplitter(cfg_.seed).stream("data", epoch);
                for (std::size_t j = n; j > 1; --j) std::swap(perm[j - 1], perm[gen() % j]);
            }
            cached_epoch = epoch;
        }
        out.push_back(perm[g % n]);
    }
    return out;
}

StepLog Trainer::step() {
    const std::int64_t t = optimizer_.steps() + 1;
    const auto idx = batch_indices(t);
    const auto& mcfg = model_.config();
    const bool red = mcfg.arch == models::Arch::RedLLM;

    double denom = 0.0;
    for (auto i : idx) denom += static_cast<double>(rows_[i].loss_tokens());

    StepLog log = last_;
    log.step = t;
    log.lr = cfg_.lr_at(t);
    log.loss = 0.0;
    log.z_loss = 0.0;

    auto& params = model_.params();
    params.zero_grad();
    auto dropout_gen = SeedSplitter(cfg_.seed).stream("dropout", static_cast<std::uint64_t>(t));
    models::ForwardOptions opts;
    opts.dropout = cfg_.dropout;
    opts.rng = &dropout_gen;
    try {
        for (auto i : idx) {
            const auto& row = rows_[i];
            auto aligned = forward_row(model_, row, cfg_.prefix, opts);
            auto terms = lm_loss(aligned.logits(), aligned.targets, aligned.mask, denom, cfg_.z_loss);
            backward(terms.objective);
            log.loss += terms.nll.item();
            log.z_loss += terms.z.item();
            log.tokens_seen += static_cast<std::uint64_t>(
                std::count_if(row.tokens.begin(), row.tokens.end(), [](TokenId id) { return id != kPadId; }));
            log.train_flops += models::flops_per_sequence(
                mcfg, {row.tokens.size(), red ? row.prefix_len : 0}, models::FlopsMode::Train);
        }
        log.grad_norm = clip_grads(params, cfg_.clip);
        if (!std::isfinite(log.grad_norm)) throw NonFiniteError("gradient norm is not finite");
        optimizer_.step(params, log.lr);
    } catch (const NonFiniteError& e) {
        throw NonFiniteError("training halted at step " + std::to_string(t) + ": " + e.what());
    }
    if (cfg_.wall_clock) {
        log.wall_seconds =
            wall_offset_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    last_ = log;
    return log;
}

void Trainer::save_checkpoint(const std::filesystem::path& run_dir) const {
    const auto t = optimizer_.steps();
    Checkpoint ck = checkpoint_from_model(model_, t);
    for (const auto& [name, v] : optimizer_.second_moments()) {
        ck.shapes.emplace_back("opt.v." + name, Shape{v.size()});
        ck.tensors.emplace("opt.v." + name, v);
    }
    ck.extra = {{"train", cfg_},
                {"optimizer_step", t},
                {"tokens_seen", last_.tokens_seen},
                {"train_flops", last_.train_flops},
                {"wall_seconds", last_.wall_seconds},
                {"rows", rows_.size()}};
    write_checkpoint(run_dir / std::to_string(t), ck);
}

void Trainer::load_checkpoint(const std::filesystem::path& step_dir) {
    const auto ck = read_checkpoint(step_dir);
    if (nlohmann::json(ck.model) != nlohmann::json(model_.config())) {
        throw InputError("checkpoint model config differs from the model being trained");
    }
    for (auto& [name, t] : model_.params()) {
        const auto& v = ck.tensors.at(name);
        std::copy(v.begin(), v.end(), t.mutable_data().begin());
    }
    std::map<std::string, std::vector<double>> moments;
    for (const auto& [name, v] : ck.tensors) {
        if (name.rfind("opt.v.", 0) == 0) moments.emplace(name.substr(6), v);
    }
    const auto& extra = ck.extra;
    optimizer_.restore(extra.at("optimizer_step").get<std::int64_t>(), std::move(moments));
    last_ = StepLog{};
    last_.step = ck.step;
    last_.tokens_seen = extra.at("tokens_seen").get<std::uint64_t>();
    last_.train_flops = extra.at("train_flops").get<double>();
    last_.wall_seconds = extra.at("wall_seconds").get<double>();
    wall_offset_ = last_.wall_seconds;
    start_ = std::chrono::steady_clock::now();
}

}  // namespace lmlab::training
