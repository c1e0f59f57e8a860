#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmlab/data/corpus.hpp"
#include "lmlab/models/model.hpp"
#include "lmlab/training/objective.hpp"
#include "lmlab/training/optimizer.hpp"

namespace lmlab::training {

enum class LrKind { WarmupCosine, Constant };

struct TrainConfig {
    std::int64_t steps = 5000;
    std::size_t batch_size = 32;
    LrKind lr_kind = LrKind::WarmupCosine;
    std::int64_t warmup = 2000;
    double peak_lr = 0.01;
    double floor_ratio = 0.1;
    double constant_lr = kFinetuneLr;
    double clip = 1.0;
    double z_loss = kZLossCoef;
    double dropout = 0.0;
    PrefixAttention prefix = PrefixAttention::Causal;
    std::uint64_t seed = 0;
    bool shuffle = true;
    bool wall_clock = false;  // off: wall_seconds is logged as 0 for reproducible logs

    double lr_at(std::int64_t step) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct StepLog {
    std::int64_t step = 0;
    double loss = 0.0;    // mean nll over the batch's loss tokens
    double z_loss = 0.0;  // z-loss term (already scaled by its coefficient)
    double lr = 0.0;
    double grad_norm = 0.0;  // before clipping
    std::uint64_t tokens_seen = 0;  // cumulative non-pad tokens fed to the model
    double train_flops = 0.0;       // cumulative
    double wall_seconds = 0.0;
};

inline const char* kTrainLogHeader = "step,loss,z_loss,lr,grad_norm,tokens_seen,train_flops,wall_seconds";
std::string format_log_row(const StepLog& row);

// Single-writer training loop. The batch for step t and the dropout
// stream are pure functions of (seed, t), so a run resumed from a
// checkpoint continues exactly as the uninterrupted run would.
class Trainer {
public:
    Trainer(models::Model& model, TrainConfig cfg, std::vector<data::Row> rows);

    // One optimizer step; throws NonFiniteError naming the step on NaN/Inf.
    StepLog step();

    std::int64_t completed_steps() const { return optimizer_.steps(); }
    const TrainConfig& config() const { return cfg_; }
    const Adafactor& optimizer() const { return optimizer_; }
    const StepLog& last() const { return last_; }

    // Rows used by step t (1-based), in order.
    std::vector<std::size_t> batch_indices(std::int64_t step) const;

    void save_checkpoint(const std::filesystem::path& run_dir) const;
    // Restores parameters, optimizer state and counters from
    // <run_dir>/<step>/; the model must have the checkpoint's config.
    void load_checkpoint(const std::filesystem::path& step_dir);

private:
    models::Model& model_;
    TrainConfig cfg_;
    std::vector<data::Row> rows_;
    Adafactor optimizer_;
    StepLog last_;
    std::chrono::steady_clock::time_point start_;
    double wall_offset_ = 0.0;  // seconds already spent before a resume
};

}  // namespace lmlab::training
