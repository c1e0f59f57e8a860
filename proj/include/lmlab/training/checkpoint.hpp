#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmlab/models/model.hpp"

namespace lmlab::training {

// On-disk layout: <dir>/manifest.json describing every tensor (name,
// shape, dtype, byte offset, byte length) and <dir>/params.bin holding
// them back to back as little-endian float64. Optimizer accumulators are
// stored as extra tensors named "opt.v.<param>".
struct Checkpoint {
    models::ModelConfig model;
    std::int64_t step = 0;
    nlohmann::json extra = nlohmann::json::object();  // train config, counters
    std::vector<std::pair<std::string, Shape>> shapes;
    std::map<std::string, std::vector<double>> tensors;
};

void write_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& dir);

// Parameters only, in layout order, as a model.
models::Model model_from_checkpoint(const Checkpoint& ck);
Checkpoint checkpoint_from_model(const models::Model& model, std::int64_t step);

// Latest <run>/<step>/ directory holding a manifest; throws InputError if none.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

}  // namespace lmlab::training
