#include "lmlab/training/checkpoint.hpp"

#include <bit>
#include <fstream>

#include "lmlab/common/error.hpp"

namespace lmlab::training {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void write_checkpoint(const fs::path& dir, const Checkpoint& ck) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw InputError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());

    nlohmann::json tensors = nlohmann::json::array();
    std::ofstream bin(dir / "params.bin", std::ios::binary);
    if (!bin) throw InputError("cannot write " + (dir / "params.bin").string());
    std::uint64_t offset = 0;
    for (const auto& [name, shape] : ck.shapes) {
        const auto& values = ck.tensors.at(name);
        if (values.size() != shape_numel(shape)) throw ShapeError("checkpoint: tensor '" + name + "' size mismatch");
        const auto bytes = values.size() * sizeof(double);
        bin.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(bytes));
        tensors.push_back({{"name", name}, {"shape", shape}, {"dtype", "float64"},
                           {"offset", offset}, {"bytes", bytes}});
        offset += bytes;
    }
    bin.close();
    if (!bin) throw InputError("failed writing " + (dir / "params.bin").string());

    nlohmann::json manifest{{"format", "lmlab-checkpoint"},
                            {"version", 1},
                            {"step", ck.step},
                            {"model", ck.model},
                            {"extra", ck.extra},
                            {"byte_order", "little"},
                            {"tensors", tensors}};
    std::ofstream m(dir / "manifest.json");
    m << manifest.dump(2) << '\n';
    m.close();
    if (!m) throw InputError("failed writing " + (dir / "manifest.json").string());
}

Checkpoint read_checkpoint(const fs::path& dir) {
    std::ifstream m(dir / "manifest.json");
    if (!m) throw InputError("no checkpoint manifest in " + dir.string());
    Checkpoint ck;
    try {
        const auto j = nlohmann::json::parse(m);
        if (j.at("format") != "lmlab-checkpoint") throw InputError("not a checkpoint manifest");
        ck.step = j.at("step").get<std::int64_t>();
        ck.model = j.at("model").get<models::ModelConfig>();
        ck.extra = j.at("extra");
        std::ifstream bin(dir / "params.bin", std::ios::binary);
        if (!bin) throw InputError("missing params.bin in " + dir.string());
        for (const auto& t : j.at("tensors")) {
            if (t.at("dtype") != "float64") throw InputError("checkpoint: unsupported dtype");
            const auto name = t.at("name").get<std::string>();
            const auto shape = t.at("shape").get<Shape>();
            const auto bytes = t.at("bytes").get<std::uint64_t>();
            if (bytes != shape_numel(shape) * sizeof(double)) throw InputError("checkpoint: bad byte count for " + name);
            std::vector<double> v(shape_numel(shape));
            bin.seekg(static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
            bin.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
            if (!bin) throw InputError("checkpoint: params.bin truncated at " + name);
            ck.shapes.emplace_back(name, shape);
            ck.tensors.emplace(name, std::move(v));
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError("malformed checkpoint manifest in " + dir.string() + ": " + e.what());
    }
    return ck;
}

Checkpoint checkpoint_from_model(const models::Model& model, std::int64_t step) {
    Checkpoint ck;
    ck.model = model.config();
    ck.step = step;
    for (const auto& [name, t] : model.params()) {
        ck.shapes.emplace_back(name, t.shape());
        ck.tensors.emplace(name, std::vector<double>(t.data().begin(), t.data().end()));
    }
    return ck;
}

models::Model model_from_checkpoint(const Checkpoint& ck) {
    models::ParamSet params;
    for (const auto& [name, shape] : models::param_layout(ck.model)) {
        auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) throw InputError("checkpoint is missing parameter " + name);
        params.add(name, Tensor::from(shape, it->second, true));
    }
    return models::Model(ck.model, std::move(params));
}

fs::path latest_checkpoint(const fs::path& run_dir) {
    std::int64_t best = -1;
    fs::path out;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(run_dir, ec)) {
        if (!e.is_directory() || !fs::exists(e.path() / "manifest.json")) continue;
        const auto name = e.path().filename().string();
        if (name.empty() || name.find_first_not_of("0123456789") != std::string::npos) continue;
        const auto step = std::stoll(name);
        if (step > best) {
            best = step;
            out = e.path();
        }
    }
    if (best < 0) throw InputError("no checkpoints under " + run_dir.string());
    return out;
}

}  // namespace lmlab::training
