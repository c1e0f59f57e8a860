#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmlab/eval/perplexity.hpp"

namespace lmlab::scaling {

enum class Covariate { Flops, Params };
std::string to_string(Covariate c);
Covariate covariate_from_string(const std::string& s);

// ppl(x) = e + a·x^(−alpha)
struct PowerLawFit {
    std::string family;
    Covariate covariate = Covariate::Flops;
    double a = 0.0;
    double alpha = 0.0;
    double e = 0.0;
    double rms_residual = 0.0;  // RMS of ln ppl − ln prediction

    double predict(double x) const;
};

nlohmann::json to_json(const PowerLawFit& f);
PowerLawFit fit_from_json(const nlohmann::json& j);

struct Observation {
    double x = 0.0;
    double y = 0.0;
};

// Least squares on ln y = ln a − alpha·ln x. With `with_irreducible`, e is
// searched on [0, min y) with the log-linear fit of y − e inside. Needs at
// least three distinct x; throws InputError otherwise.
PowerLawFit fit_power_law(std::span<const Observation> obs, bool with_irreducible = false);
PowerLawFit fit_power_law(std::span<const eval::EvalRecord> records, Covariate covariate,
                          bool with_irreducible = false, std::string family = "");

struct FrontierPoint {
    double budget = 0.0;  // cumulative train FLOPs of the record
    std::string model;
    std::int64_t step = 0;
    double params = 0.0;
    double ppl = 0.0;
};

// Records no other record beats with no more compute, in budget order.
// The ppl column is strictly decreasing.
std::vector<FrontierPoint> pareto_frontier(std::span<const eval::EvalRecord> records);

inline const char* kFrontierHeader = "budget,model,step,params,ppl";
void write_frontier(const std::filesystem::path& path, std::span<const FrontierPoint> points);

// One model size's ppl-vs-compute curve, fitted over its checkpoints.
struct SizeCurve {
    std::string model;
    double params = 0.0;
    PowerLawFit fit;
    double min_flops = 0.0;
    double max_flops = 0.0;
};

// Groups records by model and fits each group against train FLOPs.
std::vector<SizeCurve> size_curves(std::span<const eval::EvalRecord> records, bool with_irreducible = true);

struct IsoflopPoint {
    std::string model;
    double params = 0.0;
    double ppl = 0.0;
    bool extrapolated = false;  // budget outside this size's observed FLOPs
};

struct IsoflopSlice {
    double budget = 0.0;
    std::vector<IsoflopPoint> points;  // ascending params
    std::size_t argmin = 0;
    double optimal_params = 0.0;  // parabola vertex in ln N around argmin
    bool extrapolated = false;    // any point, or the optimum, is not interpolated
    bool degenerate = false;      // fewer than two sizes
};

std::vector<IsoflopSlice> isoflop_slice(std::span<const SizeCurve> family, std::span<const double> budgets);

}  // namespace lmlab::scaling
