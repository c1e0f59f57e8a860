#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lmlab/models/model.hpp"

namespace lmlab::training {

struct AdafactorConfig {
    double decay_exponent = 0.8;
    double eps1 = 1e-30;
    double clip_threshold = 1.0;
};

// Unfactored Adafactor without momentum or parameter scaling:
//   β̂_t = 1 − t^(−decay)
//   v   ← β̂_t·v + (1 − β̂_t)·(g² + ε₁)
//   u   = g / √v,  u ← u / max(1, rms(u) / clip)
//   θ   ← θ − lr·u
// Each parameter tensor is updated independently, so the result does not
// depend on iteration order.
class Adafactor {
public:
    explicit Adafactor(AdafactorConfig cfg = {}) : cfg_(cfg) {}

    // Uses the gradients stored on the parameters (missing grad = zero).
    // Throws NonFiniteError before touching anything if a gradient is not
    // finite.
    void step(models::ParamSet& params, double lr);

    std::int64_t steps() const { return step_; }
    const AdafactorConfig& config() const { return cfg_; }

    // Second-moment accumulators by parameter name.
    const std::map<std::string, std::vector<double>>& second_moments() const { return v_; }
    void restore(std::int64_t step, std::map<std::string, std::vector<double>> v);

private:
    AdafactorConfig cfg_;
    std::int64_t step_ = 0;
    std::map<std::string, std::vector<double>> v_;
};

// Linear warmup 0 → peak, then cosine from peak to peak·floor_ratio at
// total_steps, flat afterwards.
double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t warmup = 2000,
                   double peak = 0.01, double floor_ratio = 0.1);

inline constexpr double kFinetuneLr = 0.001;

// Scales all gradients by max_norm / norm when the global L2 norm exceeds
// max_norm. Returns the norm before clipping.
double clip_grads(models::ParamSet& params, double max_norm = 1.0);
double global_grad_norm(const models::ParamSet& params);

}  // namespace lmlab::training
