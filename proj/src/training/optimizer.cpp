#include "lmlab/training/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "lmlab/common/error.hpp"

namespace lmlab::training {

void Adafactor::step(models::ParamSet& params, double lr) {
    for (const auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) {
            if (!std::isfinite(g)) {
                throw NonFiniteError("adafactor: non-finite gradient in '" + name + "' at step " +
                                     std::to_string(step_ + 1));
            }
        }
    }
    ++step_;
    const double beta = 1.0 - std::pow(static_cast<double>(step_), -cfg_.decay_exponent);
    for (auto& [name, p] : params) {
        auto& v = v_[name];
        const auto n = p.numel();
        if (v.empty()) v.assign(n, 0.0);
        const bool has = p.has_grad();
        std::vector<double> u(n);
        double sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double g = has ? p.grad()[i] : 0.0;
            v[i] = beta * v[i] + (1.0 - beta) * (g * g + cfg_.eps1);
            u[i] = g / std::sqrt(v[i]);
            sq += u[i] * u[i];
        }
        const double rms = std::sqrt(sq / static_cast<double>(n));
        const double denom = std::max(1.0, rms / cfg_.clip_threshold);
        auto data = p.mutable_data();
        for (std::size_t i = 0; i < n; ++i) data[i] -= lr * u[i] / denom;
    }
}

void Adafactor::restore(std::int64_t step, std::map<std::string, std::vector<double>> v) {
    step_ = step;
    v_ = std::move(v);
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t warmup, double peak,
                   double floor_ratio) {
    if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
    if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
    const double floor = peak * floor_ratio;
    if (total_steps <= warmup) return peak;  // no decay phase
    const double progress =
        std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup));
    return floor + (peak - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double global_grad_norm(const models::ParamSet& params) {
    double sq = 0.0;
    for (const auto& [name, p] : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) sq += g * g;
    }
    return std::sqrt(sq);
}

double clip_grads(models::ParamSet& params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& [name, p] : params) {
            if (!p.has_grad()) continue;
            for (auto& g : p.mutable_grad()) g *= s;
        }
    }
    return norm;
}

}  // namespace lmlab::training
