#include <cmath>

#include "lmlab/common/error.hpp"
#include "lmlab/layers/layers.hpp"

namespace lmlab::layers {

std::vector<double> RotaryConfig::frequencies() const {
    if (head_dim == 0 || head_dim % 2 != 0) {
        throw ShapeError("rotary needs an even head dimension, got " + std::to_string(head_dim));
    }
    std::vector<double> theta(head_dim / 2);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] = std::pow(base_frequency,
                            -2.0 * static_cast<double>(i) / static_cast<double>(head_dim));
    }
    return theta;
}

Tensor rotary_apply(const Tensor& x, std::span<const std::int64_t> positions,
                    const RotaryConfig& cfg) {
    if (x.rank() != 2) throw ShapeError("rotary_apply expects [T×d_h]");
    const auto t_len = x.dim(0), dh = x.dim(1);
    if (dh != cfg.head_dim) {
        throw ShapeError("rotary head_dim " + std::to_string(cfg.head_dim) + " vs input width " +
                         std::to_string(dh));
    }
    if (positions.size() != t_len) throw ShapeError("rotary: one position per row required");
    const auto theta = cfg.frequencies();
    const std::size_t pairs = theta.size();
    std::vector<double> cos_t(t_len * pairs), sin_t(t_len * pairs);
    for (std::size_t t = 0; t < t_len; ++t) {
        if (positions[t] < 0) throw std::invalid_argument("rotary: negative position");
        for (std::size_t i = 0; i < pairs; ++i) {
            const double angle = static_cast<double>(positions[t]) * theta[i];
            cos_t[t * pairs + i] = std::cos(angle);
            sin_t[t * pairs + i] = std::sin(angle);
        }
    }
    const auto dx = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t i = 0; i < pairs; ++i) {
            const double c = cos_t[t * pairs + i], s = sin_t[t * pairs + i];
            const double a = dx[t * dh + 2 * i], b = dx[t * dh + 2 * i + 1];
            out[t * dh + 2 * i] = a * c - b * s;
            out[t * dh + 2 * i + 1] = a * s + b * c;
        }
    }
    auto* px = x.node();
    return make_op_result("rotary", x.shape(), std::move(out), {x},
                          [px, t_len, dh, pairs, cos_t = std::move(cos_t),
                           sin_t = std::move(sin_t)](const detail::Node& self) {
                              if (!px->requires_grad) return;
                              auto& g = px->ensure_grad();
                              // Inverse rotation of the incoming gradient.
                              for (std::size_t t = 0; t < t_len; ++t) {
                                  for (std::size_t i = 0; i < pairs; ++i) {
                                      const double c = cos_t[t * pairs + i], s = sin_t[t * pairs + i];
                                      const double ga = self.grad[t * dh + 2 * i];
                                      const double gb = self.grad[t * dh + 2 * i + 1];
                                      g[t * dh + 2 * i] += ga * c + gb * s;
                                      g[t * dh + 2 * i + 1] += -ga * s + gb * c;
                                  }
                              }
                          });
}

}  // namespace lmlab::layers
