#include <cmath>

#include "lmlab/common/error.hpp"
#include "lmlab/layers/layers.hpp"

namespace lmlab::layers {

Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
    if (x.rank() == 0 || x.shape().back() == 0) throw ShapeError("rmsnorm needs a last axis");
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    const bool has_gain = gain.defined();
    if (has_gain && (gain.rank() != 1 || gain.dim(0) != d)) {
        throw ShapeError("rmsnorm gain " + shape_str(gain.shape()) + " vs width " +
                         std::to_string(d));
    }
    const auto dx = x.data();
    std::vector<double> inv_rms(rows);
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        double ms = 0.0;
        for (std::size_t c = 0; c < d; ++c) ms += dx[r * d + c] * dx[r * d + c];
        ms /= static_cast<double>(d);
        inv_rms[r] = 1.0 / std::sqrt(ms + eps);
        for (std::size_t c = 0; c < d; ++c) {
            out[r * d + c] = dx[r * d + c] * inv_rms[r] * (has_gain ? gain.data()[c] : 1.0);
        }
    }
    auto* px = x.node();
    detail::Node* pg = has_gain ? gain.node() : nullptr;
    std::vector<Tensor> inputs{x};
    if (has_gain) inputs.push_back(gain);
    return make_op_result(
        "rmsnorm", x.shape(), std::move(out), std::move(inputs),
        [px, pg, rows, d, inv_rms = std::move(inv_rms)](const detail::Node& self) {
            const bool gx = px->requires_grad;
            const bool gg = pg && pg->requires_grad;
            auto* gxv = gx ? &px->ensure_grad() : nullptr;
            auto* ggv = gg ? &pg->ensure_grad() : nullptr;
            for (std::size_t r = 0; r < rows; ++r) {
                const double s = inv_rms[r];
                const double* xr = px->data.data() + r * d;
                const double* dy = self.grad.data() + r * d;
                if (ggv) {
                    for (std::size_t c = 0; c < d; ++c) (*ggv)[c] += dy[c] * xr[c] * s;
                }
                if (gxv) {
                    // n = x·s;  dx = s·(g - n·mean(g ⊙ n)) where g = dy ⊙ gain.
                    double dot = 0.0;
                    for (std::size_t c = 0; c < d; ++c) {
                        const double gc = dy[c] * (pg ? pg->data[c] : 1.0);
                        dot += gc * xr[c] * s;
                    }
                    dot /= static_cast<double>(d);
                    for (std::size_t c = 0; c < d; ++c) {
                        const double gc = dy[c] * (pg ? pg->data[c] : 1.0);
                        (*gxv)[r * d + c] += s * (gc - xr[c] * s * dot);
                    }
                }
            }
        });
}

}  // namespace lmlab::layers
