#include "lmlab/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "lmlab/common/error.hpp"
#include "lmlab/common/rng.hpp"

namespace lmlab::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

detail::Node* mut(const Tensor& t) { return t.node(); }

// Gradient buffer of an input, or nullptr when it does not require grad.
std::vector<double>* grad_of(detail::Node* n) {
    return n->requires_grad ? &n->ensure_grad() : nullptr;
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + " expects a matrix, got " + shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + " shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul inner dimensions differ: " + shape_str(a.shape()) + " · " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(m * n);
    Map(out.data(), m, n).noalias() = MapC(a.data().data(), m, k) * MapC(b.data().data(), k, n);
    auto* pa = mut(a);
    auto* pb = mut(b);
    return make_op_result("matmul", {m, n}, std::move(out), {a, b},
                          [pa, pb, m, k, n](const detail::Node& self) {
                              MapC dc(self.grad.data(), m, n);
                              if (auto* ga = grad_of(pa)) {
                                  Map(ga->data(), m, k).noalias() +=
                                      dc * MapC(pb->data.data(), k, n).transpose();
                              }
                              if (auto* gb = grad_of(pb)) {
                                  Map(gb->data(), k, n).noalias() +=
                                      MapC(pa->data.data(), m, k).transpose() * dc;
                              }
                          });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k) {
        throw ShapeError("matmul_nt inner dimensions differ: " + shape_str(a.shape()) + " · " +
                         shape_str(b.shape()) + "ᵀ");
    }
    std::vector<double> out(m * n);
    Map(out.data(), m, n).noalias() =
        MapC(a.data().data(), m, k) * MapC(b.data().data(), n, k).transpose();
    auto* pa = mut(a);
    auto* pb = mut(b);
    return make_op_result("matmul_nt", {m, n}, std::move(out), {a, b},
                          [pa, pb, m, k, n](const detail::Node& self) {
                              MapC dc(self.grad.data(), m, n);
                              if (auto* ga = grad_of(pa)) {
                                  Map(ga->data(), m, k).noalias() +=
                                      dc * MapC(pb->data.data(), n, k);
                              }
                              if (auto* gb = grad_of(pb)) {
                                  Map(gb->data(), n, k).noalias() +=
                                      dc.transpose() * MapC(pa->data.data(), m, k);
                              }
                          });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const auto m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    Map(out.data(), n, m) = MapC(a.data().data(), m, n).transpose();
    auto* pa = mut(a);
    return make_op_result("transpose", {n, m}, std::move(out), {a},
                          [pa, m, n](const detail::Node& self) {
                              if (auto* ga = grad_of(pa)) {
                                  Map(ga->data(), m, n) +=
                                      MapC(self.grad.data(), n, m).transpose();
                              }
                          });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
    auto* pa = mut(a);
    auto* pb = mut(b);
    return make_op_result("add", a.shape(), std::move(out), {a, b},
                          [pa, pb](const detail::Node& self) {
                              for (auto* p : {pa, pb}) {
                                  if (auto* g = grad_of(p)) {
                                      for (std::size_t i = 0; i < g->size(); ++i) {
                                          (*g)[i] += self.grad[i];
                                      }
                                  }
                              }
                          });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
    auto* pa = mut(a);
    auto* pb = mut(b);
    return make_op_result("sub", a.shape(), std::move(out), {a, b},
                          [pa, pb](const detail::Node& self) {
                              if (auto* g = grad_of(pa)) {
                                  for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
                              }
                              if (auto* g = grad_of(pb)) {
                                  for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
                              }
                          });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    const auto da = a.data(), db = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
    auto* pa = mut(a);
    auto* pb = mut(b);
    return make_op_result("mul", a.shape(), std::move(out), {a, b},
                          [pa, pb](const detail::Node& self) {
                              // Both grads are read from the forward values, so a
                              // tensor multiplied by itself gets 2x.
                              if (auto* g = grad_of(pa)) {
                                  for (std::size_t i = 0; i < g->size(); ++i) {
                                      (*g)[i] += self.grad[i] * pb->data[i];
                                  }
                              }
                              if (auto* g = grad_of(pb)) {
                                  for (std::size_t i = 0; i < g->size(); ++i) {
                                      (*g)[i] += self.grad[i] * pa->data[i];
                                  }
                              }
                          });
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.numel());
    const auto da = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * factor;
    auto* pa = mut(a);
    return make_op_result("scale", a.shape(), std::move(out), {a},
                          [pa, factor](const detail::Node& self) {
                              if (auto* g = grad_of(pa)) {
                                  for (std::size_t i = 0; i < g->size(); ++i) {
                                      (*g)[i] += self.grad[i] * factor;
                                  }
                              }
                          });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
        throw ShapeError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match trailing axis of " + shape_str(x.shape()));
    }
    const auto n = bias.dim(0);
    std::vector<double> out(x.numel());
    const auto dx = x.data(), db = bias.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] + db[i % n];
    auto* px = mut(x);
    auto* pb = mut(bias);
    return make_op_result("add_bias", x.shape(), std::move(out), {x, bias},
                          [px, pb, n](const detail::Node& self) {
                              if (auto* g = grad_of(px)) {
                                  for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
                              }
                              if (auto* g = grad_of(pb)) {
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                      (*g)[i % n] += self.grad[i];
                                  }
                              }
                          });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.data()) s += v;
    auto* px = mut(x);
    return make_op_result("sum", {}, {s}, {x}, [px](const detail::Node& self) {
        if (auto* g = grad_of(px)) {
            for (auto& v : *g) v += self.grad[0];
        }
    });
}

Tensor silu(const Tensor& x) {
    std::vector<double> out(x.numel());
    const auto dx = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] / (1.0 + std::exp(-dx[i]));
    auto* px = mut(x);
    return make_op_result("silu", x.shape(), std::move(out), {x}, [px](const detail::Node& self) {
        if (auto* g = grad_of(px)) {
            for (std::size_t i = 0; i < g->size(); ++i) {
                const double v = px->data[i];
                const double s = 1.0 / (1.0 + std::exp(-v));
                (*g)[i] += self.grad[i] * s * (1.0 + v * (1.0 - s));
            }
        }
    });
}

Tensor softmax(const Tensor& x, int axis, std::span<const std::uint8_t> keep) {
    const auto r = static_cast<int>(x.rank());
    if (r == 0) throw ShapeError("softmax of a scalar");
    const int ax = axis < 0 ? axis + r : axis;
    if (ax < 0 || ax >= r) throw ShapeError("softmax axis out of range");
    if (!keep.empty() && keep.size() != x.numel()) {
        throw ShapeError("softmax mask size does not match input");
    }
    const auto& shape = x.shape();
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < ax; ++i) outer *= shape[i];
    for (int i = ax + 1; i < r; ++i) inner *= shape[i];
    const std::size_t n = shape[ax];
    const auto dx = x.data();
    std::vector<double> out(x.numel(), 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < n; ++j) {
                const auto idx = base + j * inner;
                if (keep.empty() || keep[idx]) mx = std::max(mx, dx[idx]);
            }
            if (mx == -std::numeric_limits<double>::infinity()) {
                throw ShapeError("softmax: every entry of a line is masked");
            }
            double z = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const auto idx = base + j * inner;
                if (keep.empty() || keep[idx]) {
                    out[idx] = std::exp(dx[idx] - mx);
                    z += out[idx];
                }
            }
            for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= z;
        }
    }
    auto* px = mut(x);
    return make_op_result(
        "softmax", shape, std::move(out), {x},
        [px, outer, inner, n](const detail::Node& self) {
            auto* g = grad_of(px);
            if (!g) return;
            // dx_j = y_j (dy_j - Σ_i y_i dy_i); masked entries have y = 0.
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * n * inner + in;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const auto idx = base + j * inner;
                        dot += self.data[idx] * self.grad[idx];
                    }
                    for (std::size_t j = 0; j < n; ++j) {
                        const auto idx = base + j * inner;
                        (*g)[idx] += self.data[idx] * (self.grad[idx] - dot);
                    }
                }
            }
        });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
    require_matrix(table, "embedding");
    const auto vocab = table.dim(0), d = table.dim(1);
    std::vector<double> out(ids.size() * d);
    const auto dt = table.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw ShapeError("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                             std::to_string(vocab));
        }
        std::copy_n(dt.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    auto* pt = mut(table);
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    return make_op_result("embedding", {ids.size(), d}, std::move(out), {table},
                          [pt, idv = std::move(idv), d](const detail::Node& self) {
                              if (auto* g = grad_of(pt)) {
                                  for (std::size_t i = 0; i < idv.size(); ++i) {
                                      const auto row = static_cast<std::size_t>(idv[i]) * d;
                                      for (std::size_t c = 0; c < d; ++c) {
                                          (*g)[row + c] += self.grad[i * d + c];
                                      }
                                  }
                              }
                          });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t len) {
    require_matrix(x, "slice_cols");
    const auto m = x.dim(0), n = x.dim(1);
    if (start + len > n) throw ShapeError("slice_cols out of range");
    std::vector<double> out(m * len);
    const auto dx = x.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < len; ++j) out[i * len + j] = dx[i * n + start + j];
    }
    auto* px = mut(x);
    return make_op_result("slice_cols", {m, len}, std::move(out), {x},
                          [px, m, n, start, len](const detail::Node& self) {
                              if (auto* g = grad_of(px)) {
                                  for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t j = 0; j < len; ++j) {
                                          (*g)[i * n + start + j] += self.grad[i * len + j];
                                      }
                                  }
                              }
                          });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols of nothing");
    const auto m = parts.front().dim(0);
    std::size_t n = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.dim(0) != m) throw ShapeError("concat_cols row counts differ");
        n += p.dim(1);
    }
    std::vector<double> out(m * n);
    std::vector<detail::Node*> nodes;
    std::vector<std::size_t> widths;
    std::size_t off = 0;
    for (const auto& p : parts) {
        const auto w = p.dim(1);
        const auto dp = p.data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < w; ++j) out[i * n + off + j] = dp[i * w + j];
        }
        off += w;
        nodes.push_back(mut(p));
        widths.push_back(w);
    }
    return make_op_result("concat_cols", {m, n}, std::move(out), parts,
                          [nodes, widths, m, n](const detail::Node& self) {
                              std::size_t off = 0;
                              for (std::size_t k = 0; k < nodes.size(); ++k) {
                                  const auto w = widths[k];
                                  if (auto* g = grad_of(nodes[k])) {
                                      for (std::size_t i = 0; i < m; ++i) {
                                          for (std::size_t j = 0; j < w; ++j) {
                                              (*g)[i * w + j] += self.grad[i * n + off + j];
                                          }
                                      }
                                  }
                                  off += w;
                              }
                          });
}

Tensor logsumexp_rows(const Tensor& x) {
    require_matrix(x, "logsumexp_rows");
    const auto m = x.dim(0), n = x.dim(1);
    const auto dx = x.data();
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, dx[i * n + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(dx[i * n + j] - mx);
        out[i] = mx + std::log(z);
    }
    auto* px = mut(x);
    return make_op_result("logsumexp_rows", {m}, std::move(out), {x},
                          [px, m, n](const detail::Node& self) {
                              if (auto* g = grad_of(px)) {
                                  for (std::size_t i = 0; i < m; ++i) {
                                      const double gi = self.grad[i];
                                      if (gi == 0.0) continue;
                                      for (std::size_t j = 0; j < n; ++j) {
                                          (*g)[i * n + j] +=
                                              gi * std::exp(px->data[i * n + j] - self.data[i]);
                                      }
                                  }
                              }
                          });
}

Tensor pick(const Tensor& x, std::span<const std::int32_t> idx) {
    require_matrix(x, "pick");
    const auto m = x.dim(0), n = x.dim(1);
    if (idx.size() != m) throw ShapeError("pick: index count differs from row count");
    std::vector<double> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= n) {
            throw ShapeError("pick: index " + std::to_string(idx[i]) + " out of range");
        }
        out[i] = x.data()[i * n + static_cast<std::size_t>(idx[i])];
    }
    auto* px = mut(x);
    std::vector<std::int32_t> iv(idx.begin(), idx.end());
    return make_op_result("pick", {m}, std::move(out), {x},
                          [px, iv = std::move(iv), n](const detail::Node& self) {
                              if (auto* g = grad_of(px)) {
                                  for (std::size_t i = 0; i < iv.size(); ++i) {
                                      (*g)[i * n + static_cast<std::size_t>(iv[i])] += self.grad[i];
                                  }
                              }
                          });
}

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
    if (weights.size() != x.numel()) throw ShapeError("weighted_sum: weight count mismatch");
    double s = 0.0;
    const auto dx = x.data();
    for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * dx[i];
    auto* px = mut(x);
    std::vector<double> w(weights.begin(), weights.end());
    return make_op_result("weighted_sum", {}, {s}, {x},
                          [px, w = std::move(w)](const detail::Node& self) {
                              if (auto* g = grad_of(px)) {
                                  for (std::size_t i = 0; i < w.size(); ++i) {
                                      (*g)[i] += self.grad[0] * w[i];
                                  }
                              }
                          });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& gen) {
    if (p <= 0.0) return x;
    if (p >= 1.0) throw std::invalid_argument("dropout probability must be < 1");
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> factor(x.numel());
    for (auto& f : factor) f = uniform01(gen) < p ? 0.0 : keep_scale;
    std::vector<double> out(x.numel());
    const auto dx = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dx[i] * factor[i];
    auto* px = mut(x);
    return make_op_result("dropout", x.shape(), std::move(out), {x},
                          [px, factor = std::move(factor)](const detail::Node& self) {
                              if (auto* g = grad_of(px)) {
                                  for (std::size_t i = 0; i < g->size(); ++i) {
                                      (*g)[i] += self.grad[i] * factor[i];
                                  }
                              }
                          });
}

}  // namespace lmlab::ops
