#include "lmlab/scaling/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "lmlab/common/csv.hpp"
#include "lmlab/common/error.hpp"

namespace lmlab::scaling {

std::string to_string(Covariate c) { return c == Covariate::Flops ? "flops" : "params"; }

Covariate covariate_from_string(const std::string& s) {
    if (s == "flops" || s == "C") return Covariate::Flops;
    if (s == "params" || s == "N") return Covariate::Params;
    throw InputError("unknown covariate '" + s + "' (expected flops or params)");
}

double PowerLawFit::predict(double x) const { return e + a * std::pow(x, -alpha); }

nlohmann::json to_json(const PowerLawFit& f) {
    return {{"family", f.family}, {"covariate", to_string(f.covariate)}, {"a", f.a},
            {"alpha", f.alpha},   {"e", f.e},                            {"rms_residual", f.rms_residual}};
}

PowerLawFit fit_from_json(const nlohmann::json& j) {
    try {
        PowerLawFit f;
        f.family = j.at("family").get<std::string>();
        f.covariate = covariate_from_string(j.at("covariate").get<std::string>());
        f.a = j.at("a").get<double>();
        f.alpha = j.at("alpha").get<double>();
        f.e = j.at("e").get<double>();
        f.rms_residual = j.at("rms_residual").get<double>();
        return f;
    } catch (const nlohmann::json::exception& ex) {
        throw InputError(std::string("malformed fit JSON: ") + ex.what());
    }
}

namespace {

struct LogLinear {
    double ln_a = 0.0;
    double alpha = 0.0;
};

LogLinear log_linear(std::span<const Observation> obs, double e) {
    double mx = 0, my = 0;
    for (const auto& o : obs) {
        mx += std::log(o.x);
        my += std::log(o.y - e);
    }
    const auto n = static_cast<double>(obs.size());
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (const auto& o : obs) {
        const double dx = std::log(o.x) - mx;
        sxx += dx * dx;
        sxy += dx * (std::log(o.y - e) - my);
    }
    const double slope = sxy / sxx;
    return {my - slope * mx, -slope};
}

double rms_log_residual(std::span<const Observation> obs, const PowerLawFit& f) {
    double s = 0;
    for (const auto& o : obs) {
        const double r = std::log(o.y) - std::log(f.predict(o.x));
        s += r * r;
    }
    return std::sqrt(s / static_cast<double>(obs.size()));
}

PowerLawFit fit_with_offset(std::span<const Observation> obs, double e) {
    const auto ll = log_linear(obs, e);
    PowerLawFit f;
    f.a = std::exp(ll.ln_a);
    f.alpha = ll.alpha;
    f.e = e;
    f.rms_residual = rms_log_residual(obs, f);
    return f;
}

}  // namespace

PowerLawFit fit_power_law(std::span<const Observation> obs, bool with_irreducible) {
    std::set<double> xs;
    double min_y = INFINITY;
    for (const auto& o : obs) {
        if (!(o.x > 0) || !(o.y > 0) || !std::isfinite(o.x) || !std::isfinite(o.y)) {
            throw InputError("power-law fit needs positive finite data");
        }
        xs.insert(o.x);
        min_y = std::min(min_y, o.y);
    }
    if (xs.size() < 3) throw InputError("power-law fit needs at least 3 distinct covariate values");
    if (!with_irreducible) return fit_with_offset(obs, 0.0);

    // Coarse scan, then golden-section inside the best bracket.
    const double hi = min_y * (1.0 - 1e-9);
    constexpr int kGrid = 256;
    auto cost = [&](double e) { return fit_with_offset(obs, e).rms_residual; };
    int best = 0;
    double best_cost = INFINITY;
    for (int i = 0; i <= kGrid; ++i) {
        const double c = cost(hi * i / kGrid);
        if (c < best_cost) {
            best_cost = c;
            best = i;
        }
    }
    double lo_e = hi * std::max(0, best - 1) / kGrid, hi_e = hi * std::min(kGrid, best + 1) / kGrid;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi_e - g * (hi_e - lo_e), x2 = lo_e + g * (hi_e - lo_e);
    double f1 = cost(x1), f2 = cost(x2);
    for (int it = 0; it < 200 && hi_e - lo_e > 1e-15 * std::max(1.0, hi); ++it) {
        if (f1 < f2) {
            hi_e = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi_e - g * (hi_e - lo_e);
            f1 = cost(x1);
        } else {
            lo_e = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo_e + g * (hi_e - lo_e);
            f2 = cost(x2);
        }
    }
    auto fit = fit_with_offset(obs, (lo_e + hi_e) / 2);
    const auto edge = fit_with_offset(obs, hi * best / kGrid);
    return edge.rms_residual < fit.rms_residual ? edge : fit;
}

PowerLawFit fit_power_law(std::span<const eval::EvalRecord> records, Covariate covariate, bool with_irreducible,
                          std::string family) {
    std::vector<Observation> obs;
    for (const auto& r : records) {
        obs.push_back({covariate == Covariate::Flops ? r.train_flops : static_cast<double>(r.params), r.ppl});
    }
    auto fit = fit_power_law(obs, with_irreducible);
    fit.family = std::move(family);
    fit.covariate = covariate;
    return fit;
}

std::vector<FrontierPoint> pareto_frontier(std::span<const eval::EvalRecord> records) {
    if (records.empty()) throw InputError("frontier: no records");
    std::vector<const eval::EvalRecord*> order;
    for (const auto& r : records) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
        if (a->train_flops != b->train_flops) return a->train_flops < b->train_flops;
        if (a->ppl != b->ppl) return a->ppl < b->ppl;
        if (a->model != b->model) return a->model < b->model;
        return a->step < b->step;
    });
    std::vector<FrontierPoint> out;
    for (const auto* r : order) {
        if (!out.empty() && !(r->ppl < out.back().ppl)) continue;
        out.push_back({r->train_flops, r->model, r->step, static_cast<double>(r->params), r->ppl});
    }
    return out;
}

void write_frontier(const std::filesystem::path& path, std::span<const FrontierPoint> points) {
    csv::Table t;
    t.header = {"budget", "model", "step", "params", "ppl"};
    for (const auto& p : points) {
        t.rows.push_back({csv::format_double(p.budget), p.model, std::to_string(p.step), csv::format_double(p.params),
                          csv::format_double(p.ppl)});
    }
    csv::write(path, t);
}

std::vector<SizeCurve> size_curves(std::span<const eval::EvalRecord> records, bool with_irreducible) {
    std::map<std::string, std::vector<eval::EvalRecord>> groups;
    for (const auto& r : records) groups[r.model].push_back(r);
    std::vector<SizeCurve> out;
    for (auto& [model, rs] : groups) {
        SizeCurve c;
        c.model = model;
        c.params = static_cast<double>(rs.front().params);
        c.fit = fit_power_law(rs, Covariate::Flops, with_irreducible, model);
        c.min_flops = INFINITY;
        c.max_flops = 0;
        for (const auto& r : rs) {
            c.min_flops = std::min(c.min_flops, r.train_flops);
            c.max_flops = std::max(c.max_flops, r.train_flops);
        }
        out.push_back(std::move(c));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.params < b.params; });
    return out;
}

std::vector<IsoflopSlice> isoflop_slice(std::span<const SizeCurve> family, std::span<const double> budgets) {
    if (family.empty()) throw InputError("isoflop: no size curves");
    std::vector<const SizeCurve*> sizes;
    for (const auto& c : family) sizes.push_back(&c);
    std::sort(sizes.begin(), sizes.end(), [](const auto* a, const auto* b) { return a->params < b->params; });

    std::vector<IsoflopSlice> out;
    for (double C : budgets) {
        IsoflopSlice s;
        s.budget = C;
        for (const auto* c : sizes) {
            const bool outside = C < c->min_flops || C > c->max_flops;
            s.points.push_back({c->model, c->params, c->fit.predict(C), outside});
            s.extrapolated = s.extrapolated || outside;
        }
        for (std::size_t i = 1; i < s.points.size(); ++i) {
            if (s.points[i].ppl < s.points[s.argmin].ppl) s.argmin = i;
        }
        s.optimal_params = s.points[s.argmin].params;
        s.degenerate = s.points.size() < 2;
        const auto m = s.argmin;
        if (m == 0 || m + 1 == s.points.size()) {
            // minimum sits on the edge of the size grid
            s.extrapolated = true;
        } else {
            const double x0 = std::log(s.points[m - 1].params), x1 = std::log(s.points[m].params),
                         x2 = std::log(s.points[m + 1].params);
            const double y0 = s.points[m - 1].ppl, y1 = s.points[m].ppl, y2 = s.points[m + 1].ppl;
            const double d01 = (y1 - y0) / (x1 - x0), d12 = (y2 - y1) / (x2 - x1);
            const double curv = (d12 - d01) / (x2 - x0);
            if (curv > 0) {
                const double vertex = (x0 + x1) / 2 - d01 / (2 * curv);
                s.optimal_params = std::exp(std::clamp(vertex, x0, x2));
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace lmlab::scaling
