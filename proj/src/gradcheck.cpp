#include "cfpl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cfpl {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

std::vector<GradCoordinate> sample_coordinates(const std::vector<Parameter>& params, std::size_t count, Rng& rng) {
    std::vector<const Parameter*> live;
    std::size_t total = 0;
    for (const auto& p : params) {
        if (!p.frozen) {
            live.push_back(&p);
            total += p.tensor.numel();
        }
    }
    if (total == 0) throw std::invalid_argument("no trainable coordinates to sample");
    std::vector<GradCoordinate> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t flat = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(total));
        flat = std::min(flat, total - 1);
        for (const Parameter* p : live) {
            if (flat < p->tensor.numel()) {
                out.push_back({p, flat});
                break;
            }
            flat -= p->tensor.numel();
        }
    }
    return out;
}

GradCheckReport finite_diff_gradcheck(const std::function<Tensor()>& loss, const std::vector<GradCoordinate>& coords,
                                      double h) {
    if (precision() != Precision::f64) throw std::logic_error("gradient checks require f64 precision mode");
    if (!(h >= 1e-6 && h <= 1e-4)) throw std::invalid_argument("finite-difference step must lie in [1e-6, 1e-4]");

    std::vector<GradCoordinate> active;
    for (const auto& c : coords) {
        if (c.param == nullptr) throw std::invalid_argument("null parameter in gradient coordinate");
        if (c.param->frozen) continue;
        if (c.index >= c.param->tensor.numel()) throw std::out_of_range("coordinate index out of range");
        active.push_back(c);
    }
    for (const auto& c : active) Tensor(c.param->tensor).zero_grad();

    auto evaluate = [&]() {
        const double v = loss().item();
        if (!std::isfinite(v)) throw std::runtime_error("loss is not finite during gradient check");
        return v;
    };

    Tensor base = loss();
    if (!std::isfinite(base.item())) throw std::runtime_error("loss is not finite during gradient check");
    base.backward();

    GradCheckReport report;
    for (const auto& c : active) {
        Tensor t = c.param->tensor;
        const double analytic = t.has_grad() ? t.grad()[c.index] : 0.0;
        auto values = t.values_mut();
        const double saved = values[c.index];
        values[c.index] = saved + h;
        const double up = evaluate();
        values[c.index] = saved - h;
        const double down = evaluate();
        values[c.index] = saved;
        const double numeric = (up - down) / (2.0 * h);
        GradCheckEntry e{c.param->name, c.index, analytic, numeric, relative_error(analytic, numeric)};
        report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
        report.entries.push_back(std::move(e));
    }
    return report;
}

}  // namespace cfpl
