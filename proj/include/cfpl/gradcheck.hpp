#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cfpl/nn.hpp"

namespace cfpl {

struct GradCoordinate {
    const Parameter* param = nullptr;
    std::size_t index = 0;
};

struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
// turning central-difference roundoff into large relative errors.
inline constexpr double kGradCheckFloor = 1e-6;
double relative_error(double analytic, double numeric, double floor = kGradCheckFloor);

// Picks `count` coordinates uniformly over the scalars of all non-frozen
// parameters.
std::vector<GradCoordinate> sample_coordinates(const std::vector<Parameter>& params, std::size_t count, Rng& rng);

// Compares backward() gradients of `loss` against central differences
// (f(x+h) - f(x-h)) / 2h at each coordinate. Requires f64 mode and
// h in [1e-6, 1e-4]. Frozen coordinates are skipped.
GradCheckReport finite_diff_gradcheck(const std::function<Tensor()>& loss, const std::vector<GradCoordinate>& coords,
                                      double h);

}  // namespace cfpl
