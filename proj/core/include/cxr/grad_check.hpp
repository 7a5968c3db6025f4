#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cxr/autograd.hpp"
#include "cxr/tensor.hpp"

namespace cxr {

// Builds a scalar-valued graph from leaf variables. The same builder is
// invoked for the analytic pass and for every finite-difference probe, so it
// must be a pure function of its inputs.
using GraphBuilder = std::function<Var(const std::vector<Var>&)>;

// Compares reverse-mode gradients against central finite differences.
// Returns max over checked entries of |analytic - numeric| /
// max(|analytic|, |numeric|, 1e-8). `max_checks` > 0 limits the probe count
// to a seeded random sample across all input entries; 0 checks everything.
// Rejects non-scalar builder outputs and eps outside (0, 1e-2].
double grad_check(const GraphBuilder& builder, const std::vector<Tensor>& inputs, double eps,
                  std::size_t max_checks = 0, std::uint64_t seed = 0);

}  // namespace cxr
