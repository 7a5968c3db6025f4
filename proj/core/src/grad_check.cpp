#include "cxr/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "cxr/error.hpp"
#include "cxr/rng.hpp"

namespace cxr {

namespace {

double scalar_eval(const GraphBuilder& builder, const std::vector<Tensor>& inputs) {
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.emplace_back(t, false);
  Var out = builder(vars);
  if (out.value().size() != 1) {
    throw ValueError("grad_check builder must produce a scalar, got shape " +
                     out.value().shape_string());
  }
  return out.value()[0];
}

}  // namespace

double grad_check(const GraphBuilder& builder, const std::vector<Tensor>& inputs, double eps,
                  std::size_t max_checks, std::uint64_t seed) {
  if (!(eps > 0.0) || eps > 1e-2) {
    throw ValueError("grad_check eps must lie in (0, 1e-2]");
  }

  // Analytic pass.
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.emplace_back(t, true);
  Var out = builder(vars);
  if (out.value().size() != 1) {
    throw ValueError("grad_check builder must produce a scalar, got shape " +
                     out.value().shape_string());
  }
  backward(out);

  // Candidate probes: every entry of every input.
  std::vector<std::pair<std::size_t, std::size_t>> probes;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::size_t j = 0; j < inputs[i].size(); ++j) probes.emplace_back(i, j);
  }
  if (max_checks > 0 && max_checks < probes.size()) {
    RandomStream rng(seed);
    rng.shuffle(probes);
    probes.resize(max_checks);
  }

  double worst = 0.0;
  std::vector<Tensor> work = inputs;
  for (const auto& [i, j] : probes) {
    const double original = work[i][j];
    work[i][j] = original + eps;
    const double up = scalar_eval(builder, work);
    work[i][j] = original - eps;
    const double down = scalar_eval(builder, work);
    work[i][j] = original;

    const double numeric = (up - down) / (2.0 * eps);
    const double analytic = vars[i].has_grad() ? vars[i].grad()[j] : 0.0;
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    worst = std::max(worst, std::fabs(analytic - numeric) / denom);
  }
  return worst;
}

}  // namespace cxr
