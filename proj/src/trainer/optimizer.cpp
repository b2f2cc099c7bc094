#include <cmath>

#include "mmsada/errors.hpp"
#include "mmsada/kernels.hpp"
#include "mmsada/trainer.hpp"

namespace mmsada {

void adam_step(std::span<const NamedParameter> params, OptimizerState& state, double lr) {
  if (!(lr > 0.0)) throw ParameterError("learning rate must be positive");
  for (const auto& p : params)
    if (!p.tensor.has_grad()) throw ContractError("adam_step: parameter " + p.name + " has no gradient");

  for (const auto& p : params) {
    Tensor t = p.tensor;
    AdamMoments& mom = state.moments[p.name];
    if (mom.m.empty()) {
      mom.m.assign(t.size(), 0.0);
      mom.v.assign(t.size(), 0.0);
    }
    if (mom.m.size() != t.size()) throw DimensionError("adam_step: moment size mismatch for " + p.name);
    ++mom.steps;
    const auto n = static_cast<double>(mom.steps);
    kernels::AdamParams ap{lr,
                           state.beta1,
                           state.beta2,
                           state.epsilon,
                           state.weight_decay,
                           1.0 - std::pow(state.beta1, n),
                           1.0 - std::pow(state.beta2, n)};
    kernels::adam_update(t.size(), ap, t.grad().data(), t.mutable_values().data(), mom.m.data(), mom.v.data());
  }
}

}  // namespace mmsada
