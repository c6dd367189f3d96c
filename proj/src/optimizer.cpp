#include "capgen/optimizer.hpp"

#include <cmath>

#include "capgen/error.hpp"

namespace capgen {

Adam::Adam(const std::vector<Parameter>& params, AdamConfig cfg) : config_(cfg) {
  slots_.reserve(params.size());
  for (const Parameter& p : params) {
    slots_.push_back({std::vector<double>(p.tensor.size(), 0.0),
                      std::vector<double>(p.tensor.size(), 0.0), 0});
  }
}

void Adam::step(std::vector<Parameter>& params, double base_lr) {
  if (params.size() != slots_.size()) {
    throw ContractError("optimizer holds " + std::to_string(slots_.size()) + " slots for " +
                        std::to_string(params.size()) + " parameters");
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (!p.trainable) continue;
    if (!p.tensor.has_grad()) throw ContractError("parameter " + p.name + " has no gradient");
    AdamSlot& s = slots_[i];
    ++s.step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.step));
    auto g = p.tensor.grad();
    auto theta = p.tensor.mutable_data();
    for (size_t j = 0; j < theta.size(); ++j) {
      s.m[j] = b1 * s.m[j] + (1.0 - b1) * g[j];
      s.v[j] = b2 * s.v[j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = s.m[j] / c1;
      const double vhat = s.v[j] / c2;
      // Scaling the full base-rate step keeps group updates exact multiples.
      theta[j] -= p.lr_scale * (base_lr * mhat / (std::sqrt(vhat) + config_.epsilon));
    }
  }
}

void zero_grads(std::vector<Parameter>& params) {
  for (Parameter& p : params) p.tensor.zero_grad();
}

}  // namespace capgen
