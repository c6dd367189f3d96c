#ifndef CAPGEN_OPTIMIZER_HPP_
#define CAPGEN_OPTIMIZER_HPP_

#include <cstdint>
#include <vector>

#include "capgen/tensor.hpp"

namespace capgen {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moments of one parameter plus its own step count, so a
/// group that starts training late still gets a bias-corrected first step.
struct AdamSlot {
  std::vector<double> m;
  std::vector<double> v;
  uint64_t step = 0;
};

/// Adam over a parameter registry. Each parameter moves at
/// base_lr·lr_scale; parameters with trainable == false are left untouched
/// and keep their moments.
class Adam {
 public:
  explicit Adam(const std::vector<Parameter>& params, AdamConfig cfg = {});

  /// Applies one update from the gradients currently held by the tensors.
  /// Throws ContractError when a trainable parameter has no gradient.
  void step(std::vector<Parameter>& params, double base_lr);

  const AdamConfig& config() const { return config_; }
  std::vector<AdamSlot>& slots() { return slots_; }
  const std::vector<AdamSlot>& slots() const { return slots_; }

 private:
  AdamConfig config_;
  std::vector<AdamSlot> slots_;
};

/// Sets every gradient buffer to zeros.
void zero_grads(std::vector<Parameter>& params);

}  // namespace capgen

#endif  // CAPGEN_OPTIMIZER_HPP_
