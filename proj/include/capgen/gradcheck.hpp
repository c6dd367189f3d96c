#ifndef CAPGEN_GRADCHECK_HPP_
#define CAPGEN_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "capgen/captioner.hpp"

namespace capgen {

struct GradcheckConfig {
  size_t hidden = 16;
  size_t embed_dim = 8;
  size_t feature_dim = 5;
  size_t regions = 4;
  size_t vocab_size = 12;
  size_t att_dim = 8;
  size_t num_layers = 3;
  uint64_t seed = 3;
  double step = 1e-5;
  double tolerance = 1e-4;
};

/// Worst relative error |a − n| / max(|a| + |n|, 1e-6) over the elements of
/// one parameter group (the name up to its first '.').
struct GroupResult {
  std::string variant;
  std::string group;
  double max_rel_error = 0.0;
  size_t elements = 0;
};

struct GradcheckReport {
  std::vector<GroupResult> groups;
  bool passed = true;
  double seconds = 0.0;
};

/// Runs between the analytic backward pass and the comparison, so tests can
/// tamper with the gradients.
using GradientHook = std::function<void(std::vector<Parameter>&)>;

/// Central differences on a two-image batch with captions of different
/// lengths, for every element of every parameter of both variants.
GradcheckReport run_gradcheck(const GradcheckConfig& cfg, const GradientHook& hook = {});

}  // namespace capgen

#endif  // CAPGEN_GRADCHECK_HPP_
