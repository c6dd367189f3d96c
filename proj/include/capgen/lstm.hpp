#ifndef CAPGEN_LSTM_HPP_
#define CAPGEN_LSTM_HPP_

#include <string>
#include <utility>
#include <vector>

#include "capgen/rng.hpp"
#include "capgen/tensor.hpp"

namespace capgen {

struct AffineMap {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

/// Weights of one LSTM layer: W* act on the input, R* on the previous hidden
/// state, one bias per gate (input, forget, output, candidate).
struct LstmLayerParams {
  Tensor w_i, w_f, w_o, w_z;  // [hidden x input]
  Tensor r_i, r_f, r_o, r_z;  // [hidden x hidden]
  Tensor b_i, b_f, b_o, b_z;  // [hidden]

  size_t input_size() const { return w_i.cols(); }
  size_t hidden_size() const { return w_i.rows(); }
};

/// A stack of LSTM layers plus the per-layer maps that turn the mean
/// annotation into initial hidden and cell states.
struct StackParams {
  std::vector<LstmLayerParams> layers;
  std::vector<AffineMap> init_h;
  std::vector<AffineMap> init_c;

  size_t num_layers() const { return layers.size(); }
};

struct StackState {
  std::vector<Tensor> h;
  std::vector<Tensor> c;
};

struct CellOutput {
  Tensor h;
  Tensor c;
};

/// One step of the gated cell:
///   i = σ(W_i u + R_i h + b_i), f = σ(..), o = σ(..), z = tanh(W_z u + R_z h + b_z)
///   c = i⊙z + f⊙c_prev,          h = o⊙tanh(c)
/// Inputs may be single vectors or [batch x dim] rows.
CellOutput cell_step(const Tensor& u, const Tensor& h_prev, const Tensor& c_prev,
                     const LstmLayerParams& p);

/// h⁰ₗ = tanh(A_h,ₗ·ā + b_h,ₗ), c⁰ₗ = tanh(A_c,ₗ·ā + b_c,ₗ) where ā is the mean of
/// each image's `regions` annotation rows. `annotations` stacks the images'
/// [regions x D] blocks vertically; states come back as [batch x hidden].
StackState init_states(const Tensor& annotations, const StackParams& p, size_t regions);
/// Single image: every row of `annotations` belongs to it; states are vectors.
StackState init_states(const Tensor& annotations, const StackParams& p);

/// Feeds `input` to layer 1 and each layer's h to the next; returns the top h.
std::pair<Tensor, StackState> stack_step(const Tensor& input, const StackState& state,
                                         const StackParams& p);

/// Uniform(±1/√fan_in) initialisation; every tensor is appended to `registry`
/// under `prefix` + a suffix such as ".w_i".
LstmLayerParams make_lstm_layer(size_t input, size_t hidden, Rng& rng,
                                std::vector<Parameter>& registry, const std::string& prefix);
StackParams make_stack(size_t num_layers, size_t input, size_t hidden, size_t feature_dim, Rng& rng,
                       std::vector<Parameter>& registry);
AffineMap make_affine(size_t in, size_t out, Rng& rng, std::vector<Parameter>& registry,
                      const std::string& prefix);

}  // namespace capgen

#endif  // CAPGEN_LSTM_HPP_
