#include "capgen/lstm.hpp"

#include <cmath>

#include "capgen/error.hpp"

namespace capgen {

namespace {

Tensor gate(const Tensor& u, const Tensor& h, const Tensor& w, const Tensor& r, const Tensor& b,
            Activation kind) {
  return activation(add(linear(u, w, b), linear(h, r, Tensor())), kind);
}

Tensor uniform_tensor(const Shape& shape, double bound, Rng& rng) {
  std::vector<double> values(shape_size(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(shape, std::move(values), true);
}

Tensor registered(const Shape& shape, double bound, Rng& rng, std::vector<Parameter>& registry,
                  const std::string& name) {
  Tensor t = uniform_tensor(shape, bound, rng);
  registry.push_back(Parameter{t, name, 1.0, true});
  return t;
}

}  // namespace

CellOutput cell_step(const Tensor& u, const Tensor& h_prev, const Tensor& c_prev,
                     const LstmLayerParams& p) {
  const size_t hidden = p.hidden_size();
  if (u.cols() != p.input_size() || h_prev.cols() != hidden || c_prev.shape() != h_prev.shape() ||
      u.rows() != h_prev.rows()) {
    throw DimensionError("cell_step: input " + shape_str(u.shape()) + ", h " +
                         shape_str(h_prev.shape()) + ", c " + shape_str(c_prev.shape()) +
                         " do not fit a layer of input " + std::to_string(p.input_size()) +
                         " and hidden " + std::to_string(hidden));
  }
  const Tensor i = gate(u, h_prev, p.w_i, p.r_i, p.b_i, Activation::kSigmoid);
  const Tensor f = gate(u, h_prev, p.w_f, p.r_f, p.b_f, Activation::kSigmoid);
  const Tensor o = gate(u, h_prev, p.w_o, p.r_o, p.b_o, Activation::kSigmoid);
  const Tensor z = gate(u, h_prev, p.w_z, p.r_z, p.b_z, Activation::kTanh);
  Tensor c = add(mul(i, z), mul(f, c_prev));
  Tensor h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

namespace {

StackState init_states_impl(const Tensor& annotations, const StackParams& p, size_t regions,
                            bool as_vector) {
  if (regions == 0 || !annotations.defined()) {
    throw DomainError("init_states needs at least one annotation vector");
  }
  Tensor mean = segment_mean(annotations, regions);
  if (as_vector) mean = reshape(mean, {mean.cols()});
  StackState state;
  for (size_t l = 0; l < p.num_layers(); ++l) {
    state.h.push_back(tanh(p.init_h[l](mean)));
    state.c.push_back(tanh(p.init_c[l](mean)));
  }
  return state;
}

}  // namespace

StackState init_states(const Tensor& annotations, const StackParams& p, size_t regions) {
  return init_states_impl(annotations, p, regions, false);
}

StackState init_states(const Tensor& annotations, const StackParams& p) {
  return init_states_impl(annotations, p, annotations.defined() ? annotations.rows() : 0, true);
}

std::pair<Tensor, StackState> stack_step(const Tensor& input, const StackState& state,
                                         const StackParams& p) {
  if (p.layers.empty()) throw ContractError("stack_step on an empty stack");
  if (input.cols() != p.layers.front().input_size()) {
    throw DimensionError("stack_step: input " + shape_str(input.shape()) +
                         " but layer 1 expects width " +
                         std::to_string(p.layers.front().input_size()));
  }
  if (state.h.size() != p.num_layers() || state.c.size() != p.num_layers()) {
    throw ContractError("stack_step: state has " + std::to_string(state.h.size()) +
                        " layers, stack has " + std::to_string(p.num_layers()));
  }
  StackState next;
  Tensor x = input;
  for (size_t l = 0; l < p.num_layers(); ++l) {
    CellOutput out = cell_step(x, state.h[l], state.c[l], p.layers[l]);
    x = out.h;
    next.h.push_back(std::move(out.h));
    next.c.push_back(std::move(out.c));
  }
  return {x, std::move(next)};
}

LstmLayerParams make_lstm_layer(size_t input, size_t hidden, Rng& rng,
                                std::vector<Parameter>& registry, const std::string& prefix) {
  const double wb = 1.0 / std::sqrt(static_cast<double>(input));
  const double rb = 1.0 / std::sqrt(static_cast<double>(hidden));
  LstmLayerParams p;
  p.w_i = registered({hidden, input}, wb, rng, registry, prefix + ".w_i");
  p.w_f = registered({hidden, input}, wb, rng, registry, prefix + ".w_f");
  p.w_o = registered({hidden, input}, wb, rng, registry, prefix + ".w_o");
  p.w_z = registered({hidden, input}, wb, rng, registry, prefix + ".w_z");
  p.r_i = registered({hidden, hidden}, rb, rng, registry, prefix + ".r_i");
  p.r_f = registered({hidden, hidden}, rb, rng, registry, prefix + ".r_f");
  p.r_o = registered({hidden, hidden}, rb, rng, registry, prefix + ".r_o");
  p.r_z = registered({hidden, hidden}, rb, rng, registry, prefix + ".r_z");
  p.b_i = registered({hidden}, rb, rng, registry, prefix + ".b_i");
  p.b_f = registered({hidden}, rb, rng, registry, prefix + ".b_f");
  p.b_o = registered({hidden}, rb, rng, registry, prefix + ".b_o");
  p.b_z = registered({hidden}, rb, rng, registry, prefix + ".b_z");
  return p;
}

AffineMap make_affine(size_t in, size_t out, Rng& rng, std::vector<Parameter>& registry,
                      const std::string& prefix) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  AffineMap m;
  m.weight = registered({out, in}, bound, rng, registry, prefix + ".weight");
  m.bias = registered({out}, bound, rng, registry, prefix + ".bias");
  return m;
}

StackParams make_stack(size_t num_layers, size_t input, size_t hidden, size_t feature_dim, Rng& rng,
                       std::vector<Parameter>& registry) {
  if (num_layers == 0) throw ConfigError("an LSTM stack needs at least one layer");
  StackParams p;
  for (size_t l = 0; l < num_layers; ++l) {
    const std::string n = std::to_string(l + 1);
    p.layers.push_back(make_lstm_layer(l == 0 ? input : hidden, hidden, rng, registry, "lstm" + n));
  }
  for (size_t l = 0; l < num_layers; ++l) {
    const std::string n = std::to_string(l + 1);
    p.init_h.push_back(make_affine(feature_dim, hidden, rng, registry, "init_h" + n));
    p.init_c.push_back(make_affine(feature_dim, hidden, rng, registry, "init_c" + n));
  }
  return p;
}

}  // namespace capgen
