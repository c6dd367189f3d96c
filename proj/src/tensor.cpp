#include "capgen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "capgen/error.hpp"

namespace capgen {

namespace {

thread_local bool g_grad_enabled = true;

using NodePtr = std::shared_ptr<detail::Node>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

// Creates the output node. Parents are only linked when gradients can flow.
NodePtr make_node(Shape shape, std::vector<double> value,
                  std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (!g_grad_enabled) return node;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) {
      node->requires_grad = true;
      break;
    }
  }
  if (node->requires_grad) {
    for (const Tensor* t : inputs) {
      if (t->defined()) node->parents.push_back(t->node_ptr());
    }
  }
  return node;
}

detail::Node* grad_target(const Tensor& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  return const_cast<detail::Node*>(t.node());
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), size_t{1}, std::multiplies<>());
}

std::span<double> detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return from(shape, std::vector<double>(shape_size(shape), 0.0), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  if (shape.size() > 2) throw DimensionError("rank > 2 unsupported: " + shape_str(shape));
  for (size_t e : shape) {
    if (e == 0) throw DimensionError("zero extent in shape " + shape_str(shape));
  }
  if (shape_size(shape) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return node_ ? node_->shape : kEmpty;
}

size_t Tensor::size() const { return node_ ? node_->value.size() : 0; }

size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 2 ? s[0] : 1;
}

size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.size() == 2) return s[1];
  if (s.size() == 1) return s[0];
  return 1;
}

std::span<const double> Tensor::data() const {
  if (!node_) return {};
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  if (!node_) return {};
  return node_->value;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!node_) return {};
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) return {};
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  if (!node_) return;
  node_->grad.assign(node_->value.size(), 0.0);
}

void Tensor::clear_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

void Tensor::backward() const {
  if (!node_) throw ContractError("backward() on undefined tensor");
  if (node_->value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward_fn) continue;
    if (!node->grad.empty()) node->backward_fn(*node);
    node->grad.clear();
    node->grad.shrink_to_fit();
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
          "matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
  const size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  auto av = a.data();
  auto bv = b.data();
  for (size_t i = 0; i < m; ++i) {
    double* row = &out[i * n];
    for (size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      if (s == 0.0) continue;
      const double* brow = &bv[p * n];
      for (size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  auto node = make_node({m, n}, std::move(out), {&a, &b});
  if (node->requires_grad) {
    detail::Node* an = grad_target(a);
    detail::Node* bn = grad_target(b);
    const detail::Node* ar = a.node();
    const detail::Node* br = b.node();
    node->backward_fn = [=](detail::Node& self) {
      const auto& g = self.grad;
      if (an) {
        auto ga = an->grad_buffer();
        for (size_t i = 0; i < m; ++i)
          for (size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (size_t j = 0; j < n; ++j) acc += g[i * n + j] * br->value[p * n + j];
            ga[i * k + p] += acc;
          }
      }
      if (bn) {
        auto gb = bn->grad_buffer();
        for (size_t i = 0; i < m; ++i)
          for (size_t p = 0; p < k; ++p) {
            const double s = ar->value[i * k + p];
            for (size_t j = 0; j < n; ++j) gb[p * n + j] += s * g[i * n + j];
          }
      }
    };
  }
  return Tensor::make(node);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(w.rank() == 2 && x.cols() == w.cols(),
          "linear: input " + shape_str(x.shape()) + " incompatible with weight " +
              shape_str(w.shape()));
  const size_t n = x.rows(), in = x.cols(), out = w.rows();
  if (bias.defined()) {
    require(bias.size() == out, "linear: bias " + shape_str(bias.shape()) +
                                    " does not match weight " + shape_str(w.shape()));
  }
  std::vector<double> y(n * out);
  auto xv = x.data();
  auto wv = w.data();
  auto bv = bias.data();
  for (size_t r = 0; r < n; ++r) {
    const double* xr = &xv[r * in];
    for (size_t o = 0; o < out; ++o) {
      const double* wr = &wv[o * in];
      double acc = bias.defined() ? bv[o] : 0.0;
      for (size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      y[r * out + o] = acc;
    }
  }
  Shape shape = x.rank() == 2 ? Shape{n, out} : Shape{out};
  auto node = make_node(shape, std::move(y), {&x, &w, &bias});
  if (node->requires_grad) {
    detail::Node* xn = grad_target(x);
    detail::Node* wn = grad_target(w);
    detail::Node* bn = grad_target(bias);
    const detail::Node* xr = x.node();
    const detail::Node* wr = w.node();
    node->backward_fn = [=](detail::Node& self) {
      const auto& g = self.grad;
      if (xn) {
        auto gx = xn->grad_buffer();
        for (size_t r = 0; r < n; ++r)
          for (size_t o = 0; o < out; ++o) {
            const double s = g[r * out + o];
            if (s == 0.0) continue;
            const double* wrow = &wr->value[o * in];
            double* gxr = &gx[r * in];
            for (size_t i = 0; i < in; ++i) gxr[i] += s * wrow[i];
          }
      }
      if (wn) {
        auto gw = wn->grad_buffer();
        for (size_t r = 0; r < n; ++r)
          for (size_t o = 0; o < out; ++o) {
            const double s = g[r * out + o];
            if (s == 0.0) continue;
            const double* xrow = &xr->value[r * in];
            double* gwr = &gw[o * in];
            for (size_t i = 0; i < in; ++i) gwr[i] += s * xrow[i];
          }
      }
      if (bn) {
        auto gb = bn->grad_buffer();
        for (size_t r = 0; r < n; ++r)
          for (size_t o = 0; o < out; ++o) gb[o] += g[r * out + o];
      }
    };
  }
  return Tensor::make(node);
}

namespace {

template <typename Fwd, typename GradA, typename GradB>
Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                          GradA grad_a, GradB grad_b) {
  require(a.shape() == b.shape(), std::string(name) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size());
  auto av = a.data();
  auto bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  auto node = make_node(a.shape(), std::move(out), {&a, &b});
  if (node->requires_grad) {
    detail::Node* an = grad_target(a);
    detail::Node* bn = grad_target(b);
    const detail::Node* ar = a.node();
    const detail::Node* br = b.node();
    node->backward_fn = [=](detail::Node& self) {
      const size_t n = self.value.size();
      if (an) {
        auto ga = an->grad_buffer();
        for (size_t i = 0; i < n; ++i) ga[i] += grad_a(self.grad[i], ar->value[i], br->value[i]);
      }
      if (bn) {
        auto gb = bn->grad_buffer();
        for (size_t i = 0; i < n; ++i) gb[i] += grad_b(self.grad[i], ar->value[i], br->value[i]);
      }
    };
  }
  return Tensor::make(node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  auto node = make_node(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    detail::Node* an = grad_target(a);
    node->backward_fn = [=](detail::Node& self) {
      auto ga = an->grad_buffer();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += factor * self.grad[i];
    };
  }
  return Tensor::make(node);
}

Tensor add_row(const Tensor& a, const Tensor& v) {
  require(v.size() == a.cols(), "add_row: vector " + shape_str(v.shape()) +
                                    " does not match columns of " + shape_str(a.shape()));
  const size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.data().begin(), a.data().end());
  auto vv = v.data();
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) out[i * n + j] += vv[j];
  auto node = make_node(a.shape(), std::move(out), {&a, &v});
  if (node->requires_grad) {
    detail::Node* an = grad_target(a);
    detail::Node* vn = grad_target(v);
    node->backward_fn = [=](detail::Node& self) {
      if (an) {
        auto ga = an->grad_buffer();
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
      }
      if (vn) {
        auto gv = vn->grad_buffer();
        for (size_t i = 0; i < m; ++i)
          for (size_t j = 0; j < n; ++j) gv[j] += self.grad[i * n + j];
      }
    };
  }
  return Tensor::make(node);
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor activation(const Tensor& x, Activation kind) {
  std::vector<double> out(x.size());
  auto xv = x.data();
  if (kind == Activation::kSigmoid) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(xv[i]);
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  }
  auto node = make_node(x.shape(), std::move(out), {&x});
  if (node->requires_grad) {
    detail::Node* xn = grad_target(x);
    node->backward_fn = [=](detail::Node& self) {
      auto gx = xn->grad_buffer();
      for (size_t i = 0; i < gx.size(); ++i) {
        const double y = self.value[i];
        const double dy = kind == Activation::kSigmoid ? y * (1.0 - y) : 1.0 - y * y;
        gx[i] += self.grad[i] * dy;
      }
    };
  }
  return Tensor::make(node);
}

Tensor sigmoid(const Tensor& x) { return activation(x, Activation::kSigmoid); }
Tensor tanh(const Tensor& x) { return activation(x, Activation::kTanh); }

Tensor softmax(const Tensor& x) {
  if (!x.defined() || x.size() == 0) throw DomainError("softmax of an empty vector");
  const size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (size_t r = 0; r < m; ++r) {
    const double* in = &xv[r * n];
    double* o = &out[r * n];
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (size_t j = 0; j < n; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (size_t j = 0; j < n; ++j) o[j] /= total;
  }
  auto node = make_node(x.shape(), std::move(out), {&x});
  if (node->requires_grad) {
    detail::Node* xn = grad_target(x);
    node->backward_fn = [=](detail::Node& self) {
      auto gx = xn->grad_buffer();
      for (size_t r = 0; r < m; ++r) {
        const double* y = &self.value[r * n];
        const double* g = &self.grad[r * n];
        double dot = 0.0;
        for (size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        for (size_t j = 0; j < n; ++j) gx[r * n + j] += y[j] * (g[j] - dot);
      }
    };
  }
  return Tensor::make(node);
}

Tensor log_softmax(const Tensor& x) {
  if (!x.defined() || x.size() == 0) throw DomainError("log_softmax of an empty vector");
  const size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.size());
  auto xv = x.data();
  for (size_t r = 0; r < m; ++r) {
    const double* in = &xv[r * n];
    const double mx = *std::max_element(in, in + n);
    double total = 0.0;
    for (size_t j = 0; j < n; ++j) total += std::exp(in[j] - mx);
    const double lse = mx + std::log(total);
    for (size_t j = 0; j < n; ++j) out[r * n + j] = in[j] - lse;
  }
  auto node = make_node(x.shape(), std::move(out), {&x});
  if (node->requires_grad) {
    detail::Node* xn = grad_target(x);
    node->backward_fn = [=](detail::Node& self) {
      auto gx = xn->grad_buffer();
      for (size_t r = 0; r < m; ++r) {
        const double* g = &self.grad[r * n];
        double total = 0.0;
        for (size_t j = 0; j < n; ++j) total += g[j];
        for (size_t j = 0; j < n; ++j) {
          gx[r * n + j] += g[j] - std::exp(self.value[r * n + j]) * total;
        }
      }
    };
  }
  return Tensor::make(node);
}

Tensor concat(const std::vector<Tensor>& xs, size_t axis) {
  if (xs.empty()) throw DimensionError("concat of an empty list");
  if (axis > 1) throw DimensionError("concat axis must be 0 or 1");
  if (xs.size() == 1) return xs.front();
  const bool rank1 = xs.front().rank() <= 1;
  for (const auto& t : xs) {
    const bool ok = axis == 0 ? t.cols() == xs.front().cols() : t.rows() == xs.front().rows();
    require(ok && (t.rank() <= 1) == rank1,
            "concat: " + shape_str(t.shape()) + " disagrees with " +
                shape_str(xs.front().shape()) + " off axis " + std::to_string(axis));
  }
  std::vector<double> out;
  Shape shape;
  // Column offsets (axis 1) or row offsets (axis 0) of each piece.
  std::vector<size_t> offsets;
  if (axis == 0) {
    size_t rows = 0;
    for (const auto& t : xs) {
      offsets.push_back(rows);
      rows += t.rows();
      out.insert(out.end(), t.data().begin(), t.data().end());
    }
    shape = {rows, xs.front().cols()};
  } else {
    const size_t m = xs.front().rows();
    size_t total = 0;
    for (const auto& t : xs) {
      offsets.push_back(total);
      total += t.cols();
    }
    out.resize(m * total);
    for (size_t k = 0; k < xs.size(); ++k) {
      const size_t n = xs[k].cols();
      auto v = xs[k].data();
      for (size_t r = 0; r < m; ++r)
        std::copy_n(&v[r * n], n, &out[r * total + offsets[k]]);
    }
    shape = rank1 ? Shape{total} : Shape{m, total};
  }

  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(out);
  if (grad_enabled()) {
    for (const auto& t : xs) node->requires_grad = node->requires_grad || t.requires_grad();
  }
  if (node->requires_grad) {
    std::vector<detail::Node*> targets;
    std::vector<size_t> widths;
    for (const auto& t : xs) {
      node->parents.push_back(t.node_ptr());
      targets.push_back(grad_target(t));
      widths.push_back(t.cols());
    }
    node->backward_fn = [=](detail::Node& self) {
      if (axis == 0) {
        const size_t n = widths.front();
        for (size_t k = 0; k < targets.size(); ++k) {
          if (!targets[k]) continue;
          auto g = targets[k]->grad_buffer();
          for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[k] * n + i];
        }
      } else {
        const size_t total = self.shape.back();
        for (size_t k = 0; k < targets.size(); ++k) {
          if (!targets[k]) continue;
          auto g = targets[k]->grad_buffer();
          const size_t n = widths[k];
          const size_t m = g.size() / n;
          for (size_t r = 0; r < m; ++r)
            for (size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[r * total + offsets[k] + j];
        }
      }
    };
  }
  return Tensor::make(node);
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  require(shape_size(shape) == x.size(),
          "reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  auto node = make_node(shape, std::move(out), {&x});
  if (node->requires_grad) {
    detail::Node* xn = grad_target(x);
    node->backward_fn = [=](detail::Node& self) {
      auto g = xn->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
  }
  return Tensor::make(node);
}

Tensor gather_rows(const Tensor& table, std::span<const size_t> indices) {
  if (indices.empty()) throw DimensionError("gather_rows with no indices");
  const size_t k = table.rows(), n = table.cols();
  std::vector<double> out(indices.size() * n);
  auto tv = table.data();
  for (size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= k) {
      throw ContractError("row index " + std::to_string(indices[r]) + " out of range for " +
                          shape_str(table.shape()));
    }
    std::copy_n(&tv[indices[r] * n], n, &out[r * n]);
  }
  auto node = make_node({indices.size(), n}, std::move(out), {&table});
  if (node->requires_grad) {
    detail::Node* tn = grad_target(table);
    std::vector<size_t> idx(indices.begin(), indices.end());
    node->backward_fn = [=](detail::Node& self) {
      auto g = tn->grad_buffer();
      for (size_t r = 0; r < idx.size(); ++r)
        for (size_t j = 0; j < n; ++j) g[idx[r] * n + j] += self.grad[r * n + j];
    };
  }
  return Tensor::make(node);
}

Tensor repeat_rows(const Tensor& x, size_t times) {
  if (times == 0) throw DimensionError("repeat_rows with zero repeats");
  const size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * times * n);
  auto xv = x.data();
  for (size_t r = 0; r < m; ++r)
    for (size_t t = 0; t < times; ++t) std::copy_n(&xv[r * n], n, &out[(r * times + t) * n]);
  auto node = make_node({m * times, n}, std::move(out), {&x});
  if (node->requires_grad) {
    detail::Node* xn = grad_target(x);
    node->backward_fn = [=](detail::Node& self) {
      auto g = xn->grad_buffer();
      for (size_t r = 0; r < m; ++r)
        for (size_t t = 0; t < times; ++t)
          for (size_t j = 0; j < n; ++j) g[r * n + j] += self.grad[(r * times + t) * n + j];
    };
  }
  return Tensor::make(node);
}

Tensor segment_mean(const Tensor& x, size_t segment) {
  if (segment == 0) throw DomainError("segment_mean over zero rows");
  require(x.rows() % segment == 0, "segment_mean: " + std::to_string(x.rows()) +
                                       " rows not divisible into segments of " +
                                       std::to_string(segment));
  const size_t b = x.rows() / segment, n = x.cols();
  std::vector<double> out(b * n, 0.0);
  auto xv = x.data();
  for (size_t s = 0; s < b; ++s) {
    for (size_t i = 0; i < segment; ++i)
      for (size_t j = 0; j < n; ++j) out[s * n + j] += xv[(s * segment + i) * n + j];
    for (size_t j = 0; j < n; ++j) out[s * n + j] /= static_cast<double>(segment);
  }
  auto node = make_node({b, n}, std::move(out), {&x});
  if (node->requires_grad) {
    detail::Node* xn = grad_target(x);
    node->backward_fn = [=](detail::Node& self) {
      auto g = xn->grad_buffer();
      const double inv = 1.0 / static_cast<double>(segment);
      for (size_t s = 0; s < b; ++s)
        for (size_t i = 0; i < segment; ++i)
          for (size_t j = 0; j < n; ++j) g[(s * segment + i) * n + j] += inv * self.grad[s * n + j];
    };
  }
  return Tensor::make(node);
}

Tensor weighted_segment_sum(const Tensor& weights, const Tensor& values) {
  const size_t b = weights.rows(), l = weights.cols(), n = values.cols();
  require(values.rows() == b * l, "weighted_segment_sum: weights " + shape_str(weights.shape()) +
                                      " vs values " + shape_str(values.shape()));
  std::vector<double> out(b * n, 0.0);
  auto wv = weights.data();
  auto vv = values.data();
  for (size_t s = 0; s < b; ++s)
    for (size_t i = 0; i < l; ++i) {
      const double w = wv[s * l + i];
      for (size_t j = 0; j < n; ++j) out[s * n + j] += w * vv[(s * l + i) * n + j];
    }
  Shape shape = weights.rank() == 2 ? Shape{b, n} : Shape{n};
  auto node = make_node(shape, std::move(out), {&weights, &values});
  if (node->requires_grad) {
    detail::Node* wn = grad_target(weights);
    detail::Node* vn = grad_target(values);
    const detail::Node* wr = weights.node();
    const detail::Node* vr = values.node();
    node->backward_fn = [=](detail::Node& self) {
      if (wn) {
        auto g = wn->grad_buffer();
        for (size_t s = 0; s < b; ++s)
          for (size_t i = 0; i < l; ++i) {
            double acc = 0.0;
            for (size_t j = 0; j < n; ++j) acc += self.grad[s * n + j] * vr->value[(s * l + i) * n + j];
            g[s * l + i] += acc;
          }
      }
      if (vn) {
        auto g = vn->grad_buffer();
        for (size_t s = 0; s < b; ++s)
          for (size_t i = 0; i < l; ++i) {
            const double w = wr->value[s * l + i];
            for (size_t j = 0; j < n; ++j) g[(s * l + i) * n + j] += w * self.grad[s * n + j];
          }
      }
    };
  }
  return Tensor::make(node);
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  auto node = make_node({}, {total}, {&x});
  if (node->requires_grad) {
    detail::Node* xn = grad_target(x);
    node->backward_fn = [=](detail::Node& self) {
      auto g = xn->grad_buffer();
      for (double& v : g) v += self.grad[0];
    };
  }
  return Tensor::make(node);
}

Tensor masked_cross_entropy(const Tensor& logits, std::span<const size_t> targets,
                            std::span<const double> mask) {
  const size_t t = logits.rows(), k = logits.cols();
  require(targets.size() == t && mask.size() == t,
          "masked_cross_entropy: " + std::to_string(targets.size()) + " targets and " +
              std::to_string(mask.size()) + " mask entries for logits " +
              shape_str(logits.shape()));
  double weight = 0.0;
  for (double m : mask) weight += m;
  if (weight <= 0.0) throw DomainError("cross entropy over an all-masked sequence");
  auto lv = logits.data();
  std::vector<double> probs(t * k);
  double loss = 0.0;
  for (size_t r = 0; r < t; ++r) {
    if (targets[r] >= k) {
      throw ContractError("target " + std::to_string(targets[r]) + " out of range for " +
                          std::to_string(k) + " classes");
    }
    const double* row = &lv[r * k];
    const double mx = *std::max_element(row, row + k);
    double total = 0.0;
    for (size_t j = 0; j < k; ++j) total += (probs[r * k + j] = std::exp(row[j] - mx));
    for (size_t j = 0; j < k; ++j) probs[r * k + j] /= total;
    if (mask[r] != 0.0) loss -= mask[r] * (row[targets[r]] - mx - std::log(total));
  }
  loss /= weight;
  auto node = make_node({}, {loss}, {&logits});
  if (node->requires_grad) {
    detail::Node* ln = grad_target(logits);
    std::vector<size_t> tgt(targets.begin(), targets.end());
    std::vector<double> msk(mask.begin(), mask.end());
    node->backward_fn = [=, probs = std::move(probs)](detail::Node& self) {
      auto g = ln->grad_buffer();
      const double up = self.grad[0] / weight;
      for (size_t r = 0; r < t; ++r) {
        if (msk[r] == 0.0) continue;
        const double s = up * msk[r];
        for (size_t j = 0; j < k; ++j) g[r * k + j] += s * probs[r * k + j];
        g[r * k + tgt[r]] -= s;
      }
    };
  }
  return Tensor::make(node);
}

}  // namespace capgen
