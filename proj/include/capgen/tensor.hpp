#ifndef CAPGEN_TENSOR_HPP_
#define CAPGEN_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace capgen {

using Shape = std::vector<size_t>;

std::string shape_str(const Shape& shape);
size_t shape_size(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles that records the operations producing it
/// so gradients can be pulled back with backward().
///
/// Copies are shallow: two Tensor handles may refer to the same node. Ranks
/// 0, 1 and 2 are supported; a rank-1 tensor of n elements behaves as a 1×n
/// row in matrix operations.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  size_t rank() const { return shape().size(); }
  size_t size() const;
  size_t rows() const;
  size_t cols() const;

  std::span<const double> data() const;
  // Only meaningful for leaves; mutating a value that fed a recorded graph
  // does not re-run that graph.
  std::span<double> mutable_data();
  double item() const;
  double operator[](size_t i) const { return data()[i]; }
  double at(size_t r, size_t c) const { return data()[r * cols() + c]; }

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  /// Copy of the values with no graph attached.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. Gradients accumulate into every
  /// reachable leaf that requires grad; intermediate gradients are released.
  void backward() const;

  const detail::Node* node() const { return node_.get(); }

  static Tensor make(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// While alive, operations on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Trainable leaf tensor plus its optimizer grouping.
struct Parameter {
  Tensor tensor;
  std::string name;
  double lr_scale = 1.0;
  bool trainable = true;
};

enum class Activation { kSigmoid, kTanh };

Tensor matmul(const Tensor& a, const Tensor& b);
/// x·wᵀ + bias for x[n×in], w[out×in], bias[out] (bias may be undefined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// a[m×n] + v[n] broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& v);
Tensor activation(const Tensor& x, Activation kind);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
/// Row-wise softmax (a rank-1 tensor is a single row).
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor concat(const std::vector<Tensor>& xs, size_t axis);
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor gather_rows(const Tensor& table, std::span<const size_t> indices);
/// Each row of x[b×n] repeated `times` times consecutively: [b·times × n].
Tensor repeat_rows(const Tensor& x, size_t times);
/// Mean over consecutive blocks of `segment` rows: [b·segment × n] -> [b × n].
Tensor segment_mean(const Tensor& x, size_t segment);
/// out[b] = Σ_i weights[b][i]·values[b·L + i] for weights[b×L], values[b·L × n].
Tensor weighted_segment_sum(const Tensor& weights, const Tensor& values);
Tensor sum(const Tensor& x);
/// −(1/Σmask)·Σ_t mask_t·log softmax(logits_t)[targets_t].
Tensor masked_cross_entropy(const Tensor& logits, std::span<const size_t> targets,
                            std::span<const double> mask);

double stable_sigmoid(double x);

}  // namespace capgen

#endif  // CAPGEN_TENSOR_HPP_
