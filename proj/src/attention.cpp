#include "capgen/attention.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "capgen/error.hpp"

namespace capgen {

namespace {
std::atomic<uint64_t> g_rows_checked{0};
}  // namespace

Tensor project_annotations(const Tensor& annotations, const AttentionParams& p) {
  return linear(annotations, p.w_a, p.b_a);
}

Tensor score_projected(const Tensor& projected, const Tensor& h_prev, const AttentionParams& p) {
  const size_t batch = h_prev.rows();
  if (projected.rows() % batch != 0 || projected.cols() != p.att_dim()) {
    throw DimensionError("attention: projected annotations " + shape_str(projected.shape()) +
                         " do not split over " + std::to_string(batch) + " hidden rows");
  }
  const size_t regions = projected.rows() / batch;
  const Tensor hidden = linear(h_prev, p.u_a, Tensor());
  const Tensor mixed = tanh(add(projected, repeat_rows(hidden, regions)));
  const Tensor e = linear(mixed, reshape(p.w_s, {1, p.att_dim()}), Tensor());
  return h_prev.rank() == 1 ? reshape(e, {regions}) : reshape(e, {batch, regions});
}

Tensor score(const Tensor& annotations, const Tensor& h_prev, const AttentionParams& p) {
  if (annotations.cols() != p.w_a.cols() || h_prev.cols() != p.u_a.cols()) {
    throw DimensionError("attention: annotations " + shape_str(annotations.shape()) + " and h " +
                         shape_str(h_prev.shape()) + " do not fit W_a " +
                         shape_str(p.w_a.shape()) + ", U_a " + shape_str(p.u_a.shape()));
  }
  return score_projected(project_annotations(annotations, p), h_prev, p);
}

Tensor normalize(const Tensor& scores) { return softmax(scores); }

Tensor context(const Tensor& annotations, const Tensor& alpha) {
  if (annotations.rows() != alpha.size()) {
    throw DimensionError("context: " + std::to_string(alpha.size()) + " weights for " +
                         std::to_string(annotations.rows()) + " annotation rows");
  }
  return weighted_segment_sum(alpha, annotations);
}

void check_simplex(const Tensor& alpha, double tolerance) {
  const size_t rows = alpha.rows(), cols = alpha.cols();
  auto v = alpha.data();
  for (size_t r = 0; r < rows; ++r) {
    double total = 0.0;
    for (size_t j = 0; j < cols; ++j) {
      const double a = v[r * cols + j];
      if (!(a > 0.0)) {
        std::ostringstream os;
        os << "attention weight " << j << " of row " << r << " is not positive (" << a << ")";
        throw InvariantError(os.str());
      }
      total += a;
    }
    if (!(std::abs(total - 1.0) <= tolerance)) {
      std::ostringstream os;
      os.precision(17);
      os << "attention weights of row " << r << " sum to " << total;
      throw InvariantError(os.str());
    }
  }
  g_rows_checked.fetch_add(rows, std::memory_order_relaxed);
}

uint64_t simplex_rows_checked() { return g_rows_checked.load(std::memory_order_relaxed); }

AttentionStep attend(const Tensor& annotations, const Tensor& projected, const Tensor& h_prev,
                     const AttentionParams& p) {
  Tensor alpha = normalize(score_projected(projected, h_prev, p));
  check_simplex(alpha);
  Tensor s = weighted_segment_sum(alpha, annotations);
  return {std::move(alpha), std::move(s)};
}

AttentionParams make_attention(size_t feature_dim, size_t hidden, size_t att_dim, Rng& rng,
                               std::vector<Parameter>& registry) {
  auto make = [&](const Shape& shape, size_t fan_in, const std::string& name) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> values(shape_size(shape));
    for (double& v : values) v = rng.uniform(-bound, bound);
    Tensor t = Tensor::from(shape, std::move(values), true);
    registry.push_back(Parameter{t, name, 1.0, true});
    return t;
  };
  AttentionParams p;
  p.w_a = make({att_dim, feature_dim}, feature_dim, "attention.w_a");
  p.u_a = make({att_dim, hidden}, hidden, "attention.u_a");
  p.b_a = make({att_dim}, feature_dim, "attention.b_a");
  p.w_s = make({att_dim}, att_dim, "attention.w_s");
  return p;
}

}  // namespace capgen
