#ifndef CAPGEN_ATTENTION_HPP_
#define CAPGEN_ATTENTION_HPP_

#include <cstdint>
#include <vector>

#include "capgen/rng.hpp"
#include "capgen/tensor.hpp"

namespace capgen {

/// Additive scorer e_i = w_sᵀ·tanh(W_a·a_i + U_a·h + b_a).
struct AttentionParams {
  Tensor w_a;  // [att x D]
  Tensor u_a;  // [att x hidden]
  Tensor b_a;  // [att]
  Tensor w_s;  // [att]

  size_t att_dim() const { return w_a.rows(); }
};

struct AttentionStep {
  Tensor alpha;    // [L] or [batch x L]
  Tensor context;  // [D] or [batch x D]
};

/// W_a·a_i + b_a for every annotation row; constant across decoding steps.
Tensor project_annotations(const Tensor& annotations, const AttentionParams& p);

/// Scores for each region. `annotations` stacks one [L x D] block per row of
/// `h_prev`; a vector h_prev yields a vector of L scores.
Tensor score(const Tensor& annotations, const Tensor& h_prev, const AttentionParams& p);
/// Same, starting from project_annotations().
Tensor score_projected(const Tensor& projected, const Tensor& h_prev, const AttentionParams& p);

/// Softmax over regions.
Tensor normalize(const Tensor& scores);

/// s = Σ_i α_i·a_i per image.
Tensor context(const Tensor& annotations, const Tensor& alpha);

/// Throws InvariantError unless every row of alpha is strictly positive and
/// sums to 1 within `tolerance`.
void check_simplex(const Tensor& alpha, double tolerance = 1e-9);

/// Rows verified by check_simplex since process start.
uint64_t simplex_rows_checked();

AttentionStep attend(const Tensor& annotations, const Tensor& projected, const Tensor& h_prev,
                     const AttentionParams& p);

AttentionParams make_attention(size_t feature_dim, size_t hidden, size_t att_dim, Rng& rng,
                               std::vector<Parameter>& registry);

}  // namespace capgen

#endif  // CAPGEN_ATTENTION_HPP_
