#ifndef CAPGEN_CAPTIONER_HPP_
#define CAPGEN_CAPTIONER_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capgen/attention.hpp"
#include "capgen/features.hpp"
#include "capgen/lstm.hpp"
#include "capgen/tensor.hpp"
#include "capgen/text.hpp"

namespace capgen {

enum class Variant { kEncoderDecoder, kSoftAttention };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::kSoftAttention;
  size_t vocab_size = 0;
  size_t embed_dim = 300;
  size_t hidden = 512;
  size_t feature_dim = 0;
  size_t att_dim = 256;
  size_t num_layers = 3;
  uint64_t seed = 1;

  bool operator==(const ModelConfig&) const = default;
};

/// Embedding table, LSTM stack with init maps, optional soft attention and the
/// output projection onto the vocabulary.
///
/// Under soft attention the context vector is concatenated to the word
/// embedding before layer 1, which is the same as giving each gate its own
/// projection of the context. The encoder-decoder variant sees the image only
/// through the initial states.
class CaptionModel {
 public:
  explicit CaptionModel(const ModelConfig& cfg);

  CaptionModel(const CaptionModel&) = delete;
  CaptionModel& operator=(const CaptionModel&) = delete;
  CaptionModel(CaptionModel&&) = default;
  CaptionModel& operator=(CaptionModel&&) = default;

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  bool has_attention() const { return attention_.has_value(); }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(const std::string& name);
  const Parameter* find_parameter(const std::string& name) const;

  Parameter& embeddings() { return params_.front(); }
  const Parameter& embeddings() const { return params_.front(); }
  /// Copies values from a loaded table of identical shape.
  void set_embeddings(const Tensor& table);

  const StackParams& stack() const { return stack_; }
  const AttentionParams& attention() const;
  const AffineMap& output_projection() const { return output_; }

  /// Values of every parameter, in registry order.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

 private:
  ModelConfig config_;
  std::vector<Parameter> params_;
  StackParams stack_;
  std::optional<AttentionParams> attention_;
  AffineMap output_;
};

/// Recurrent state while generating for a batch of images.
struct DecoderState {
  StackState stack;
  Tensor annotations;  // [batch·L x D]
  Tensor projected;    // attention projection of annotations, soft attention only
  size_t regions = 0;
  size_t batch = 0;
};

struct StepOutput {
  Tensor logits;  // [batch x K]
  Tensor alpha;   // [batch x L]; undefined for encoder-decoder
};

DecoderState begin_decoding(const CaptionModel& model, const Tensor& annotations, size_t regions);

/// Consumes the previous token of each row and predicts the next one. Under
/// soft attention the context uses the top-layer hidden state from before the
/// step, and α is checked to lie on the simplex.
StepOutput decode_step(const CaptionModel& model, DecoderState& state,
                       std::span<const size_t> prev_tokens);

/// Teacher-forced logits [T x K] with T = caption length − 1.
Tensor forward_teacher_forced(const CaptionModel& model, const FeatureSet& features,
                              const EncodedCaption& caption);

/// Padded batch forward. Logits are step-major: row t·batch + b is step t of
/// caption b. Targets past a caption's end are <PAD> with mask 0.
struct BatchForward {
  Tensor logits;
  std::vector<size_t> targets;
  std::vector<double> mask;
  size_t steps = 0;
};
BatchForward forward_batch(const CaptionModel& model, const Tensor& annotations, size_t regions,
                           std::span<const EncodedCaption> captions);

struct DecodeResult {
  std::vector<size_t> tokens;  // without sentinels
  double logprob = 0.0;
  std::vector<std::vector<double>> alphas;  // one row per step, soft attention only
};

/// At most n_max prediction steps; stops early on <END>. Ties go to the lower
/// token index.
DecodeResult greedy_decode(const CaptionModel& model, const FeatureSet& features, size_t n_max);

/// Keeps the beam_width best partial sequences by summed log-probability.
/// Hypotheses ending in <END> or reaching n_max steps retire to a pool whose
/// best entry is returned; equal scores go to the lexicographically smaller
/// token sequence.
DecodeResult beam_decode(const CaptionModel& model, const FeatureSet& features, size_t beam_width,
                         size_t n_max);

/// Σ_t log P(w_t | image, w_<t) over a teacher-forced pass.
double sequence_logprob(const CaptionModel& model, const FeatureSet& features,
                        const EncodedCaption& caption);

/// Row-wise log-softmax of plain values.
std::vector<double> log_probs(std::span<const double> logits);

}  // namespace capgen

#endif  // CAPGEN_CAPTIONER_HPP_
