#include "capgen/captioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "capgen/error.hpp"
#include "capgen/rng.hpp"

namespace capgen {

const char* variant_name(Variant v) {
  return v == Variant::kEncoderDecoder ? "encoder_decoder" : "soft_attention";
}

Variant parse_variant(const std::string& name) {
  if (name == "encoder_decoder") return Variant::kEncoderDecoder;
  if (name == "soft_attention") return Variant::kSoftAttention;
  throw ConfigError("unknown variant '" + name + "' (expected encoder_decoder or soft_attention)");
}

CaptionModel::CaptionModel(const ModelConfig& cfg) : config_(cfg) {
  if (cfg.vocab_size <= Vocabulary::kReservedCount) {
    throw ConfigError("vocabulary of " + std::to_string(cfg.vocab_size) +
                      " entries has no ordinary tokens");
  }
  if (cfg.embed_dim == 0 || cfg.hidden == 0 || cfg.feature_dim == 0) {
    throw ConfigError("embed_dim, hidden and feature_dim must be positive");
  }
  if (cfg.variant == Variant::kSoftAttention && cfg.att_dim == 0) {
    throw ConfigError("att_dim must be positive for soft attention");
  }
  Rng rng(cfg.seed);
  std::vector<double> table(cfg.vocab_size * cfg.embed_dim);
  for (double& v : table) v = rng.uniform(-0.1, 0.1);
  params_.push_back(Parameter{Tensor::from({cfg.vocab_size, cfg.embed_dim}, std::move(table), true),
                              "embeddings", 0.1, true});

  const bool soft = cfg.variant == Variant::kSoftAttention;
  const size_t input = cfg.embed_dim + (soft ? cfg.feature_dim : 0);
  stack_ = make_stack(cfg.num_layers, input, cfg.hidden, cfg.feature_dim, rng, params_);
  if (soft) attention_ = make_attention(cfg.feature_dim, cfg.hidden, cfg.att_dim, rng, params_);
  output_ = make_affine(cfg.hidden, cfg.vocab_size, rng, params_, "output");
}

Parameter& CaptionModel::parameter(const std::string& name) {
  for (Parameter& p : params_)
    if (p.name == name) return p;
  throw ContractError("model has no parameter named '" + name + "'");
}

const Parameter* CaptionModel::find_parameter(const std::string& name) const {
  for (const Parameter& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void CaptionModel::set_embeddings(const Tensor& table) {
  Tensor& e = params_.front().tensor;
  if (table.shape() != e.shape()) {
    throw DimensionError("embedding table " + shape_str(table.shape()) + " does not match model " +
                         shape_str(e.shape()));
  }
  std::ranges::copy(table.data(), e.mutable_data().begin());
}

const AttentionParams& CaptionModel::attention() const {
  if (!attention_) throw ContractError("encoder_decoder model has no attention parameters");
  return *attention_;
}

std::vector<std::vector<double>> CaptionModel::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) {
    auto d = p.tensor.data();
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

void CaptionModel::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != params_.size()) {
    throw ContractError("restore: " + std::to_string(values.size()) + " blobs for " +
                        std::to_string(params_.size()) + " parameters");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].tensor.mutable_data();
    if (values[i].size() != dst.size()) {
      throw ContractError("restore: size mismatch for " + params_[i].name);
    }
    std::ranges::copy(values[i], dst.begin());
  }
}

std::vector<double> log_probs(std::span<const double> logits) {
  if (logits.empty()) throw DomainError("log_probs of an empty vector");
  const double top = *std::ranges::max_element(logits);
  double total = 0.0;
  for (double x : logits) total += std::exp(x - top);
  const double lse = top + std::log(total);
  std::vector<double> out(logits.size());
  for (size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

DecoderState begin_decoding(const CaptionModel& model, const Tensor& annotations, size_t regions) {
  const ModelConfig& cfg = model.config();
  if (!annotations.defined() || annotations.rank() != 2) {
    throw DimensionError("annotations must be a [regions x D] matrix");
  }
  if (annotations.cols() != cfg.feature_dim) {
    throw DimensionError("annotations have " + std::to_string(annotations.cols()) +
                         " dims, model expects " + std::to_string(cfg.feature_dim));
  }
  if (regions == 0 || annotations.rows() % regions != 0) {
    throw DimensionError(std::to_string(annotations.rows()) + " annotation rows do not split into " +
                         std::to_string(regions) + "-region images");
  }
  DecoderState state;
  state.regions = regions;
  state.batch = annotations.rows() / regions;
  state.annotations = annotations;
  state.stack = init_states(annotations, model.stack(), regions);
  if (model.has_attention()) state.projected = project_annotations(annotations, model.attention());
  return state;
}

namespace {

struct Advance {
  Tensor top_h;
  Tensor alpha;
};

Advance advance(const CaptionModel& model, DecoderState& state, std::span<const size_t> prev) {
  if (prev.size() != state.batch) {
    throw ContractError(std::to_string(prev.size()) + " previous tokens for a batch of " +
                        std::to_string(state.batch));
  }
  Tensor input = gather_rows(model.embeddings().tensor, prev);
  Tensor alpha;
  if (model.has_attention()) {
    AttentionStep step =
        attend(state.annotations, state.projected, state.stack.h.back(), model.attention());
    alpha = std::move(step.alpha);
    input = concat({input, step.context}, 1);
  }
  auto [top, next] = stack_step(input, state.stack, model.stack());
  state.stack = std::move(next);
  return {std::move(top), std::move(alpha)};
}

void require_caption(const EncodedCaption& caption, size_t vocab_size) {
  if (caption.tokens.empty() || caption.tokens.front() != Vocabulary::kStart) {
    throw ContractError("caption must begin with <START>");
  }
  if (caption.tokens.size() < 2) throw ContractError("caption has nothing to predict");
  for (size_t t : caption.tokens) {
    if (t >= vocab_size) {
      throw ContractError("token index " + std::to_string(t) + " outside vocabulary of " +
                          std::to_string(vocab_size));
    }
  }
}

}  // namespace

StepOutput decode_step(const CaptionModel& model, DecoderState& state,
                       std::span<const size_t> prev_tokens) {
  Advance a = advance(model, state, prev_tokens);
  return {model.output_projection()(a.top_h), std::move(a.alpha)};
}

Tensor forward_teacher_forced(const CaptionModel& model, const FeatureSet& features,
                              const EncodedCaption& caption) {
  require_caption(caption, model.config().vocab_size);
  DecoderState state = begin_decoding(model, features.annotations, features.regions());
  std::vector<Tensor> tops;
  for (size_t t = 0; t + 1 < caption.length(); ++t) {
    tops.push_back(advance(model, state, std::span(&caption.tokens[t], 1)).top_h);
  }
  return model.output_projection()(concat(tops, 0));
}

BatchForward forward_batch(const CaptionModel& model, const Tensor& annotations, size_t regions,
                           std::span<const EncodedCaption> captions) {
  DecoderState state = begin_decoding(model, annotations, regions);
  if (captions.size() != state.batch) {
    throw ContractError(std::to_string(captions.size()) + " captions for " +
                        std::to_string(state.batch) + " images");
  }
  size_t longest = 0;
  for (const EncodedCaption& c : captions) {
    require_caption(c, model.config().vocab_size);
    longest = std::max(longest, c.length());
  }
  BatchForward out;
  out.steps = longest - 1;
  std::vector<Tensor> tops;
  std::vector<size_t> prev(state.batch);
  for (size_t t = 0; t < out.steps; ++t) {
    for (size_t b = 0; b < state.batch; ++b) {
      const auto& tok = captions[b].tokens;
      prev[b] = t < tok.size() ? tok[t] : Vocabulary::kPad;
      const bool real = t + 1 < tok.size();
      out.targets.push_back(real ? tok[t + 1] : Vocabulary::kPad);
      out.mask.push_back(real ? 1.0 : 0.0);
    }
    tops.push_back(advance(model, state, prev).top_h);
  }
  out.logits = model.output_projection()(concat(tops, 0));
  return out;
}

namespace {

std::vector<double> row_of(const Tensor& t, size_t r) {
  const size_t n = t.cols();
  auto d = t.data();
  return {d.begin() + r * n, d.begin() + (r + 1) * n};
}

// Indices that repeat a block of `regions` rows once per entry of `owners`,
// taking block `owners[i]` each time.
std::vector<size_t> block_indices(std::span<const size_t> owners, size_t regions) {
  std::vector<size_t> idx;
  idx.reserve(owners.size() * regions);
  for (size_t o : owners)
    for (size_t i = 0; i < regions; ++i) idx.push_back(o * regions + i);
  return idx;
}

void reorder(DecoderState& state, std::span<const size_t> owners) {
  for (auto* layer : {&state.stack.h, &state.stack.c})
    for (Tensor& t : *layer) t = gather_rows(t, owners);
  const std::vector<size_t> idx = block_indices(owners, state.regions);
  state.annotations = gather_rows(state.annotations, idx);
  if (state.projected.defined()) state.projected = gather_rows(state.projected, idx);
  state.batch = owners.size();
}

struct Hypothesis {
  std::vector<size_t> tokens;
  double logprob = 0.0;
  std::vector<std::vector<double>> alphas;
};

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.logprob != b.logprob) return a.logprob > b.logprob;
  return a.tokens < b.tokens;
}

}  // namespace

DecodeResult greedy_decode(const CaptionModel& model, const FeatureSet& features, size_t n_max) {
  NoGradGuard no_grad;
  DecodeResult result;
  if (n_max == 0) return result;
  DecoderState state = begin_decoding(model, features.annotations, features.regions());
  size_t prev = Vocabulary::kStart;
  for (size_t t = 0; t < n_max; ++t) {
    StepOutput out = decode_step(model, state, std::span(&prev, 1));
    if (out.alpha.defined()) result.alphas.push_back(row_of(out.alpha, 0));
    const std::vector<double> lp = log_probs(out.logits.data());
    const size_t best = static_cast<size_t>(std::ranges::max_element(lp) - lp.begin());
    result.logprob += lp[best];
    if (best == Vocabulary::kEnd) break;
    result.tokens.push_back(best);
    prev = best;
  }
  return result;
}

DecodeResult beam_decode(const CaptionModel& model, const FeatureSet& features, size_t beam_width,
                         size_t n_max) {
  if (beam_width == 0) throw DomainError("beam width must be at least 1");
  NoGradGuard no_grad;
  if (n_max == 0) return {};
  DecoderState state = begin_decoding(model, features.annotations, features.regions());
  std::vector<Hypothesis> live(1);
  std::vector<Hypothesis> pool;

  struct Candidate {
    size_t parent;
    size_t token;
    double logprob;
  };

  for (size_t t = 0; t < n_max && !live.empty(); ++t) {
    std::vector<size_t> prev;
    for (const Hypothesis& h : live) prev.push_back(h.tokens.empty() ? Vocabulary::kStart : h.tokens.back());
    StepOutput out = decode_step(model, state, prev);

    std::vector<Candidate> cands;
    for (size_t b = 0; b < live.size(); ++b) {
      const std::vector<double> lp = log_probs(row_of(out.logits, b));
      for (size_t k = 0; k < lp.size(); ++k) cands.push_back({b, k, live[b].logprob + lp[k]});
    }
    // A candidate's token sequence is its parent's plus one token, so
    // lexicographic order compares parents first, then the new token.
    auto cand_better = [&](const Candidate& a, const Candidate& b) {
      if (a.logprob != b.logprob) return a.logprob > b.logprob;
      if (a.parent != b.parent) {
        const auto& ta = live[a.parent].tokens;
        const auto& tb = live[b.parent].tokens;
        if (ta != tb) return ta < tb;
      }
      return a.token < b.token;
    };
    const size_t keep = std::min(beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      cand_better);
    cands.resize(keep);

    std::vector<Hypothesis> next;
    std::vector<size_t> owners;
    const bool last = t + 1 == n_max;
    for (const Candidate& c : cands) {
      Hypothesis h;
      h.tokens = live[c.parent].tokens;
      h.logprob = c.logprob;
      h.alphas = live[c.parent].alphas;
      if (out.alpha.defined()) h.alphas.push_back(row_of(out.alpha, c.parent));
      if (c.token == Vocabulary::kEnd) {
        pool.push_back(std::move(h));
        continue;
      }
      h.tokens.push_back(c.token);
      if (last) {
        pool.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
        owners.push_back(c.parent);
      }
    }
    live = std::move(next);
    if (live.empty()) break;

    // Scores only fall as sequences grow, so a finished hypothesis strictly
    // ahead of every live one cannot be overtaken.
    const auto best_pool = std::ranges::min_element(pool, better);
    double best_live = -std::numeric_limits<double>::infinity();
    for (const Hypothesis& h : live) best_live = std::max(best_live, h.logprob);
    if (best_pool != pool.end() && best_pool->logprob > best_live) break;

    reorder(state, owners);
  }
  const Hypothesis& best = *std::ranges::min_element(pool, better);
  return {best.tokens, best.logprob, best.alphas};
}

double sequence_logprob(const CaptionModel& model, const FeatureSet& features,
                        const EncodedCaption& caption) {
  NoGradGuard no_grad;
  const Tensor logits = forward_teacher_forced(model, features, caption);
  double total = 0.0;
  for (size_t t = 0; t < logits.rows(); ++t) {
    total += log_probs(row_of(logits, t))[caption.tokens[t + 1]];
  }
  return total;
}

}  // namespace capgen
