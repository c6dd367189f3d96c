#ifndef CAPGEN_TRAIN_HPP_
#define CAPGEN_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "capgen/augment.hpp"
#include "capgen/captioner.hpp"
#include "capgen/features.hpp"
#include "capgen/optimizer.hpp"
#include "capgen/synthetic.hpp"
#include "capgen/text.hpp"

namespace capgen {

enum class UnfreezePolicy { kFromStart, kOnBreakdown, kNever };

const char* policy_name(UnfreezePolicy p);
UnfreezePolicy parse_policy(const std::string& name);

struct TrainConfig {
  Variant variant = Variant::kSoftAttention;
  double base_lr = 1e-3;
  double embedding_lr_scale = 0.1;
  size_t batch_size = 32;
  size_t hidden = 512;
  size_t embed_dim = 300;
  size_t att_dim = 256;
  size_t num_layers = 3;
  size_t n_max = 16;
  size_t epochs = 20;
  size_t patience = 5;  // 0 disables early stopping
  uint64_t seed = 1;
  UnfreezePolicy unfreeze_policy = UnfreezePolicy::kOnBreakdown;
  size_t captions_per_image = 0;  // 0 uses every caption
  AugmentConfig augment;
  bool keep_best = true;  // restore the best-BLEU parameters after fit()

  /// Throws ConfigError on values that break the invariants.
  void validate() const;
};

enum class ScheduleAction { kContinue, kUnfreezeEmbeddings, kStop };

const char* action_name(ScheduleAction a);

struct EpochReport {
  size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_bleu4 = 0.0;
  double decoder_lr = 0.0;
  double embedding_lr = 0.0;  // 0 while frozen
  ScheduleAction action = ScheduleAction::kContinue;

  bool operator==(const EpochReport&) const = default;
};

/// One image with its captions. Synthetic data keeps the raster so features
/// can be recomputed from an augmented copy; real-feature data does not.
struct Example {
  std::string id;
  FeatureSet features;
  std::optional<Image> image;
  std::vector<EncodedCaption> captions;
  std::vector<TokenList> references;
};

struct Dataset {
  explicit Dataset(Vocabulary v) : vocab(std::move(v)) {}

  Vocabulary vocab;
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
  size_t grid = 0;  // toy encoder grid for examples that carry an image

  size_t feature_dim() const;
  size_t regions() const;
};

/// Builds examples straight from generated samples, encoding captions with
/// at most n_max prediction steps.
Dataset dataset_from_samples(const std::vector<SyntheticSample>& samples, const Vocabulary& vocab,
                             size_t grid, size_t n_max);

/// Reads a directory written by the synth command (manifest.tsv, vocab.txt,
/// features.icfe, optional images/). Missing files raise IoError.
Dataset load_dataset(const std::filesystem::path& dir, size_t n_max);

/// Vocabulary over the training split's captions.
Vocabulary vocabulary_for(const std::vector<SyntheticSample>& samples, size_t min_freq);

ModelConfig model_config(const TrainConfig& cfg, const Dataset& data);

/// Mean per-token NLL under teacher forcing, no augmentation.
double mean_loss(const CaptionModel& model, const std::vector<Example>& split,
                 size_t captions_per_image = 0);

/// Greedy-decoded BLEU-4 against every reference of each example.
double split_bleu4(const CaptionModel& model, const std::vector<Example>& split, size_t n_max);

/// breakdown: val_loss rose against the previous epoch while val_bleu4 did
/// not fall. On-breakdown policy unfreezes at the first breakdown; stop fires
/// after `patience` epochs without a BLEU-4 improvement. Unfreezing takes
/// precedence when both apply.
ScheduleAction validate_and_schedule(const std::vector<EpochReport>& history,
                                     const TrainConfig& cfg);

class Trainer {
 public:
  Trainer(CaptionModel& model, const Dataset& data, const TrainConfig& cfg);

  /// One pass over the shuffled training pairs plus validation. The action
  /// field is left as kContinue.
  EpochReport train_epoch();

  /// Runs up to cfg.epochs epochs, applying the schedule after each one and
  /// writing a log line per epoch to `log` when given.
  std::vector<EpochReport> fit(std::ostream* log = nullptr);

  /// Loss of one batch made of the given training pairs, before the update.
  /// Exposed for step-level tests.
  double train_step(std::span<const std::pair<size_t, size_t>> pairs);

  bool embeddings_frozen() const { return !model_.embeddings().trainable; }
  void unfreeze_embeddings();
  size_t epoch() const { return epoch_; }
  Adam& optimizer() { return optimizer_; }
  const std::vector<EpochReport>& history() const { return history_; }

 private:
  struct StepResult {
    double loss;
    double tokens;
  };
  StepResult step_impl(std::span<const std::pair<size_t, size_t>> pairs);
  Tensor features_for(const Example& ex, size_t caption_index) const;

  CaptionModel& model_;
  const Dataset& data_;
  TrainConfig cfg_;
  Adam optimizer_;
  size_t epoch_ = 0;
  std::vector<EpochReport> history_;
  std::optional<std::vector<std::vector<double>>> best_;
  double best_bleu_ = -1.0;
};

/// "epoch train_loss val_loss val_bleu4 action", tab separated.
std::string format_report(const EpochReport& r);

}  // namespace capgen

#endif  // CAPGEN_TRAIN_HPP_
