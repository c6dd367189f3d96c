#include "capgen/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "capgen/error.hpp"
#include "capgen/metrics.hpp"
#include "capgen/rng.hpp"

namespace capgen {

const char* policy_name(UnfreezePolicy p) {
  switch (p) {
    case UnfreezePolicy::kFromStart:
      return "from_start";
    case UnfreezePolicy::kOnBreakdown:
      return "on_breakdown";
    case UnfreezePolicy::kNever:
      return "never";
  }
  return "?";
}

UnfreezePolicy parse_policy(const std::string& name) {
  if (name == "from_start") return UnfreezePolicy::kFromStart;
  if (name == "on_breakdown") return UnfreezePolicy::kOnBreakdown;
  if (name == "never") return UnfreezePolicy::kNever;
  throw ConfigError("unknown unfreeze policy '" + name +
                    "' (expected from_start, on_breakdown or never)");
}

const char* action_name(ScheduleAction a) {
  switch (a) {
    case ScheduleAction::kContinue:
      return "continue";
    case ScheduleAction::kUnfreezeEmbeddings:
      return "unfreeze_embeddings";
    case ScheduleAction::kStop:
      return "stop";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be >= 0");
  if (!(embedding_lr_scale > 0.0 && embedding_lr_scale <= 1.0)) {
    throw ConfigError("embedding_lr_scale must lie in (0, 1]");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (hidden == 0 || embed_dim == 0 || num_layers == 0) {
    throw ConfigError("hidden, embed_dim and num_layers must be positive");
  }
  if (variant == Variant::kSoftAttention && att_dim == 0) {
    throw ConfigError("att_dim must be positive for soft attention");
  }
  if (n_max == 0) throw ConfigError("n_max must be at least 1");
  for (double p : {augment.hflip_prob, augment.vflip_prob, augment.perspective_prob}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must lie in [0, 1]");
  }
  if (!(augment.distortion >= 0.0 && augment.distortion < 1.0)) {
    throw ConfigError("distortion must lie in [0, 1)");
  }
}

size_t Dataset::feature_dim() const {
  for (const auto* split : {&train, &val, &test})
    if (!split->empty()) return split->front().features.dims();
  return 0;
}

size_t Dataset::regions() const {
  for (const auto* split : {&train, &val, &test})
    if (!split->empty()) return split->front().features.regions();
  return 0;
}

namespace {

Example make_example(const std::string& id, FeatureSet features, std::optional<Image> image,
                     const std::vector<std::string>& captions, const Vocabulary& vocab,
                     size_t n_max) {
  Example ex;
  ex.id = id;
  ex.features = std::move(features);
  ex.image = std::move(image);
  for (const std::string& c : captions) {
    TokenList tokens = tokenize(c);
    ex.captions.push_back(encode(tokens, vocab, n_max + 1));
    ex.references.push_back(std::move(tokens));
  }
  return ex;
}

std::vector<Example>& split_of(Dataset& d, Split s) {
  switch (s) {
    case Split::kTrain:
      return d.train;
    case Split::kVal:
      return d.val;
    case Split::kTest:
      return d.test;
  }
  return d.train;
}

}  // namespace

Vocabulary vocabulary_for(const std::vector<SyntheticSample>& samples, size_t min_freq) {
  std::vector<TokenList> captions;
  for (const SyntheticSample& s : samples) {
    if (s.split != Split::kTrain) continue;
    for (const std::string& c : s.captions) captions.push_back(tokenize(c));
  }
  return build_vocab(captions, min_freq);
}

Dataset dataset_from_samples(const std::vector<SyntheticSample>& samples, const Vocabulary& vocab,
                             size_t grid, size_t n_max) {
  Dataset d(vocab);
  d.grid = grid;
  for (const SyntheticSample& s : samples) {
    split_of(d, s.split)
        .push_back(make_example(s.id, toy_patch_encode(s.image, grid, s.id), s.image, s.captions,
                                vocab, n_max));
  }
  return d;
}

Dataset load_dataset(const std::filesystem::path& dir, size_t n_max) {
  namespace fs = std::filesystem;
  for (const char* name : {"manifest.tsv", "vocab.txt", "features.icfe"}) {
    if (!fs::exists(dir / name)) throw IoError("dataset file missing: " + (dir / name).string());
  }
  const std::vector<ManifestEntry> manifest = read_manifest(dir / "manifest.tsv");
  Dataset d(Vocabulary::load(dir / "vocab.txt"));
  std::map<std::string, FeatureSet> features;
  for (FeatureSet& f : read_features(dir / "features.icfe")) {
    std::string id = f.image_id;
    features.emplace(std::move(id), std::move(f));
  }
  const bool with_images = fs::is_directory(dir / "images");
  for (const ManifestEntry& e : manifest) {
    auto it = features.find(e.id);
    if (it == features.end()) throw FormatError("no features for image '" + e.id + "'");
    std::optional<Image> image;
    if (with_images) image = read_ppm(dir / "images" / (e.id + ".ppm"));
    split_of(d, e.split)
        .push_back(make_example(e.id, it->second, std::move(image), e.captions, d.vocab, n_max));
  }
  if (with_images) {
    const auto g = static_cast<size_t>(std::lround(std::sqrt(static_cast<double>(d.regions()))));
    if (g * g != d.regions()) {
      throw FormatError(std::to_string(d.regions()) + " regions is not a square grid");
    }
    d.grid = g;
  }
  return d;
}

ModelConfig model_config(const TrainConfig& cfg, const Dataset& data) {
  ModelConfig m;
  m.variant = cfg.variant;
  m.vocab_size = data.vocab.size();
  m.embed_dim = cfg.embed_dim;
  m.hidden = cfg.hidden;
  m.feature_dim = data.feature_dim();
  m.att_dim = cfg.att_dim;
  m.num_layers = cfg.num_layers;
  m.seed = cfg.seed;
  return m;
}

namespace {

size_t caption_limit(const Example& ex, size_t per_image) {
  return per_image == 0 ? ex.captions.size() : std::min(per_image, ex.captions.size());
}

double token_count(std::span<const double> mask) {
  double n = 0.0;
  for (double m : mask) n += m;
  return n;
}

}  // namespace

double mean_loss(const CaptionModel& model, const std::vector<Example>& split,
                 size_t captions_per_image) {
  if (split.empty()) throw DomainError("loss over an empty split");
  NoGradGuard no_grad;
  double total = 0.0, tokens = 0.0;
  for (const Example& ex : split) {
    const size_t n = caption_limit(ex, captions_per_image);
    if (n == 0) continue;
    std::vector<size_t> idx;
    for (size_t c = 0; c < n; ++c)
      for (size_t i = 0; i < ex.features.regions(); ++i) idx.push_back(i);
    const Tensor ann = gather_rows(ex.features.annotations, idx);
    BatchForward bf = forward_batch(model, ann, ex.features.regions(),
                                    std::span(ex.captions.data(), n));
    const double w = token_count(bf.mask);
    total += masked_cross_entropy(bf.logits, bf.targets, bf.mask).item() * w;
    tokens += w;
  }
  if (tokens == 0.0) throw DomainError("split has no caption tokens");
  return total / tokens;
}

double split_bleu4(const CaptionModel& model, const std::vector<Example>& split, size_t n_max) {
  if (split.empty()) throw DomainError("BLEU over an empty split");
  EvalCorpus corpus;
  for (const Example& ex : split) {
    DecodeResult r = greedy_decode(model, ex.features, n_max);
    EvalItem item;
    // Tokens are compared by index, which is equivalent to comparing words.
    for (size_t t : r.tokens) item.candidate.push_back(std::to_string(t));
    for (const EncodedCaption& c : ex.captions) {
      TokenList ref;
      for (size_t i = 1; i + 1 < c.tokens.size(); ++i) ref.push_back(std::to_string(c.tokens[i]));
      item.references.push_back(std::move(ref));
    }
    corpus.push_back(std::move(item));
  }
  return bleu(corpus, 4);
}

ScheduleAction validate_and_schedule(const std::vector<EpochReport>& history,
                                     const TrainConfig& cfg) {
  if (history.empty()) throw ContractError("schedule needs at least one epoch report");
  const size_t n = history.size();
  if (cfg.unfreeze_policy == UnfreezePolicy::kOnBreakdown && n >= 2) {
    const bool already = std::any_of(history.begin(), history.end() - 1, [](const EpochReport& r) {
      return r.action == ScheduleAction::kUnfreezeEmbeddings;
    });
    const EpochReport& prev = history[n - 2];
    const EpochReport& last = history[n - 1];
    if (!already && last.val_loss > prev.val_loss && last.val_bleu4 >= prev.val_bleu4) {
      return ScheduleAction::kUnfreezeEmbeddings;
    }
  }
  if (cfg.patience > 0) {
    size_t best = 0;
    for (size_t i = 1; i < n; ++i)
      if (history[i].val_bleu4 > history[best].val_bleu4) best = i;
    if (n - 1 - best >= cfg.patience) return ScheduleAction::kStop;
  }
  return ScheduleAction::kContinue;
}

Trainer::Trainer(CaptionModel& model, const Dataset& data, const TrainConfig& cfg)
    : model_(model), data_(data), cfg_(cfg), optimizer_(model.parameters()) {
  cfg_.validate();
  if (data.train.empty()) throw DomainError("training split is empty");
  if (model.config().vocab_size != data.vocab.size() ||
      model.config().feature_dim != data.feature_dim()) {
    throw DimensionError("model does not match the dataset's vocabulary or feature size");
  }
  Parameter& e = model_.embeddings();
  e.lr_scale = cfg_.embedding_lr_scale;
  e.trainable = cfg_.unfreeze_policy == UnfreezePolicy::kFromStart;
}

void Trainer::unfreeze_embeddings() { model_.embeddings().trainable = true; }

Tensor Trainer::features_for(const Example& ex, size_t caption_index) const {
  if (!ex.image || !cfg_.augment.enabled()) return ex.features.annotations;
  Rng rng(derive_seed(cfg_.seed, epoch_, ex.id + "#" + std::to_string(caption_index)));
  return toy_patch_encode(augment_pipeline(*ex.image, cfg_.augment, rng), data_.grid, ex.id)
      .annotations;
}

Trainer::StepResult Trainer::step_impl(std::span<const std::pair<size_t, size_t>> pairs) {
  if (pairs.empty()) throw ContractError("empty training batch");
  std::vector<Tensor> blocks;
  std::vector<EncodedCaption> captions;
  for (const auto& [i, c] : pairs) {
    const Example& ex = data_.train.at(i);
    blocks.push_back(features_for(ex, c));
    captions.push_back(ex.captions.at(c));
  }
  const Tensor annotations = concat(blocks, 0);
  std::vector<Parameter>& params = model_.parameters();
  zero_grads(params);
  BatchForward bf = forward_batch(model_, annotations, data_.regions(), captions);
  const Tensor loss = masked_cross_entropy(bf.logits, bf.targets, bf.mask);
  loss.backward();
  optimizer_.step(params, cfg_.base_lr);
  return {loss.item(), token_count(bf.mask)};
}

double Trainer::train_step(std::span<const std::pair<size_t, size_t>> pairs) {
  return step_impl(pairs).loss;
}

EpochReport Trainer::train_epoch() {
  ++epoch_;
  std::vector<std::pair<size_t, size_t>> pairs;
  for (size_t i = 0; i < data_.train.size(); ++i) {
    for (size_t c = 0; c < caption_limit(data_.train[i], cfg_.captions_per_image); ++c) {
      pairs.emplace_back(i, c);
    }
  }
  if (pairs.empty()) throw DomainError("training split has no captions");
  Rng rng(derive_seed(cfg_.seed, epoch_, "shuffle"));
  for (size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[rng.below(i)]);

  double total = 0.0, tokens = 0.0;
  for (size_t start = 0; start < pairs.size(); start += cfg_.batch_size) {
    const size_t end = std::min(pairs.size(), start + cfg_.batch_size);
    const StepResult r = step_impl(std::span(pairs).subspan(start, end - start));
    total += r.loss * r.tokens;
    tokens += r.tokens;
  }

  EpochReport report;
  report.epoch = epoch_;
  report.train_loss = total / tokens;
  if (!data_.val.empty()) {
    report.val_loss = mean_loss(model_, data_.val);
    report.val_bleu4 = split_bleu4(model_, data_.val, cfg_.n_max);
  }
  report.decoder_lr = cfg_.base_lr;
  report.embedding_lr = embeddings_frozen() ? 0.0 : cfg_.base_lr * cfg_.embedding_lr_scale;
  return report;
}

std::vector<EpochReport> Trainer::fit(std::ostream* log) {
  for (size_t e = 0; e < cfg_.epochs; ++e) {
    history_.push_back(train_epoch());
    EpochReport& r = history_.back();
    if (!data_.val.empty() && r.val_bleu4 > best_bleu_) {
      best_bleu_ = r.val_bleu4;
      best_ = model_.snapshot();
    }
    r.action = validate_and_schedule(history_, cfg_);
    if (log) *log << format_report(r) << '\n' << std::flush;
    if (r.action == ScheduleAction::kUnfreezeEmbeddings) unfreeze_embeddings();
    if (r.action == ScheduleAction::kStop) break;
  }
  if (cfg_.keep_best && best_) model_.restore(*best_);
  return history_;
}

std::string format_report(const EpochReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%s", r.epoch, r.train_loss, r.val_loss,
                r.val_bleu4, action_name(r.action));
  return buf;
}

}  // namespace capgen
