#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "capgen/augment.hpp"
#include "capgen/captioner.hpp"
#include "capgen/checkpoint.hpp"
#include "capgen/config.hpp"
#include "capgen/error.hpp"
#include "capgen/features.hpp"
#include "capgen/gradcheck.hpp"
#include "capgen/image.hpp"
#include "capgen/metrics.hpp"
#include "capgen/rng.hpp"
#include "capgen/synthetic.hpp"
#include "capgen/text.hpp"
#include "capgen/train.hpp"

namespace capgen::cli {

namespace fs = std::filesystem;

namespace {

// Rejected flag combinations that CLI11 cannot express.
class UsageError : public Error {
 public:
  using Error::Error;
};

void echo(std::ostream& err, const std::string& command, const std::string& body) {
  err << "# " << command << " effective config\n" << body << std::flush;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  size_t n = 100;
  uint64_t seed = 1;
  std::string out_dir;
  size_t image_size = 32;
  size_t grid = 4;
  size_t min_freq = 1;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
  std::ostringstream cfg;
  cfg << "n=" << a.n << "\nseed=" << a.seed << "\nout_dir=" << a.out_dir
      << "\nimage_size=" << a.image_size << "\ngrid=" << a.grid << "\nmin_freq=" << a.min_freq
      << '\n';
  echo(err, "synth", cfg.str());

  const std::vector<SyntheticSample> samples =
      generate_synthetic_dataset(a.n, a.seed, a.image_size, a.grid);
  const fs::path dir(a.out_dir);
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());

  std::vector<ManifestEntry> manifest;
  std::vector<FeatureSet> features;
  for (const SyntheticSample& s : samples) {
    write_ppm(s.image, dir / "images" / (s.id + ".ppm"));
    manifest.push_back({s.id, s.split, s.captions});
    features.push_back(toy_patch_encode(s.image, a.grid, s.id));
  }
  write_manifest(manifest, dir / "manifest.tsv");
  write_features(features, dir / "features.icfe");
  const Vocabulary vocab = vocabulary_for(samples, a.min_freq);
  vocab.save(dir / "vocab.txt");

  size_t counts[3] = {0, 0, 0};
  for (const SyntheticSample& s : samples) ++counts[static_cast<int>(s.split)];
  out << "wrote " << samples.size() << " images (train " << counts[0] << ", val " << counts[1]
      << ", test " << counts[2] << "), vocabulary " << vocab.size() << " to " << dir.string()
      << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::optional<std::string> variant;
  std::optional<std::string> config;
  std::string out_checkpoint;
  std::optional<std::string> embeddings;
  std::optional<std::string> log;
  std::optional<size_t> epochs;
  std::optional<uint64_t> seed;
  std::vector<std::string> overrides;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig cfg;
  if (a.config) apply_config(read_config_file(*a.config), cfg);
  ConfigMap flags;
  for (const std::string& kv : a.overrides) {
    ConfigMap one = parse_config_text(kv);
    if (one.size() != 1) throw ConfigError("--set expects key=value, got '" + kv + "'");
    flags.push_back(one.front());
  }
  if (a.variant) flags.emplace_back("variant", *a.variant);
  if (a.epochs) flags.emplace_back("epochs", std::to_string(*a.epochs));
  if (a.seed) flags.emplace_back("seed", std::to_string(*a.seed));
  apply_config(flags, cfg);
  cfg.validate();

  const std::string log_path = a.log.value_or(a.out_checkpoint + ".log");
  std::ostringstream echoed;
  echoed << echo_config(cfg) << "data=" << a.data << "\nout_checkpoint=" << a.out_checkpoint
         << "\nembeddings=" << a.embeddings.value_or("") << "\nlog=" << log_path << '\n';
  echo(err, "train", echoed.str());

  if (!fs::is_directory(a.data)) throw IoError("data directory not found: " + a.data);
  const Dataset data = load_dataset(a.data, cfg.n_max);
  CaptionModel model(model_config(cfg, data));
  if (a.embeddings) {
    const Parameter table = load_embedding_file(*a.embeddings, data.vocab, cfg.embed_dim, cfg.seed);
    model.set_embeddings(table.tensor);
  }
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write log " + log_path);
  Trainer trainer(model, data, cfg);
  const std::vector<EpochReport> history = trainer.fit(&log);
  save_checkpoint(a.out_checkpoint, model, data.vocab, &trainer.optimizer(), echo_config(cfg));

  const EpochReport& last = history.back();
  out << "epochs " << history.size() << " final train_loss " << fixed(last.train_loss, 6)
      << " val_loss " << fixed(last.val_loss, 6) << " val_bleu4 " << fixed(last.val_bleu4, 4)
      << '\n';
  if (!data.test.empty()) {
    out << "test_bleu4 " << fixed(split_bleu4(model, data.test, cfg.n_max), 4) << '\n';
  }
  return kExitOk;
}

// ---------------------------------------------------------------- caption

struct CaptionArgs {
  std::string checkpoint;
  std::string features;
  std::string decode = "greedy";
  size_t beam_width = 3;
  size_t n_max = 16;
  std::optional<std::string> dump_attention;
  std::optional<std::string> out;
};

int cmd_caption(const CaptionArgs& a, std::ostream& out, std::ostream& err) {
  std::ostringstream cfg;
  cfg << "checkpoint=" << a.checkpoint << "\nfeatures=" << a.features << "\ndecode=" << a.decode
      << "\nbeam_width=" << a.beam_width << "\nn_max=" << a.n_max
      << "\ndump_attention=" << a.dump_attention.value_or("") << "\nout=" << a.out.value_or("-")
      << '\n';
  echo(err, "caption", cfg.str());

  if (a.decode != "greedy" && a.decode != "beam") {
    throw UsageError("--decode must be greedy or beam");
  }
  const Checkpoint ckpt = read_checkpoint(a.checkpoint);
  if (a.dump_attention && ckpt.model.variant != Variant::kSoftAttention) {
    throw UsageError("--dump-attention needs a soft_attention checkpoint; this one is " +
                     std::string(variant_name(ckpt.model.variant)));
  }
  const CaptionModel model = model_from_checkpoint(ckpt);
  const Vocabulary vocab(ckpt.vocabulary);
  const std::vector<FeatureSet> sets = read_features(a.features);

  std::ofstream file_out;
  std::ostream* dst = &out;
  if (a.out) {
    file_out.open(*a.out, std::ios::trunc);
    if (!file_out) throw IoError("cannot write " + *a.out);
    dst = &file_out;
  }
  std::ofstream alpha_out;
  if (a.dump_attention) {
    alpha_out.open(*a.dump_attention, std::ios::trunc);
    if (!alpha_out) throw IoError("cannot write " + *a.dump_attention);
    alpha_out.precision(17);
  }
  for (const FeatureSet& f : sets) {
    if (f.dims() != ckpt.model.feature_dim) {
      throw FormatError("features of '" + f.image_id + "' have " + std::to_string(f.dims()) +
                        " dims, checkpoint expects " + std::to_string(ckpt.model.feature_dim));
    }
    const DecodeResult r = a.decode == "greedy" ? greedy_decode(model, f, a.n_max)
                                                : beam_decode(model, f, a.beam_width, a.n_max);
    *dst << f.image_id << '\t' << join(decode(r.tokens, vocab)) << '\t' << fixed(r.logprob, 6)
         << '\n';
    if (a.dump_attention) {
      for (size_t t = 0; t < r.alphas.size(); ++t) {
        alpha_out << f.image_id << '\t' << t;
        for (double v : r.alphas[t]) alpha_out << '\t' << v;
        alpha_out << '\n';
      }
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string candidates;
  std::string references;
  std::string metrics = "bleu1,bleu4,cider,meteor_lite";
};

// Caption records (id TAB text TAB logprob) or corpus C lines.
std::map<std::string, std::string> read_candidates(const fs::path& path,
                                                   std::vector<std::string>& order) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open candidates " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    if (fields.size() != 3) throw ParseError("expected three tab-separated fields", line_no);
    std::string text;
    if (fields[1] == "C") {
      text = fields[2];
    } else if (fields[1] == "R") {
      continue;
    } else {
      text = fields[1];
    }
    if (out.count(fields[0])) throw ParseError("duplicate candidate for " + fields[0], line_no);
    out[fields[0]] = text;
    order.push_back(fields[0]);
  }
  return out;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  std::ostringstream cfg;
  cfg << "candidates=" << a.candidates << "\nreferences=" << a.references
      << "\nmetrics=" << a.metrics << '\n';
  echo(err, "eval", cfg.str());

  std::vector<std::string> names;
  std::stringstream ss(a.metrics);
  for (std::string m; std::getline(ss, m, ',');) {
    if (!is_metric_name(m)) {
      throw UsageError("unknown metric '" + m +
                       "' (expected bleu1..bleu4, cider, meteor_lite)");
    }
    names.push_back(m);
  }
  if (names.empty()) throw UsageError("--metrics is empty");

  std::vector<std::string> order;
  const auto candidates = read_candidates(a.candidates, order);
  const CorpusFile refs = read_corpus_file(a.references);
  EvalCorpus corpus;
  for (const std::string& id : order) {
    auto it = refs.references.find(id);
    if (it == refs.references.end()) throw DomainError("no references for id '" + id + "'");
    EvalItem item;
    item.candidate = tokenize(candidates.at(id));
    for (const std::string& r : it->second) item.references.push_back(tokenize(r));
    corpus.push_back(std::move(item));
  }
  for (const std::string& m : names) out << m << '\t' << fixed(evaluate_metric(m, corpus), 4) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- augment

struct AugmentArgs {
  std::string image;
  uint64_t seed = 1;
  double distortion = 0.3;
  std::string out;
};

int cmd_augment(const AugmentArgs& a, std::ostream& out, std::ostream& err) {
  std::ostringstream cfg;
  cfg << "image=" << a.image << "\nseed=" << a.seed << "\ndistortion=" << a.distortion
      << "\nout=" << a.out << '\n';
  echo(err, "augment", cfg.str());
  if (!(a.distortion >= 0.0 && a.distortion < 1.0)) throw DomainError("distortion must lie in [0, 1)");

  const Image src = read_ppm(a.image);
  constexpr size_t kCols = 4, kRows = 2;
  Image sheet(src.height * kRows, src.width * kCols, src.channels);
  for (size_t panel = 0; panel < kRows * kCols; ++panel) {
    Image tile = src;
    if (panel > 0) {
      Rng rng(derive_seed(a.seed, panel, "panel"));
      tile = random_perspective(src, a.distortion, rng);
    }
    const size_t r0 = (panel / kCols) * src.height, c0 = (panel % kCols) * src.width;
    for (size_t r = 0; r < src.height; ++r)
      for (size_t c = 0; c < src.width; ++c)
        for (size_t ch = 0; ch < src.channels; ++ch)
          sheet.at(r0 + r, c0 + c, ch) = tile.at(r, c, ch);
  }
  write_ppm(sheet, a.out);
  out << "wrote " << kRows * kCols << " panels to " << a.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(const std::optional<std::string>& config, const Hooks& hooks, std::ostream& out,
                  std::ostream& err) {
  GradcheckConfig cfg;
  if (config) apply_config(read_config_file(*config), cfg);
  echo(err, "gradcheck", echo_config(cfg));
  const GradcheckReport report = run_gradcheck(cfg, hooks.gradient);
  for (const GroupResult& g : report.groups) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", g.max_rel_error);
    out << g.variant << '\t' << g.group << '\t' << buf << '\t'
        << (g.max_rel_error < cfg.tolerance ? "ok" : "FAIL") << '\n';
  }
  out << (report.passed ? "PASS" : "FAIL") << " in " << fixed(report.seconds, 2) << " s\n";
  return report.passed ? kExitOk : kExitFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
        const Hooks& hooks) {
  CLI::App app{"Caption generation toolkit"};
  app.name("capgen");
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* s = app.add_subcommand("synth", "Generate a synthetic shapes dataset");
  s->add_option("--n", synth.n, "Number of images")->capture_default_str();
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_option("--out-dir", synth.out_dir, "Output directory")->required();
  s->add_option("--image-size", synth.image_size, "Image side in pixels")->capture_default_str();
  s->add_option("--grid", synth.grid, "Cells per side")->capture_default_str();
  s->add_option("--min-freq", synth.min_freq, "Vocabulary frequency cut-off")->capture_default_str();

  TrainArgs train;
  CLI::App* t = app.add_subcommand("train", "Train a captioning model");
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--variant", train.variant, "encoder_decoder or soft_attention");
  t->add_option("--config", train.config, "key=value config file");
  t->add_option("--out-checkpoint", train.out_checkpoint, "Checkpoint path")->required();
  t->add_option("--embeddings", train.embeddings, "Pretrained embedding text file");
  t->add_option("--log", train.log, "Epoch log path (default: checkpoint path + .log)");
  t->add_option("--epochs", train.epochs, "Maximum epochs");
  t->add_option("--seed", train.seed, "Random seed");
  t->add_option("--set", train.overrides, "Override one config key (key=value)");

  CaptionArgs caption;
  CLI::App* c = app.add_subcommand("caption", "Caption images from a feature file");
  c->add_option("--checkpoint", caption.checkpoint, "Checkpoint path")->required();
  c->add_option("--features", caption.features, "ICFE feature file")->required();
  c->add_option("--decode", caption.decode, "greedy or beam")->capture_default_str();
  c->add_option("--beam-width", caption.beam_width, "Beam width")->capture_default_str();
  c->add_option("--n-max", caption.n_max, "Maximum caption length")->capture_default_str();
  c->add_option("--dump-attention", caption.dump_attention, "Write per-step weights here");
  c->add_option("--out", caption.out, "Write captions here instead of stdout");

  EvalArgs eval;
  CLI::App* e = app.add_subcommand("eval", "Score candidate captions");
  e->add_option("--candidates", eval.candidates, "Candidate captions")->required();
  e->add_option("--references", eval.references, "Reference corpus")->required();
  e->add_option("--metrics", eval.metrics, "Comma-separated metric names")->capture_default_str();

  AugmentArgs augment;
  CLI::App* g = app.add_subcommand("augment", "Render an augmentation preview sheet");
  g->add_option("--image", augment.image, "Input PPM")->required();
  g->add_option("--seed", augment.seed, "Random seed")->capture_default_str();
  g->add_option("--distortion", augment.distortion, "Corner displacement fraction")
      ->capture_default_str();
  g->add_option("--out", augment.out, "Output PPM")->required();

  std::optional<std::string> gradcheck_config;
  CLI::App* k = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  k->add_option("--config", gradcheck_config, "key=value config file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out, err);
    if (t->parsed()) return cmd_train(train, out, err);
    if (c->parsed()) return cmd_caption(caption, out, err);
    if (e->parsed()) return cmd_eval(eval, out, err);
    if (g->parsed()) return cmd_augment(augment, out, err);
    if (k->parsed()) return cmd_gradcheck(gradcheck_config, hooks, out, err);
  } catch (const FormatError& ex) {
    err << "format error: " << ex.what() << '\n';
    return kExitData;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace capgen::cli
