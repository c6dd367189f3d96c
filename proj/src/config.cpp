#include "capgen/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "capgen/error.hpp"

namespace capgen {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("bad value '" + value + "' for " + key);
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("bad value '" + value + "' for " + key + " (expected true or false)");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

using Setter = std::function<void(const std::string&, const std::string&)>;

void apply_with(const ConfigMap& entries, const std::map<std::string, Setter>& setters) {
  for (const auto& [key, value] : entries) {
    auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(key, value);
  }
}

template <typename T>
Setter number(T& field) {
  return [&field](const std::string& k, const std::string& v) { field = parse_number<T>(k, v); };
}

}  // namespace

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  size_t line_no = 0;
  while (!text.empty()) {
    const size_t nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected key=value", line_no);
    const std::string_view key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line_no);
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_config(const ConfigMap& entries, TrainConfig& cfg) {
  const std::map<std::string, Setter> setters = {
      {"variant", [&](const std::string&, const std::string& v) { cfg.variant = parse_variant(v); }},
      {"base_lr", number(cfg.base_lr)},
      {"embedding_lr_scale", number(cfg.embedding_lr_scale)},
      {"batch_size", number(cfg.batch_size)},
      {"hidden", number(cfg.hidden)},
      {"embed_dim", number(cfg.embed_dim)},
      {"att_dim", number(cfg.att_dim)},
      {"num_layers", number(cfg.num_layers)},
      {"n_max", number(cfg.n_max)},
      {"epochs", number(cfg.epochs)},
      {"patience", number(cfg.patience)},
      {"seed", number(cfg.seed)},
      {"unfreeze_policy",
       [&](const std::string&, const std::string& v) { cfg.unfreeze_policy = parse_policy(v); }},
      {"captions_per_image", number(cfg.captions_per_image)},
      {"hflip_prob", number(cfg.augment.hflip_prob)},
      {"vflip_prob", number(cfg.augment.vflip_prob)},
      {"perspective_prob", number(cfg.augment.perspective_prob)},
      {"distortion", number(cfg.augment.distortion)},
      {"keep_best",
       [&](const std::string& k, const std::string& v) { cfg.keep_best = parse_bool(k, v); }},
  };
  apply_with(entries, setters);
}

void apply_config(const ConfigMap& entries, GradcheckConfig& cfg) {
  const std::map<std::string, Setter> setters = {
      {"hidden", number(cfg.hidden)},           {"embed_dim", number(cfg.embed_dim)},
      {"feature_dim", number(cfg.feature_dim)}, {"regions", number(cfg.regions)},
      {"vocab_size", number(cfg.vocab_size)},   {"att_dim", number(cfg.att_dim)},
      {"num_layers", number(cfg.num_layers)},   {"seed", number(cfg.seed)},
      {"step", number(cfg.step)},               {"tolerance", number(cfg.tolerance)},
  };
  apply_with(entries, setters);
}

std::string echo_config(const TrainConfig& c) {
  std::ostringstream os;
  os << "variant=" << variant_name(c.variant) << '\n'
     << "base_lr=" << fmt(c.base_lr) << '\n'
     << "embedding_lr_scale=" << fmt(c.embedding_lr_scale) << '\n'
     << "batch_size=" << c.batch_size << '\n'
     << "hidden=" << c.hidden << '\n'
     << "embed_dim=" << c.embed_dim << '\n'
     << "att_dim=" << c.att_dim << '\n'
     << "num_layers=" << c.num_layers << '\n'
     << "n_max=" << c.n_max << '\n'
     << "epochs=" << c.epochs << '\n'
     << "patience=" << c.patience << '\n'
     << "seed=" << c.seed << '\n'
     << "unfreeze_policy=" << policy_name(c.unfreeze_policy) << '\n'
     << "captions_per_image=" << c.captions_per_image << '\n'
     << "hflip_prob=" << fmt(c.augment.hflip_prob) << '\n'
     << "vflip_prob=" << fmt(c.augment.vflip_prob) << '\n'
     << "perspective_prob=" << fmt(c.augment.perspective_prob) << '\n'
     << "distortion=" << fmt(c.augment.distortion) << '\n'
     << "keep_best=" << (c.keep_best ? "true" : "false") << '\n';
  return os.str();
}

std::string echo_config(const GradcheckConfig& c) {
  std::ostringstream os;
  os << "hidden=" << c.hidden << '\n'
     << "embed_dim=" << c.embed_dim << '\n'
     << "feature_dim=" << c.feature_dim << '\n'
     << "regions=" << c.regions << '\n'
     << "vocab_size=" << c.vocab_size << '\n'
     << "att_dim=" << c.att_dim << '\n'
     << "num_layers=" << c.num_layers << '\n'
     << "seed=" << c.seed << '\n'
     << "step=" << fmt(c.step) << '\n'
     << "tolerance=" << fmt(c.tolerance) << '\n';
  return os.str();
}

}  // namespace capgen
