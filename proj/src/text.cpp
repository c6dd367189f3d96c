#include "capgen/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "capgen/error.hpp"
#include "capgen/rng.hpp"

namespace capgen {

const std::vector<std::string>& Vocabulary::reserved_tokens() {
  static const std::vector<std::string> kTokens = {"<PAD>", "<START>", "<END>", "<UNK>"};
  return kTokens;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : index_to_token_(std::move(tokens)) {
  const auto& reserved = reserved_tokens();
  if (index_to_token_.size() < kReservedCount ||
      !std::equal(reserved.begin(), reserved.end(), index_to_token_.begin())) {
    throw FormatError("vocabulary must start with <PAD> <START> <END> <UNK>");
  }
  if (index_to_token_.size() < kReservedCount + 1) {
    throw DomainError("vocabulary needs at least one non-reserved token");
  }
  for (size_t i = 0; i < index_to_token_.size(); ++i) {
    if (!token_to_index_.emplace(index_to_token_[i], i).second) {
      throw FormatError("duplicate vocabulary token '" + index_to_token_[i] + "'");
    }
  }
}

size_t Vocabulary::index(std::string_view token) const {
  auto it = token_to_index_.find(std::string(token));
  return it == token_to_index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_index_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(size_t index) const {
  if (index >= index_to_token_.size()) {
    throw ContractError("token index " + std::to_string(index) + " out of range for vocabulary of " +
                        std::to_string(index_to_token_.size()));
  }
  return index_to_token_[index];
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary to " + path.string());
  for (const auto& t : index_to_token_) out << t << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

TokenList tokenize(std::string_view sentence) {
  TokenList out;
  std::string current;
  for (unsigned char c : sentence) {
    if (std::isspace(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else if (!std::ispunct(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

Vocabulary build_vocab(const std::vector<TokenList>& captions, size_t min_freq) {
  std::map<std::string, size_t> counts;
  for (const auto& caption : captions)
    for (const auto& token : caption) ++counts[token];
  if (counts.empty()) throw DomainError("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, size_t>> kept;
  const auto& reserved = Vocabulary::reserved_tokens();
  for (const auto& [token, n] : counts) {
    if (n >= min_freq && std::find(reserved.begin(), reserved.end(), token) == reserved.end()) {
      kept.emplace_back(token, n);
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.empty()) {
    throw DomainError("no token reaches min_freq=" + std::to_string(min_freq));
  }
  std::vector<std::string> tokens = reserved;
  for (auto& [token, n] : kept) tokens.push_back(token);
  return Vocabulary(std::move(tokens));
}

EncodedCaption encode(const TokenList& tokens, const Vocabulary& vocab, size_t max_length) {
  if (max_length < 2) throw DomainError("max_length must leave room for <START> and <END>");
  EncodedCaption out;
  out.tokens.push_back(Vocabulary::kStart);
  const size_t words = std::min(tokens.size(), max_length - 2);
  for (size_t i = 0; i < words; ++i) out.tokens.push_back(vocab.index(tokens[i]));
  out.tokens.push_back(Vocabulary::kEnd);
  return out;
}

TokenList decode(std::span<const size_t> tokens, const Vocabulary& vocab) {
  TokenList out;
  for (size_t t : tokens) {
    if (t == Vocabulary::kStart || t == Vocabulary::kEnd || t == Vocabulary::kPad) continue;
    out.push_back(vocab.token(t));
  }
  return out;
}

std::string join(const TokenList& tokens, std::string_view sep) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_size(std::string_view s, size_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

Parameter load_embedding_file(const std::filesystem::path& path, const Vocabulary& vocab,
                              size_t dim, uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embeddings " + path.string());

  const size_t k = vocab.size();
  std::vector<double> table(k * dim, 0.0);
  std::vector<bool> found(k, false);
  std::vector<double> mean(dim, 0.0);
  size_t loaded = 0;

  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    size_t count = 0, header_dim = 0;
    if (line_no == 1 && fields.size() == 2 && parse_size(fields[0], count) &&
        parse_size(fields[1], header_dim)) {
      if (header_dim != dim) {
        throw ConfigError("embedding file declares dim " + std::to_string(header_dim) +
                          " but " + std::to_string(dim) + " was configured");
      }
      continue;
    }
    if (fields.size() != dim + 1) {
      throw ParseError("expected token plus " + std::to_string(dim) + " values, found " +
                           std::to_string(fields.size() - 1),
                       line_no);
    }
    std::vector<double> values(dim);
    for (size_t j = 0; j < dim; ++j) {
      if (!parse_double(fields[j + 1], values[j])) {
        throw ParseError("bad number '" + std::string(fields[j + 1]) + "'", line_no);
      }
      mean[j] += values[j];
    }
    ++loaded;
    const std::string token(fields[0]);
    if (vocab.contains(token)) {
      const size_t row = vocab.index(token);
      std::copy(values.begin(), values.end(), table.begin() + static_cast<long>(row * dim));
      found[row] = true;
    }
  }
  if (loaded > 0) {
    for (double& m : mean) m /= static_cast<double>(loaded);
  }

  Rng rng(seed);
  for (size_t row = 0; row < k; ++row) {
    if (found[row]) continue;
    for (size_t j = 0; j < dim; ++j) table[row * dim + j] = mean[j] + rng.uniform(-0.01, 0.01);
  }
  return Parameter{Tensor::from({k, dim}, std::move(table), true), "embeddings", 0.1, true};
}

std::vector<Tensor> embed(const Tensor& table, std::span<const size_t> tokens) {
  std::vector<Tensor> out;
  out.reserve(tokens.size());
  for (size_t t : tokens) {
    const size_t idx[] = {t};
    out.push_back(reshape(gather_rows(table, idx), {table.cols()}));
  }
  return out;
}

}  // namespace capgen
