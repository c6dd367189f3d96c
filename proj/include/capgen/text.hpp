#ifndef CAPGEN_TEXT_HPP_
#define CAPGEN_TEXT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "capgen/tensor.hpp"

namespace capgen {

using TokenList = std::vector<std::string>;

/// Token <-> index map. Indices 0..3 are always <PAD>, <START>, <END>, <UNK>.
class Vocabulary {
 public:
  static constexpr size_t kPad = 0;
  static constexpr size_t kStart = 1;
  static constexpr size_t kEnd = 2;
  static constexpr size_t kUnk = 3;
  static constexpr size_t kReservedCount = 4;
  static const std::vector<std::string>& reserved_tokens();

  /// Builds from an explicit token list that must begin with the reserved tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  size_t size() const { return index_to_token_.size(); }
  /// Index of `token`, or kUnk when absent.
  size_t index(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(size_t index) const;
  const std::vector<std::string>& tokens() const { return index_to_token_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const {
    return index_to_token_ == other.index_to_token_;
  }

 private:
  std::vector<std::string> index_to_token_;
  std::unordered_map<std::string, size_t> token_to_index_;
};

/// Index sequence framed by <START> ... <END>.
struct EncodedCaption {
  std::vector<size_t> tokens;
  size_t length() const { return tokens.size(); }
};

/// Lowercases, deletes ASCII punctuation, splits on whitespace.
TokenList tokenize(std::string_view sentence);

/// Keeps tokens seen at least `min_freq` times, ordered by descending
/// frequency then lexicographically.
Vocabulary build_vocab(const std::vector<TokenList>& captions, size_t min_freq = 5);

/// Frames `tokens` with <START>/<END>; words are truncated so the framed
/// length never exceeds `max_length` (which must be at least 2).
EncodedCaption encode(const TokenList& tokens, const Vocabulary& vocab, size_t max_length);

/// Maps indices back to tokens, dropping <START>, <END> and <PAD>.
TokenList decode(std::span<const size_t> tokens, const Vocabulary& vocab);

std::string join(const TokenList& tokens, std::string_view sep = " ");

/// Reads whitespace-separated "token v1 .. v_dim" lines (an optional leading
/// "count dim" header is honoured) into a [K x dim] embedding table for
/// `vocab`. Tokens missing from the file get the mean of all loaded vectors
/// plus uniform noise in ±0.01. The result is a Parameter named "embeddings"
/// with lr_scale 0.1.
Parameter load_embedding_file(const std::filesystem::path& path, const Vocabulary& vocab,
                              size_t dim, uint64_t seed);

/// One [m] row of E per token; gradients reach only the selected rows.
std::vector<Tensor> embed(const Tensor& table, std::span<const size_t> tokens);

}  // namespace capgen

#endif  // CAPGEN_TEXT_HPP_
