#ifndef CAPGEN_METRICS_HPP_
#define CAPGEN_METRICS_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "capgen/text.hpp"

namespace capgen {

struct EvalItem {
  TokenList candidate;
  std::vector<TokenList> references;
};

using EvalCorpus = std::vector<EvalItem>;

/// Corpus BLEU-N: clipped n-gram counts are summed over the corpus before
/// the geometric mean, and the brevity penalty compares total candidate
/// length against the sum of each item's closest reference length (the
/// shorter one on ties).
double bleu(const EvalCorpus& corpus, size_t max_n);

/// Mean over items of 10·(1/4)·Σₙ mean_r cos(tfidf(cand), tfidf(ref)), with
/// IDF = ln(|I| / (1 + number of items whose references hold the n-gram)).
double cider(const EvalCorpus& corpus);

/// Unigram alignment by exact then stemmed match, scored as
/// F·(1 − 0.5·(chunks/matches)³) with F = 10PR/(R + 9P); best reference per
/// item, averaged over items.
double meteor_lite(const EvalCorpus& corpus);

/// Named metric: bleu1..bleu4, cider or meteor_lite. Throws ConfigError on
/// any other name.
double evaluate_metric(const std::string& name, const EvalCorpus& corpus);
bool is_metric_name(const std::string& name);

/// Corpus file lines: id TAB (C|R) TAB sentence.
struct CorpusFile {
  std::map<std::string, std::vector<std::string>> candidates;
  std::map<std::string, std::vector<std::string>> references;
  std::vector<std::string> order;  // ids in order of first appearance
};
CorpusFile read_corpus_file(const std::filesystem::path& path);

}  // namespace capgen

#endif  // CAPGEN_METRICS_HPP_
