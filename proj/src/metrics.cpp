#include "capgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "capgen/error.hpp"
#include "capgen/stemmer.hpp"

namespace capgen {

namespace {

using NGram = std::vector<std::string>;
using NGramCounts = std::map<NGram, double>;

NGramCounts ngrams(const TokenList& tokens, size_t n) {
  NGramCounts out;
  if (tokens.size() < n) return out;
  for (size_t i = 0; i + n <= tokens.size(); ++i) {
    out[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
              tokens.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
  }
  return out;
}

void check_corpus(const EvalCorpus& corpus) {
  if (corpus.empty()) throw DomainError("evaluation corpus is empty");
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].references.empty()) {
      throw ContractError("evaluation item " + std::to_string(i) + " has no references");
    }
  }
}

size_t closest_reference_length(const EvalItem& item) {
  const size_t c = item.candidate.size();
  size_t best = item.references.front().size();
  for (const TokenList& r : item.references) {
    const size_t d = r.size() > c ? r.size() - c : c - r.size();
    const size_t bd = best > c ? best - c : c - best;
    if (d < bd || (d == bd && r.size() < best)) best = r.size();
  }
  return best;
}

}  // namespace

double bleu(const EvalCorpus& corpus, size_t max_n) {
  check_corpus(corpus);
  if (max_n < 1 || max_n > 4) throw DomainError("BLEU order must be in 1..4");
  std::vector<double> matched(max_n + 1, 0.0), total(max_n + 1, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (const EvalItem& item : corpus) {
    cand_len += static_cast<double>(item.candidate.size());
    ref_len += static_cast<double>(closest_reference_length(item));
    for (size_t n = 1; n <= max_n; ++n) {
      NGramCounts max_ref;
      for (const TokenList& r : item.references)
        for (const auto& [g, c] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], c);
      for (const auto& [g, c] : ngrams(item.candidate, n)) {
        total[n] += c;
        auto it = max_ref.find(g);
        if (it != max_ref.end()) matched[n] += std::min(c, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (size_t n = 1; n <= max_n; ++n) {
    if (matched[n] == 0.0) return 0.0;
    log_sum += std::log(matched[n] / total[n]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(max_n));
}

namespace {

using Vec = std::map<NGram, double>;

Vec tfidf(const TokenList& tokens, size_t n, const std::map<NGram, double>& df, double docs) {
  Vec v = ngrams(tokens, n);
  double count = 0.0;
  for (const auto& [g, c] : v) count += c;
  for (auto& [g, w] : v) {
    auto it = df.find(g);
    const double d = it == df.end() ? 0.0 : it->second;
    w = (w / count) * std::log(docs / (1.0 + d));
  }
  return v;
}

double cosine(const Vec& a, const Vec& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [g, w] : a) {
    na += w * w;
    auto it = b.find(g);
    if (it != b.end()) dot += w * it->second;
  }
  for (const auto& [g, w] : b) nb += w * w;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double cider(const EvalCorpus& corpus) {
  check_corpus(corpus);
  const double docs = static_cast<double>(corpus.size());
  std::vector<double> item_scores(corpus.size(), 0.0);
  for (size_t n = 1; n <= 4; ++n) {
    std::map<NGram, double> df;
    for (const EvalItem& item : corpus) {
      std::set<NGram> seen;
      for (const TokenList& r : item.references)
        for (const auto& [g, c] : ngrams(r, n)) seen.insert(g);
      for (const NGram& g : seen) df[g] += 1.0;
    }
    for (size_t i = 0; i < corpus.size(); ++i) {
      const Vec cand = tfidf(corpus[i].candidate, n, df, docs);
      double acc = 0.0;
      for (const TokenList& r : corpus[i].references) acc += cosine(cand, tfidf(r, n, df, docs));
      item_scores[i] += acc / static_cast<double>(corpus[i].references.size());
    }
  }
  double total = 0.0;
  for (double s : item_scores) total += 10.0 * s / 4.0;
  return total / docs;
}

namespace {

double meteor_pair(const TokenList& cand, const TokenList& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  std::vector<long> ref_for(cand.size(), -1);
  std::vector<bool> ref_used(ref.size(), false);
  auto align = [&](auto&& key) {
    for (size_t i = 0; i < cand.size(); ++i) {
      if (ref_for[i] >= 0) continue;
      const std::string ci = key(cand[i]);
      for (size_t j = 0; j < ref.size(); ++j) {
        if (!ref_used[j] && key(ref[j]) == ci) {
          ref_for[i] = static_cast<long>(j);
          ref_used[j] = true;
          break;
        }
      }
    }
  };
  align([](const std::string& w) { return w; });
  align([](const std::string& w) { return porter_stem(w); });

  double matches = 0.0, chunks = 0.0;
  long prev_ref = -2;
  bool prev_matched = false;
  for (size_t i = 0; i < cand.size(); ++i) {
    if (ref_for[i] < 0) {
      prev_matched = false;
      continue;
    }
    matches += 1.0;
    if (!prev_matched || ref_for[i] != prev_ref + 1) chunks += 1.0;
    prev_ref = ref_for[i];
    prev_matched = true;
  }
  if (matches == 0.0) return 0.0;
  const double p = matches / static_cast<double>(cand.size());
  const double r = matches / static_cast<double>(ref.size());
  const double f = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(chunks / matches, 3.0);
  return f * (1.0 - penalty);
}

}  // namespace

double meteor_lite(const EvalCorpus& corpus) {
  check_corpus(corpus);
  double total = 0.0;
  for (const EvalItem& item : corpus) {
    double best = 0.0;
    for (const TokenList& r : item.references) best = std::max(best, meteor_pair(item.candidate, r));
    total += best;
  }
  return total / static_cast<double>(corpus.size());
}

bool is_metric_name(const std::string& name) {
  return name == "bleu1" || name == "bleu2" || name == "bleu3" || name == "bleu4" ||
         name == "cider" || name == "meteor_lite";
}

double evaluate_metric(const std::string& name, const EvalCorpus& corpus) {
  if (name.size() == 5 && name.starts_with("bleu") && name[4] >= '1' && name[4] <= '4') {
    return bleu(corpus, static_cast<size_t>(name[4] - '0'));
  }
  if (name == "cider") return cider(corpus);
  if (name == "meteor_lite") return meteor_lite(corpus);
  throw ConfigError("unknown metric '" + name + "'");
}

CorpusFile read_corpus_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  CorpusFile out;
  std::set<std::string> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const size_t a = line.find('\t');
    const size_t b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) throw ParseError("expected id, flag and sentence", line_no);
    const std::string id = line.substr(0, a);
    const std::string flag = line.substr(a + 1, b - a - 1);
    const std::string sentence = line.substr(b + 1);
    if (id.empty()) throw ParseError("empty id", line_no);
    if (flag == "C") {
      out.candidates[id].push_back(sentence);
    } else if (flag == "R") {
      out.references[id].push_back(sentence);
    } else {
      throw ParseError("flag must be C or R, got '" + flag + "'", line_no);
    }
    if (seen.insert(id).second) out.order.push_back(id);
  }
  return out;
}

}  // namespace capgen
