#include "aot/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace aot {

CorpusStats corpus_stats(const std::vector<Item>& items) {
  CorpusStats stats;
  stats.n_items = static_cast<int>(items.size());
  for (const auto& item : items) {
    std::set<std::string> seen;
    for (const auto& r : item.reviews)
      for (const auto& t : r.tokens) seen.insert(t);
    for (const auto& t : seen) ++stats.doc_freq[t];
  }
  return stats;
}

double idf(const CorpusStats& stats, const std::string& token) {
  const auto it = stats.doc_freq.find(token);
  const int df = it == stats.doc_freq.end() ? 0 : it->second;
  return std::log((1.0 + stats.n_items) / (1.0 + df)) + 1.0;
}

std::vector<std::string> tfidf_tags(const Item& item, const CorpusStats& stats,
                                    int top_n) {
  if (top_n < 1) return {};

  std::map<std::string, int> tf;
  for (const auto& r : item.reviews)
    for (const auto& t : r.tokens) ++tf[t];

  // Candidate n-grams collected once each; score sums member tf-idf.
  std::map<std::string, double> score;
  for (const auto& r : item.reviews) {
    const auto& toks = r.tokens;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      std::string gram;
      double s = 0.0;
      for (std::size_t n = 0; n < 3 && i + n < toks.size(); ++n) {
        if (n) gram += ' ';
        gram += toks[i + n];
        s += tf[toks[i + n]] * idf(stats, toks[i + n]);
        score.emplace(gram, s).first->second = s;
      }
    }
  }

  std::vector<std::pair<std::string, double>> ranked(score.begin(), score.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> out;
  for (const auto& [gram, s] : ranked) {
    if (static_cast<int>(out.size()) >= top_n) break;
    out.push_back(gram);
  }
  return out;
}

std::vector<std::pair<std::string, double>> textrank_scores(const Item& item) {
  // Stable word indices in first-appearance order.
  std::vector<std::string> words;
  std::map<std::string, int> index;
  auto word_id = [&](const std::string& t) {
    auto [it, fresh] = index.emplace(t, static_cast<int>(words.size()));
    if (fresh) words.push_back(t);
    return it->second;
  };

  // Undirected co-occurrence counts within a window of two tokens.
  std::map<std::pair<int, int>, double> edge;
  for (const auto& r : item.reviews) {
    for (std::size_t i = 0; i + 1 < r.tokens.size(); ++i) {
      const int a = word_id(r.tokens[i]);
      const int b = word_id(r.tokens[i + 1]);
      if (a == b) continue;
      edge[{std::min(a, b), std::max(a, b)}] += 1.0;
    }
    if (r.tokens.size() == 1) word_id(r.tokens[0]);
  }

  const int n = static_cast<int>(words.size());
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  std::vector<double> degree(n, 0.0);
  for (const auto& [ab, w] : edge) {
    adj[ab.first].emplace_back(ab.second, w);
    adj[ab.second].emplace_back(ab.first, w);
    degree[ab.first] += w;
    degree[ab.second] += w;
  }

  constexpr double kDamping = 0.85;
  std::vector<double> s(n, 1.0), next(n);
  for (int iter = 0; iter < 50; ++iter) {
    double delta = 0.0;
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (const auto& [j, w] : adj[i]) acc += w * s[j] / degree[j];
      next[i] = (1.0 - kDamping) + kDamping * acc;
      delta = std::max(delta, std::abs(next[i] - s[i]));
    }
    s.swap(next);
    if (delta < 1e-6) break;
  }

  std::vector<std::pair<std::string, double>> out;
  out.reserve(words.size());
  for (int i = 0; i < n; ++i) out.emplace_back(words[i], s[i]);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return out;
}

std::vector<std::string> textrank_tags(const Item& item, int top_n) {
  if (top_n < 1) return {};
  const auto ranked = textrank_scores(item);
  if (ranked.empty()) return {};

  // Keep the top third of the vocabulary (at least top_n words) as keywords.
  const int n_words = static_cast<int>(ranked.size());
  const int n_keep = std::min(n_words, std::max(top_n, (n_words + 2) / 3));
  std::map<std::string, double> keyword;
  for (int i = 0; i < n_keep; ++i) keyword.emplace(ranked[i].first, ranked[i].second);

  // Merge adjacent keywords into maximal phrases where they appear.
  std::map<std::string, double> phrase;
  for (const auto& r : item.reviews) {
    std::size_t i = 0;
    while (i < r.tokens.size()) {
      if (!keyword.count(r.tokens[i])) {
        ++i;
        continue;
      }
      std::string text = r.tokens[i];
      double s = keyword[r.tokens[i]];
      std::size_t j = i + 1;
      while (j < r.tokens.size() && keyword.count(r.tokens[j])) {
        text += ' ';
        text += r.tokens[j];
        s += keyword[r.tokens[j]];
        ++j;
      }
      phrase.emplace(text, s).first->second = s;
      i = j;
    }
  }

  std::vector<std::pair<std::string, double>> out(phrase.begin(), phrase.end());
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> tags;
  for (const auto& [text, s] : out) {
    if (static_cast<int>(tags.size()) >= top_n) break;
    tags.push_back(text);
  }
  return tags;
}

}  // namespace aot
