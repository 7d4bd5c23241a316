#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "aot/corpus.hpp"

namespace aot {

struct CorpusStats {
  std::unordered_map<std::string, int> doc_freq;  // items containing the token
  int n_items = 0;
};

CorpusStats corpus_stats(const std::vector<Item>& items);

// Smoothed inverse document frequency: log((1+D)/(1+df)) + 1.
double idf(const CorpusStats& stats, const std::string& token);

// 1- to 3-gram candidates from the item's reviews, scored by the sum of
// member-token tf-idf; ties break lexicographically.
std::vector<std::string> tfidf_tags(const Item& item, const CorpusStats& stats,
                                    int top_n);

// Damped co-occurrence ranking over the item's words (window 2, damping
// 0.85, 50 iterations or max change < 1e-6), sorted by score then token.
std::vector<std::pair<std::string, double>> textrank_scores(const Item& item);

// Adjacent top-ranked words merged into phrases, best top_n returned.
std::vector<std::string> textrank_tags(const Item& item, int top_n);

}  // namespace aot
