#pragma once

#include <string>
#include <vector>

#include "aot/model.hpp"

namespace aot {

// Lowercased, outer-whitespace-trimmed copy used by every metric compare.
std::string normalize_tag(const std::string& s);

// Cosine similarity; either vector all-zero gives 0.
double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Precision over min(k, |pred|), recall over |gold|, each gold tag matchable
// once. Empty gold throws.
double f1_at_k(const std::vector<std::string>& pred,
               const std::vector<std::string>& gold, int k);

// Binary exact-match relevance against unmatched gold tags.
double ndcg_at_k(const std::vector<std::string>& pred,
                 const std::vector<std::string>& gold, int k);

// Position-wise exact matches normalized by the gold length.
double erm(const std::vector<std::string>& pred,
           const std::vector<std::string>& gold);

// Position-wise cosine between mean-token-vector tag embeddings. Tokens
// missing from the vocabulary embed as zero vectors.
double frm(const std::vector<std::string>& pred,
           const std::vector<std::string>& gold, const ad::Mat& embedding,
           const Vocabulary& vocab);

struct DistinctScores {
  double micro = 0.0;  // x100: distinct bigrams over total, corpus-wide
  double macro = 0.0;  // x100: mean per-item ratio, zero-bigram items skipped
};

DistinctScores distinct2(const std::vector<std::vector<std::string>>& pred_per_item);

// Mean count of distinct tag strings per item; empty input throws.
double unique_n(const std::vector<std::vector<std::string>>& pred_per_item);

struct EvalReport {
  double f1_5 = 0.0, f1_10 = 0.0;
  double ndcg_5 = 0.0, ndcg_10 = 0.0;
  double erm = 0.0;
  double frm = 0.0;
  bool has_frm = false;
  double distinct2_micro = 0.0, distinct2_macro = 0.0;
  double unique_n = 0.0;
  struct PerItem {
    std::string item_id;
    double f1_5 = 0.0, f1_10 = 0.0;
    double ndcg_5 = 0.0, ndcg_10 = 0.0;
    double erm = 0.0, frm = 0.0;
  };
  std::vector<PerItem> items;
};

// Macro-averaged report over aligned prediction/gold lists. Pass the
// embedding table and vocabulary to include FRM.
EvalReport evaluate(const std::vector<std::string>& item_ids,
                    const std::vector<std::vector<std::string>>& preds,
                    const std::vector<std::vector<std::string>>& golds,
                    const ad::Mat* embedding = nullptr,
                    const Vocabulary* vocab = nullptr);

// Rank-by-rank table: entry (j, k) is the mean cosine between the rank-j
// gold tag embedding and the mean member-review embeddings of the rank-k
// cluster, averaged over items where both ranks exist. Embeddings are mean
// word vectors from the model table.
ad::Mat cluster_tag_similarity(AotModel& m, const std::vector<Item>& items,
                               const PipelineFlags& flags, std::uint64_t seed,
                               int max_rank);

}  // namespace aot
