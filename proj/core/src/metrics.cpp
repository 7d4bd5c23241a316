#include "aot/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace aot {

using ad::Mat;

std::string normalize_tag(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  std::string out = s.substr(b, e - b);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

namespace {

std::vector<std::string> normalized(const std::vector<std::string>& tags) {
  std::vector<std::string> out;
  out.reserve(tags.size());
  for (const auto& t : tags) out.push_back(normalize_tag(t));
  return out;
}

std::vector<std::string> split_tokens(const std::string& tag) {
  std::vector<std::string> toks;
  std::istringstream ss(tag);
  std::string t;
  while (ss >> t) toks.push_back(t);
  return toks;
}

// Relevance of each of the first k predictions, consuming gold tags so a
// duplicate prediction cannot match the same gold twice.
std::vector<int> relevance(const std::vector<std::string>& pred,
                           const std::vector<std::string>& gold, int k) {
  const auto p = normalized(pred);
  const auto g = normalized(gold);
  std::vector<bool> used(g.size(), false);
  const std::size_t top = std::min<std::size_t>(p.size(), static_cast<std::size_t>(k));
  std::vector<int> rel(top, 0);
  for (std::size_t i = 0; i < top; ++i) {
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (!used[j] && p[i] == g[j]) {
        used[j] = true;
        rel[i] = 1;
        break;
      }
    }
  }
  return rel;
}

}  // namespace

double f1_at_k(const std::vector<std::string>& pred,
               const std::vector<std::string>& gold, int k) {
  if (k < 1) throw std::invalid_argument("f1_at_k: k must be >= 1");
  if (gold.empty()) throw std::invalid_argument("f1_at_k: empty gold list");
  if (pred.empty()) return 0.0;
  const std::vector<int> rel = relevance(pred, gold, k);
  int matches = 0;
  for (int r : rel) matches += r;
  const double denom_p = static_cast<double>(
      std::min<std::size_t>(pred.size(), static_cast<std::size_t>(k)));
  const double p = matches / denom_p;
  const double r = matches / static_cast<double>(gold.size());
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

double ndcg_at_k(const std::vector<std::string>& pred,
                 const std::vector<std::string>& gold, int k) {
  if (k < 1) throw std::invalid_argument("ndcg_at_k: k must be >= 1");
  if (gold.empty()) throw std::invalid_argument("ndcg_at_k: empty gold list");
  const std::vector<int> rel = relevance(pred, gold, k);
  double dcg = 0.0;
  for (std::size_t i = 0; i < rel.size(); ++i)
    dcg += rel[i] / std::log2(static_cast<double>(i) + 2.0);
  const std::size_t ideal =
      std::min<std::size_t>(gold.size(), static_cast<std::size_t>(k));
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal; ++i)
    idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

double erm(const std::vector<std::string>& pred,
           const std::vector<std::string>& gold) {
  if (gold.empty()) throw std::invalid_argument("erm: empty gold list");
  const auto p = normalized(pred);
  const auto g = normalized(gold);
  const std::size_t n = std::min(p.size(), g.size());
  int hits = 0;
  for (std::size_t j = 0; j < n; ++j)
    if (p[j] == g[j]) ++hits;
  return hits / static_cast<double>(g.size());
}

namespace {

Eigen::VectorXd tag_vector(const std::string& tag, const Mat& embedding,
                           const Vocabulary& vocab) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(embedding.cols());
  const auto toks = split_tokens(tag);
  if (toks.empty()) return v;
  for (const auto& t : toks) {
    if (vocab.contains(t)) v += embedding.row(vocab.id(t)).transpose();
  }
  v /= static_cast<double>(toks.size());
  return v;
}

}  // namespace

double frm(const std::vector<std::string>& pred,
           const std::vector<std::string>& gold, const Mat& embedding,
           const Vocabulary& vocab) {
  const auto p = normalized(pred);
  const auto g = normalized(gold);
  const std::size_t n = std::min(p.size(), g.size());
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    sum += cosine(tag_vector(p[j], embedding, vocab),
                  tag_vector(g[j], embedding, vocab));
  return sum / static_cast<double>(n);
}

DistinctScores distinct2(
    const std::vector<std::vector<std::string>>& pred_per_item) {
  std::set<std::string> corpus_set;
  long corpus_total = 0;
  double macro_sum = 0.0;
  int macro_items = 0;
  for (const auto& tags : pred_per_item) {
    std::set<std::string> item_set;
    long item_total = 0;
    for (const auto& tag : tags) {
      const auto toks = split_tokens(normalize_tag(tag));
      for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
        const std::string bg = toks[i] + ' ' + toks[i + 1];
        item_set.insert(bg);
        corpus_set.insert(bg);
        ++item_total;
        ++corpus_total;
      }
    }
    if (item_total > 0) {
      macro_sum += static_cast<double>(item_set.size()) / item_total;
      ++macro_items;
    }
  }
  DistinctScores out;
  if (corpus_total > 0)
    out.micro = 100.0 * static_cast<double>(corpus_set.size()) / corpus_total;
  if (macro_items > 0) out.macro = 100.0 * macro_sum / macro_items;
  return out;
}

double unique_n(const std::vector<std::vector<std::string>>& pred_per_item) {
  if (pred_per_item.empty())
    throw std::invalid_argument("unique_n: no items");
  double sum = 0.0;
  for (const auto& tags : pred_per_item) {
    std::set<std::string> distinct;
    for (const auto& t : tags) distinct.insert(normalize_tag(t));
    sum += static_cast<double>(distinct.size());
  }
  return sum / static_cast<double>(pred_per_item.size());
}

EvalReport evaluate(const std::vector<std::string>& item_ids,
                    const std::vector<std::vector<std::string>>& preds,
                    const std::vector<std::vector<std::string>>& golds,
                    const Mat* embedding, const Vocabulary* vocab) {
  if (preds.size() != golds.size() || preds.size() != item_ids.size())
    throw std::invalid_argument("evaluate: misaligned prediction and gold lists");
  if (preds.empty()) throw std::invalid_argument("evaluate: no items");

  EvalReport rep;
  rep.has_frm = embedding != nullptr && vocab != nullptr;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    EvalReport::PerItem pi;
    pi.item_id = item_ids[i];
    pi.f1_5 = f1_at_k(preds[i], golds[i], 5);
    pi.f1_10 = f1_at_k(preds[i], golds[i], 10);
    pi.ndcg_5 = ndcg_at_k(preds[i], golds[i], 5);
    pi.ndcg_10 = ndcg_at_k(preds[i], golds[i], 10);
    pi.erm = erm(preds[i], golds[i]);
    if (rep.has_frm) pi.frm = frm(preds[i], golds[i], *embedding, *vocab);
    rep.items.push_back(pi);
    rep.f1_5 += pi.f1_5;
    rep.f1_10 += pi.f1_10;
    rep.ndcg_5 += pi.ndcg_5;
    rep.ndcg_10 += pi.ndcg_10;
    rep.erm += pi.erm;
    rep.frm += pi.frm;
  }
  const double n = static_cast<double>(preds.size());
  rep.f1_5 /= n;
  rep.f1_10 /= n;
  rep.ndcg_5 /= n;
  rep.ndcg_10 /= n;
  rep.erm /= n;
  rep.frm /= n;
  const DistinctScores d = distinct2(preds);
  rep.distinct2_micro = d.micro;
  rep.distinct2_macro = d.macro;
  rep.unique_n = unique_n(preds);
  return rep;
}

Mat cluster_tag_similarity(AotModel& m, const std::vector<Item>& items,
                           const PipelineFlags& flags, std::uint64_t seed,
                           int max_rank) {
  if (max_rank < 1)
    throw std::invalid_argument("cluster_tag_similarity: max_rank < 1");
  const Mat& emb = m.ps.value_of("emb");
  Mat table = Mat::Zero(max_rank, max_rank);
  Mat counts = Mat::Zero(max_rank, max_rank);

  for (const auto& item : items) {
    ItemEncoding enc =
        encode_item(m, item, flags, item_stream(item.item_id, seed));

    std::vector<Eigen::VectorXd> review_vec;
    review_vec.reserve(enc.review_ids.size());
    for (const auto& ids : enc.review_ids) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(emb.cols());
      for (int id : ids) v += emb.row(id).transpose();
      if (!ids.empty()) v /= static_cast<double>(ids.size());
      review_vec.push_back(std::move(v));
    }

    const int n_tags =
        std::min<int>(max_rank, static_cast<int>(item.gold_tags.size()));
    const int n_clusters = std::min(max_rank, enc.n_clusters);
    int offset = 0;
    std::vector<std::pair<int, int>> spans;  // per cluster: [begin, size)
    for (int k = 0; k < enc.n_clusters; ++k) {
      spans.emplace_back(offset, enc.plan.cluster_sizes[k]);
      offset += enc.plan.cluster_sizes[k];
    }

    for (int j = 0; j < n_tags; ++j) {
      Eigen::VectorXd tag = Eigen::VectorXd::Zero(emb.cols());
      for (const auto& tok : item.gold_tags[j]) {
        if (m.vocab.contains(tok)) tag += emb.row(m.vocab.id(tok)).transpose();
      }
      if (!item.gold_tags[j].empty())
        tag /= static_cast<double>(item.gold_tags[j].size());
      for (int k = 0; k < n_clusters; ++k) {
        double sum = 0.0;
        for (int s = 0; s < spans[k].second; ++s)
          sum += cosine(tag, review_vec[enc.plan.review_order[spans[k].first + s]]);
        table(j, k) += sum / spans[k].second;
        counts(j, k) += 1.0;
      }
    }
  }

  for (int r = 0; r < max_rank; ++r)
    for (int c = 0; c < max_rank; ++c)
      if (counts(r, c) > 0.0) table(r, c) /= counts(r, c);
  return table;
}

}  // namespace aot
