#include "aot/model.hpp"

#include <cmath>
#include <stdexcept>

#include "aot/encoder.hpp"
#include "aot/salience.hpp"

namespace aot {

using ad::Mat;
using ad::Value;

void init_model(AotModel& m, std::uint64_t seed) {
  validate(m.cfg);
  if (m.vocab.size() < 3)
    throw std::invalid_argument("init_model: vocabulary not built");
  Rng root(seed);
  Rng emb_rng = root.child(1);
  Mat emb(m.vocab.size(), m.cfg.d_e);
  for (long r = 0; r < emb.rows(); ++r)
    for (long c = 0; c < emb.cols(); ++c) emb(r, c) = emb_rng.normal(0.0, 0.1);
  emb.row(Vocabulary::kPad).setZero();
  m.ps.create("emb", std::move(emb));
  Rng sal_rng = root.child(2);
  init_salience_params(m.ps, "sal", salience_config(m.cfg), sal_rng);
  Rng enc_rng = root.child(3);
  init_encoder_params(m.ps, "enc", encoder_config(m.cfg), enc_rng);
  Rng dec_rng = root.child(4);
  init_tagger_params(m.ps, "dec", tagger_config(m.cfg, true), m.vocab.size(),
                     dec_rng);
}

PipelineFlags pipeline_flags(const TrainConfig& tc) {
  return {tc.no_sse, tc.no_rcr, tc.no_af};
}

std::uint64_t item_stream(const std::string& item_id, std::uint64_t seed) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a keeps this portable
  for (unsigned char c : item_id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h ^ seed;
}

namespace {

RankedMemory natural_order_plan(const std::vector<int>& lengths) {
  RankedMemory plan;
  const int m = static_cast<int>(lengths.size());
  plan.review_order.resize(m);
  for (int r = 0; r < m; ++r) plan.review_order[r] = r;
  for (int r = 0; r < m; ++r) {
    for (int p = 0; p < lengths[r]; ++p) {
      plan.word_review.push_back(r);
      plan.word_position.push_back(p);
      plan.word_cluster_rank.push_back(1);
    }
  }
  plan.total_words = static_cast<int>(plan.word_review.size());
  plan.boundaries = {plan.total_words};
  plan.cluster_sizes = {m};
  return plan;
}

}  // namespace

ItemEncoding encode_item(AotModel& m, const Item& item,
                         const PipelineFlags& flags, std::uint64_t cluster_seed,
                         const DropoutCtx& drop) {
  const int n_reviews = static_cast<int>(item.reviews.size());
  if (n_reviews == 0) throw std::invalid_argument("encode_item: no reviews");

  ItemEncoding enc;
  enc.ev = build_extended_vocab(m.vocab, item);
  enc.review_ids.reserve(n_reviews);
  std::vector<int> lengths(n_reviews);
  for (int r = 0; r < n_reviews; ++r) {
    enc.review_ids.push_back(m.vocab.encode(item.reviews[r].tokens));
    lengths[r] = static_cast<int>(enc.review_ids.back().size());
    if (lengths[r] == 0) throw std::invalid_argument("encode_item: empty review");
  }

  const Value emb = m.ps.get("emb");
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(n_reviews);
  if (!flags.no_sse) {
    SalienceResult sal =
        salience_forward(m.ps, "sal", emb, enc.review_ids, salience_config(m.cfg));
    enc.z = sal.scores;
    weights = sal.scores.v().col(0);
  }

  const EncoderConfig ecfg = encoder_config(m.cfg);
  std::vector<Value> review_words;
  review_words.reserve(n_reviews);
  Mat pooled(n_reviews, m.cfg.d_model);
  for (int r = 0; r < n_reviews; ++r) {
    EncodedReview er =
        encode_review_words(m.ps, "enc", emb, enc.review_ids[r], ecfg, drop);
    review_words.push_back(er.words);
    pooled.row(r) = er.pooled.v().row(0);
  }

  if (flags.no_rcr) {
    enc.plan = natural_order_plan(lengths);
    enc.n_clusters = 1;
  } else {
    int k = m.cfg.k_override > 0 ? std::min(m.cfg.k_override, n_reviews)
                                 : choose_k(n_reviews);
    const Mat weighted = weight_by_salience(pooled, weights);
    std::vector<OpinionCluster> clusters =
        cluster_and_rank(weighted, k, cluster_seed);
    enc.plan = flatten_memory(clusters, lengths);
    enc.n_clusters = static_cast<int>(clusters.size());
  }

  enc.memory = assemble_memory(enc.plan, review_words);
  enc.word_ext_ids.reserve(enc.plan.total_words);
  for (int s = 0; s < enc.plan.total_words; ++s) {
    const int r = enc.plan.word_review[s];
    const int p = enc.plan.word_position[s];
    enc.word_ext_ids.push_back(enc.ev.ext_id(item.reviews[r].tokens[p]));
  }
  return enc;
}

ItemLosses item_losses(AotModel& m, const Item& item, const ItemEncoding& enc,
                       const PipelineFlags& flags, double label_smoothing,
                       const DropoutCtx& drop) {
  if (item.gold_tags.empty())
    throw std::invalid_argument("item_losses: item has no tags");
  const TagSequence seq = prepare_targets(item.gold_tags, enc.ev);
  const int t_len = static_cast<int>(seq.tokens.size());
  const std::vector<int> inputs(seq.tokens.begin(), seq.tokens.end() - 1);
  const std::vector<int> input_tags(seq.tag_index.begin(),
                                    seq.tag_index.end() - 1);
  const std::vector<int> next(seq.tokens.begin() + 1, seq.tokens.end());

  const TaggerConfig dcfg = tagger_config(m.cfg, !flags.no_af);
  DecoderOutput out = decoder_forward(
      m.ps, "dec", m.ps.get("emb"), inputs, input_tags, enc.memory,
      enc.plan.word_cluster_rank, enc.word_ext_ids, enc.n_clusters,
      m.vocab.size(), enc.ev.total_size(), dcfg, drop);

  ItemLosses losses;
  losses.gen =
      generation_loss(out.dist, next, m.vocab.size(), label_smoothing);
  losses.aln = alignment_loss(out.alpha, out.foc, enc.plan.word_cluster_rank);
  if (flags.no_sse) {
    losses.cla = Value::constant(Mat::Zero(1, 1));
  } else {
    std::vector<int> labels(item.reviews.size());
    for (std::size_t r = 0; r < item.reviews.size(); ++r)
      labels[r] = item.reviews[r].salience_label;
    losses.cla = salience_loss(enc.z, labels);
  }

  losses.steps = t_len - 1;
  const Mat& dist = out.dist.v();
  for (int t = 0; t < losses.steps; ++t) {
    long arg = 0;
    dist.row(t).maxCoeff(&arg);
    if (static_cast<int>(arg) == next[t]) ++losses.correct;
  }
  return losses;
}

ItemInference infer_item(AotModel& m, const Item& item,
                         const PipelineFlags& flags,
                         std::uint64_t cluster_seed) {
  ItemEncoding enc = encode_item(m, item, flags, cluster_seed);
  const TaggerConfig dcfg = tagger_config(m.cfg, !flags.no_af);
  ItemInference inf;
  inf.trace = greedy_decode(m.ps, "dec", m.ps.get("emb"), enc.memory,
                            enc.plan.word_cluster_rank, enc.word_ext_ids,
                            enc.n_clusters, enc.ev, dcfg);
  inf.tags.reserve(inf.trace.tags.size());
  for (const auto& toks : inf.trace.tags) {
    std::string joined;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (i) joined += ' ';
      joined += toks[i];
    }
    inf.tags.push_back(joined);
  }
  inf.mass = foc_attention_mass(inf.trace.alpha, inf.trace.foc,
                                enc.plan.word_cluster_rank);
  inf.word_cluster_rank = enc.plan.word_cluster_rank;
  inf.n_clusters = enc.n_clusters;
  return inf;
}

}  // namespace aot
