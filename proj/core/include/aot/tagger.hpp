#pragma once

#include <string>
#include <vector>

#include "aot/autodiff.hpp"
#include "aot/corpus.hpp"
#include "aot/encoder.hpp"
#include "aot/rng.hpp"

namespace aot {

struct TaggerConfig {
  int d_e = 200;      // decoder width; cross-attention queries start here
  int d_model = 300;  // memory width
  int layers = 2;
  int heads = 4;  // head width d_e / heads
  int ffn_hidden = 50;
  int max_tags = 20;
  int foc_size = 3;  // F, odd
  int max_decode_len = 50;
  bool alignment_features = true;  // rank features on tags and memory
};

// BOS-delimited concatenation of the ranked tags, with per-token tag index j
// (1-based) and within-tag position q (0 on the BOS itself). Ends with an
// empty segment (BOS BOS) so the decoder can learn to stop.
struct TagSequence {
  std::vector<int> tokens;  // extended-vocabulary ids
  std::vector<int> tag_index;
  std::vector<int> within_pos;
};

TagSequence prepare_targets(const std::vector<std::vector<std::string>>& gold,
                            const ExtendedVocab& ev);

// Inverse of prepare_targets: splits on BOS and drops empty segments.
std::vector<std::vector<std::string>> segment_tags(const std::vector<int>& tokens,
                                                   const ExtendedVocab& ev);

struct FocSpec {
  int j = 0;
  int f = 0;
  std::vector<int> foc;  // focused cluster ranks, ascending
  std::vector<int> ooc;  // the complement in [1, K]
};

// Window of F ranks around j, clipped to [1,K] and refilled from the
// available side; j past K takes the last min(F,K) ranks.
FocSpec foc_set(int j, int k, int f);

void init_tagger_params(ad::ParamStore& ps, const std::string& prefix,
                        const TaggerConfig& cfg, int vocab_size, Rng& rng);

// y = W_rt*Aln(j) + Embed(token) + Pos(global position).
ad::Value embed_target_token(ad::ParamStore& ps, const std::string& prefix,
                             const ad::Value& embedding, int token_ext_id, int j,
                             int global_pos, const TaggerConfig& cfg);

// Memory rows plus W_rc*Aln(j) on FOC words and W_rc*Aln(0) elsewhere.
ad::Value align_memory(ad::ParamStore& ps, const std::string& prefix,
                       const ad::Value& memory,
                       const std::vector<int>& word_cluster_rank,
                       const FocSpec& foc, const TaggerConfig& cfg);

struct DecoderOutput {
  ad::Value dist;   // T x ext_size, each row a distribution
  ad::Value alpha;  // T x n_words, final-layer head-averaged cross-attention
  ad::Value p_gen;  // T x 1
  std::vector<FocSpec> foc;             // per step
  std::vector<ad::Value> head_attention;  // every attention matrix built
};

// Teacher-forced decoder pass. input_tokens[t] is the already-known token at
// position t (extended ids); input_tags[t] its tag index, which also selects
// the FOC set used while predicting position t+1. Tag indices must be
// non-decreasing.
DecoderOutput decoder_forward(ad::ParamStore& ps, const std::string& prefix,
                              const ad::Value& embedding,
                              const std::vector<int>& input_tokens,
                              const std::vector<int>& input_tags,
                              const ad::Value& memory,
                              const std::vector<int>& word_cluster_rank,
                              const std::vector<int>& word_ext_ids,
                              int n_clusters, int vocab_size, int ext_size,
                              const TaggerConfig& cfg,
                              const DropoutCtx& drop = {});

// Negative log-likelihood of the targets; optional label smoothing spreads
// mass uniformly over the base vocabulary.
ad::Value generation_loss(const ad::Value& dist, const std::vector<int>& targets,
                          int base_vocab, double label_smoothing = 0.0);

// Per step: -log(FOC mass fraction) + log(OOC mass fraction), averaged.
ad::Value alignment_loss(const ad::Value& alpha, const std::vector<FocSpec>& foc,
                         const std::vector<int>& word_cluster_rank);

struct FocMass {
  double foc = 0.0;
  double ooc = 0.0;
};

// Mean FOC/OOC attention-mass fractions over recorded steps.
FocMass foc_attention_mass(const std::vector<ad::Mat>& alpha,
                           const std::vector<FocSpec>& foc,
                           const std::vector<int>& word_cluster_rank);

struct DecodeTrace {
  std::vector<int> tokens;  // emitted extended ids, BOS delimiters included
  std::vector<std::vector<std::string>> tags;
  std::vector<ad::Mat> alpha;  // one 1 x n_words row per emitted token
  std::vector<double> p_gen;
  std::vector<FocSpec> foc;
};

// Greedy decoding from a forced leading BOS. Stops at the step cap, once a
// segment comes out empty (BOS directly after BOS), or when more than
// max_tags segments have opened.
DecodeTrace greedy_decode(ad::ParamStore& ps, const std::string& prefix,
                          const ad::Value& embedding, const ad::Value& memory,
                          const std::vector<int>& word_cluster_rank,
                          const std::vector<int>& word_ext_ids, int n_clusters,
                          const ExtendedVocab& ev, const TaggerConfig& cfg);

}  // namespace aot
