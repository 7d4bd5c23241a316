#pragma once

#include <string>
#include <vector>

#include "aot/autodiff.hpp"
#include "aot/rng.hpp"

namespace aot {

struct SalienceConfig {
  int d_e = 200;          // word embedding width
  int d = 256;            // review vector width (half per direction)
  int layers = 2;         // stacked BiGRU depth
  int ffn_hidden = 50;
  bool scaled_attention = false;  // plain dot product by default
};

// Registers GRU, attention, feed-forward and scoring weights under `prefix`.
// The embedding table is owned elsewhere (shared with the review encoder).
void init_salience_params(ad::ParamStore& ps, const std::string& prefix,
                          const SalienceConfig& cfg, Rng& rng);

struct SelfAttention {
  ad::Value context;    // M x d
  ad::Value attention;  // M x M, rows sum to 1
};

// Stacked bidirectional GRU over each review; row i holds
// [last forward state; first backward state] of review i.
ad::Value encode_reviews(ad::ParamStore& ps, const std::string& prefix,
                         const ad::Value& embedding,
                         const std::vector<std::vector<int>>& reviews,
                         const SalienceConfig& cfg);

SelfAttention self_attend(ad::ParamStore& ps, const std::string& prefix,
                          const ad::Value& h, const SalienceConfig& cfg);

// z = sigmoid(W_s * FFN(h + c) + b_s), one score per row.
ad::Value salience_score(ad::ParamStore& ps, const std::string& prefix,
                         const ad::Value& h, const ad::Value& context);

struct SalienceResult {
  ad::Value h;          // M x d
  ad::Value context;    // M x d
  ad::Value attention;  // M x M
  ad::Value scores;     // M x 1
};

SalienceResult salience_forward(ad::ParamStore& ps, const std::string& prefix,
                                const ad::Value& embedding,
                                const std::vector<std::vector<int>>& reviews,
                                const SalienceConfig& cfg);

// Mean binary cross-entropy over reviews; scores clamped to avoid log(0).
ad::Value salience_loss(const ad::Value& scores, const std::vector<int>& labels);

}  // namespace aot
