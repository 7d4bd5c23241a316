#pragma once

#include <string>
#include <vector>

#include "aot/autodiff.hpp"
#include "aot/rng.hpp"

namespace aot {

struct EncoderConfig {
  int d_e = 200;      // embedding width
  int d_model = 300;  // transformer width
  int layers = 2;
  int heads = 6;
  int ffn_hidden = 50;
  int pool_window = 3;
};

// Dropout plumbing for training; default is a no-op (evaluation mode).
struct DropoutCtx {
  double keep = 1.0;
  Rng* rng = nullptr;
  bool train = false;
};

void init_encoder_params(ad::ParamStore& ps, const std::string& prefix,
                         const EncoderConfig& cfg, Rng& rng);

// Fixed sinusoidal table, one row per position.
ad::Mat positional_encoding(int length, int dim);

// Embed(t) + Pos(t), then a learned projection into d_model rows.
ad::Value embed_with_position(ad::ParamStore& ps, const std::string& prefix,
                              const ad::Value& embedding,
                              const std::vector<int>& tokens,
                              const EncoderConfig& cfg,
                              bool use_positions = true);

// Post-norm transformer stack; bidirectional self-attention within a review.
// When `attentions` is given it collects one row-stochastic matrix per
// (layer, head).
ad::Value transformer_encode(ad::ParamStore& ps, const std::string& prefix,
                             const ad::Value& x, const EncoderConfig& cfg,
                             const DropoutCtx& drop = {},
                             std::vector<ad::Value>* attentions = nullptr);

// Mean over each length-w sliding window, then elementwise max across
// windows; sequences no longer than the window reduce to a plain mean.
ad::Value hierarchical_pool(const ad::Value& words, int window);

struct EncodedReview {
  ad::Value words;   // L x d_model
  ad::Value pooled;  // 1 x d_model
};

EncodedReview encode_review_words(ad::ParamStore& ps, const std::string& prefix,
                                  const ad::Value& embedding,
                                  const std::vector<int>& tokens,
                                  const EncoderConfig& cfg,
                                  const DropoutCtx& drop = {},
                                  std::vector<ad::Value>* attentions = nullptr);

// Shared by encoder and decoder stacks: multi-head attention where `q_in`
// attends over `kv_in`. Scaling, output projection and extra value width are
// knobs because the two stacks differ in those details.
struct MhaSpec {
  int heads = 1;
  bool scale = true;          // divide logits by sqrt(head width)
  bool output_proj = true;    // apply WO after head concat
  const std::vector<int>* mask_limits = nullptr;  // row i sees cols [0, limit_i)
};

void init_mha(ad::ParamStore& ps, const std::string& prefix, int q_width,
              int kv_width, int head_width, int heads, bool output_proj,
              int out_width, Rng& rng);

ad::Value multi_head_attention(ad::ParamStore& ps, const std::string& prefix,
                               const ad::Value& q_in, const ad::Value& kv_in,
                               const MhaSpec& spec,
                               std::vector<ad::Value>* attentions = nullptr);

}  // namespace aot
