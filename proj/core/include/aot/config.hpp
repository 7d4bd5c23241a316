#pragma once

#include <cstdint>
#include <string>

#include "aot/encoder.hpp"
#include "aot/salience.hpp"
#include "aot/tagger.hpp"

namespace aot {

struct ModelConfig {
  int d_e = 200;
  int d_model = 300;
  int gru_width = 256;  // salience review vectors, half per direction
  int gru_layers = 2;
  int salience_hidden = 50;
  bool scaled_salience_attention = false;
  int enc_layers = 2;
  int enc_heads = 6;
  int dec_layers = 2;
  int dec_heads = 4;
  int ffn_hidden = 50;
  int pool_window = 3;
  int max_tags = 20;
  int foc_size = 3;
  int max_decode_len = 50;
  int k_override = 0;  // 0 keeps the review-count rule
  int vocab_cap = 50000;
};

struct TrainConfig {
  double lambda1 = 1.0;  // salience
  double lambda2 = 1.0;  // alignment
  double lambda3 = 1.0;  // generation
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double base_lr = 1e-4;
  int warmup = 4000;
  double dropout_keep = 0.8;
  double label_smoothing = 0.1;
  int batch_size = 16;
  int max_epochs = 30;
  int patience = 3;
  double val_fraction = 0.2;
  double clip_norm = 5.0;  // 0 disables clipping
  std::uint64_t seed = 1;
  bool no_sse = false;  // salience scores pinned to 1, lambda1 forced to 0
  bool no_rcr = false;  // no clustering; one pseudo-cluster in review order
  bool no_af = false;   // rank features removed from tags and memory
  bool no_al = false;   // lambda2 forced to 0
};

// Throws std::invalid_argument on violated ranges or indivisible widths.
void validate(const ModelConfig& mc);
void validate(const TrainConfig& tc);

SalienceConfig salience_config(const ModelConfig& mc);
EncoderConfig encoder_config(const ModelConfig& mc);
TaggerConfig tagger_config(const ModelConfig& mc, bool alignment_features);

// Flat key/value JSON. Loading starts from the given defaults, overrides the
// keys present, and rejects unknown keys.
std::string config_to_json(const ModelConfig& mc, const TrainConfig& tc);
void config_from_json(const std::string& text, ModelConfig& mc, TrainConfig& tc);
void save_config(const std::string& path, const ModelConfig& mc,
                 const TrainConfig& tc);
void load_config(const std::string& path, ModelConfig& mc, TrainConfig& tc);

// Flag names: no_sse, no_rcr, no_af, no_al. Setting no_sse zeroes lambda1 and
// no_al zeroes lambda2, so applying twice equals applying once.
void apply_ablation(TrainConfig& tc, const std::string& flag);
void apply_ablation_list(TrainConfig& tc, const std::string& csv);

}  // namespace aot
