#include "aot/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace aot {

using nlohmann::json;

void validate(const ModelConfig& mc) {
  if (mc.d_e < 1 || mc.d_model < 1 || mc.gru_width < 1 || mc.ffn_hidden < 1 ||
      mc.salience_hidden < 1)
    throw std::invalid_argument("config: widths must be positive");
  if (mc.gru_width % 2 != 0)
    throw std::invalid_argument("config: gru_width must split into two directions");
  if (mc.d_model % mc.enc_heads != 0)
    throw std::invalid_argument("config: d_model must be divisible by enc_heads");
  if (mc.d_e % mc.dec_heads != 0)
    throw std::invalid_argument("config: d_e must be divisible by dec_heads");
  if (mc.enc_layers < 1 || mc.dec_layers < 1 || mc.gru_layers < 1)
    throw std::invalid_argument("config: layer counts must be positive");
  if (mc.pool_window < 1) throw std::invalid_argument("config: pool_window < 1");
  if (mc.max_tags < 1) throw std::invalid_argument("config: max_tags < 1");
  if (mc.foc_size < 1 || mc.foc_size % 2 == 0)
    throw std::invalid_argument("config: foc_size must be odd and positive");
  if (mc.max_decode_len < 1)
    throw std::invalid_argument("config: max_decode_len < 1");
  if (mc.k_override < 0) throw std::invalid_argument("config: k_override < 0");
  if (mc.vocab_cap < 4) throw std::invalid_argument("config: vocab_cap too small");
}

void validate(const TrainConfig& tc) {
  if (tc.lambda1 < 0 || tc.lambda2 < 0 || tc.lambda3 < 0)
    throw std::invalid_argument("config: loss weights must be nonnegative");
  if (tc.dropout_keep <= 0.0 || tc.dropout_keep > 1.0)
    throw std::invalid_argument("config: dropout_keep outside (0,1]");
  if (tc.label_smoothing < 0.0 || tc.label_smoothing >= 1.0)
    throw std::invalid_argument("config: label_smoothing outside [0,1)");
  if (tc.beta1 < 0 || tc.beta1 >= 1 || tc.beta2 < 0 || tc.beta2 >= 1)
    throw std::invalid_argument("config: Adam betas outside [0,1)");
  if (tc.adam_eps <= 0) throw std::invalid_argument("config: adam_eps <= 0");
  if (tc.base_lr <= 0) throw std::invalid_argument("config: base_lr <= 0");
  if (tc.warmup < 1) throw std::invalid_argument("config: warmup < 1");
  if (tc.batch_size < 1) throw std::invalid_argument("config: batch_size < 1");
  if (tc.max_epochs < 1) throw std::invalid_argument("config: max_epochs < 1");
  if (tc.patience < 0) throw std::invalid_argument("config: patience < 0");
  if (tc.val_fraction < 0.0 || tc.val_fraction >= 1.0)
    throw std::invalid_argument("config: val_fraction outside [0,1)");
  if (tc.clip_norm < 0) throw std::invalid_argument("config: clip_norm < 0");
}

SalienceConfig salience_config(const ModelConfig& mc) {
  SalienceConfig sc;
  sc.d_e = mc.d_e;
  sc.d = mc.gru_width;
  sc.layers = mc.gru_layers;
  sc.ffn_hidden = mc.salience_hidden;
  sc.scaled_attention = mc.scaled_salience_attention;
  return sc;
}

EncoderConfig encoder_config(const ModelConfig& mc) {
  EncoderConfig ec;
  ec.d_e = mc.d_e;
  ec.d_model = mc.d_model;
  ec.layers = mc.enc_layers;
  ec.heads = mc.enc_heads;
  ec.ffn_hidden = mc.ffn_hidden;
  ec.pool_window = mc.pool_window;
  return ec;
}

TaggerConfig tagger_config(const ModelConfig& mc, bool alignment_features) {
  TaggerConfig tc;
  tc.d_e = mc.d_e;
  tc.d_model = mc.d_model;
  tc.layers = mc.dec_layers;
  tc.heads = mc.dec_heads;
  tc.ffn_hidden = mc.ffn_hidden;
  tc.max_tags = mc.max_tags;
  tc.foc_size = mc.foc_size;
  tc.max_decode_len = mc.max_decode_len;
  tc.alignment_features = alignment_features;
  return tc;
}

namespace {

json to_json(const ModelConfig& mc, const TrainConfig& tc) {
  return json{{"d_e", mc.d_e},
              {"d_model", mc.d_model},
              {"gru_width", mc.gru_width},
              {"gru_layers", mc.gru_layers},
              {"salience_hidden", mc.salience_hidden},
              {"scaled_salience_attention", mc.scaled_salience_attention},
              {"enc_layers", mc.enc_layers},
              {"enc_heads", mc.enc_heads},
              {"dec_layers", mc.dec_layers},
              {"dec_heads", mc.dec_heads},
              {"ffn_hidden", mc.ffn_hidden},
              {"pool_window", mc.pool_window},
              {"max_tags", mc.max_tags},
              {"foc_size", mc.foc_size},
              {"max_decode_len", mc.max_decode_len},
              {"k_override", mc.k_override},
              {"vocab_cap", mc.vocab_cap},
              {"lambda1", tc.lambda1},
              {"lambda2", tc.lambda2},
              {"lambda3", tc.lambda3},
              {"beta1", tc.beta1},
              {"beta2", tc.beta2},
              {"adam_eps", tc.adam_eps},
              {"base_lr", tc.base_lr},
              {"warmup", tc.warmup},
              {"dropout_keep", tc.dropout_keep},
              {"label_smoothing", tc.label_smoothing},
              {"batch_size", tc.batch_size},
              {"max_epochs", tc.max_epochs},
              {"patience", tc.patience},
              {"val_fraction", tc.val_fraction},
              {"clip_norm", tc.clip_norm},
              {"seed", tc.seed},
              {"no_sse", tc.no_sse},
              {"no_rcr", tc.no_rcr},
              {"no_af", tc.no_af},
              {"no_al", tc.no_al}};
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string config_to_json(const ModelConfig& mc, const TrainConfig& tc) {
  return to_json(mc, tc).dump(2) + "\n";
}

void config_from_json(const std::string& text, ModelConfig& mc,
                      TrainConfig& tc) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw std::runtime_error("config: expected an object");
  const json known = to_json(mc, tc);
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.contains(key))
      throw std::runtime_error("config: unknown key '" + key + "'");
  }
  take(j, "d_e", mc.d_e);
  take(j, "d_model", mc.d_model);
  take(j, "gru_width", mc.gru_width);
  take(j, "gru_layers", mc.gru_layers);
  take(j, "salience_hidden", mc.salience_hidden);
  take(j, "scaled_salience_attention", mc.scaled_salience_attention);
  take(j, "enc_layers", mc.enc_layers);
  take(j, "enc_heads", mc.enc_heads);
  take(j, "dec_layers", mc.dec_layers);
  take(j, "dec_heads", mc.dec_heads);
  take(j, "ffn_hidden", mc.ffn_hidden);
  take(j, "pool_window", mc.pool_window);
  take(j, "max_tags", mc.max_tags);
  take(j, "foc_size", mc.foc_size);
  take(j, "max_decode_len", mc.max_decode_len);
  take(j, "k_override", mc.k_override);
  take(j, "vocab_cap", mc.vocab_cap);
  take(j, "lambda1", tc.lambda1);
  take(j, "lambda2", tc.lambda2);
  take(j, "lambda3", tc.lambda3);
  take(j, "beta1", tc.beta1);
  take(j, "beta2", tc.beta2);
  take(j, "adam_eps", tc.adam_eps);
  take(j, "base_lr", tc.base_lr);
  take(j, "warmup", tc.warmup);
  take(j, "dropout_keep", tc.dropout_keep);
  take(j, "label_smoothing", tc.label_smoothing);
  take(j, "batch_size", tc.batch_size);
  take(j, "max_epochs", tc.max_epochs);
  take(j, "patience", tc.patience);
  take(j, "val_fraction", tc.val_fraction);
  take(j, "clip_norm", tc.clip_norm);
  take(j, "seed", tc.seed);
  take(j, "no_sse", tc.no_sse);
  take(j, "no_rcr", tc.no_rcr);
  take(j, "no_af", tc.no_af);
  take(j, "no_al", tc.no_al);
  if (tc.no_sse) tc.lambda1 = 0.0;
  if (tc.no_al) tc.lambda2 = 0.0;
  validate(mc);
  validate(tc);
}

void save_config(const std::string& path, const ModelConfig& mc,
                 const TrainConfig& tc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << config_to_json(mc, tc);
}

void load_config(const std::string& path, ModelConfig& mc, TrainConfig& tc) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  config_from_json(ss.str(), mc, tc);
}

void apply_ablation(TrainConfig& tc, const std::string& flag) {
  if (flag == "no_sse") {
    tc.no_sse = true;
    tc.lambda1 = 0.0;
  } else if (flag == "no_rcr") {
    tc.no_rcr = true;
  } else if (flag == "no_af") {
    tc.no_af = true;
  } else if (flag == "no_al") {
    tc.no_al = true;
    tc.lambda2 = 0.0;
  } else {
    throw std::invalid_argument("unknown ablation flag '" + flag + "'");
  }
}

void apply_ablation_list(TrainConfig& tc, const std::string& csv) {
  std::string token;
  std::istringstream ss(csv);
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) apply_ablation(tc, token);
  }
}

}  // namespace aot
