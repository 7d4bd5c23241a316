#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <string>

#include "aot/config.hpp"

using namespace aot;

TEST_CASE("defaults carry the published dimensions") {
  ModelConfig mc;
  CHECK(mc.d_e == 200);
  CHECK(mc.d_model == 300);
  CHECK(mc.gru_width == 256);
  CHECK(mc.gru_layers == 2);
  CHECK(mc.enc_layers == 2);
  CHECK(mc.enc_heads == 6);
  CHECK(mc.dec_layers == 2);
  CHECK(mc.dec_heads == 4);
  CHECK(mc.ffn_hidden == 50);
  CHECK(mc.pool_window == 3);
  CHECK(mc.max_tags == 20);
  CHECK(mc.foc_size == 3);
  CHECK(mc.max_decode_len == 50);
  CHECK(mc.k_override == 0);
  CHECK(mc.vocab_cap == 50000);
  CHECK_NOTHROW(validate(mc));

  TrainConfig tc;
  CHECK(tc.lambda1 == 1.0);
  CHECK(tc.lambda2 == 1.0);
  CHECK(tc.lambda3 == 1.0);
  CHECK(tc.beta1 == doctest::Approx(0.9));
  CHECK(tc.beta2 == doctest::Approx(0.999));
  CHECK(tc.adam_eps == doctest::Approx(1e-8));
  CHECK(tc.base_lr == doctest::Approx(1e-4));
  CHECK(tc.warmup == 4000);
  CHECK(tc.dropout_keep == doctest::Approx(0.8));
  CHECK(tc.label_smoothing == doctest::Approx(0.1));
  CHECK(tc.batch_size == 16);
  CHECK(tc.patience == 3);
  CHECK(tc.val_fraction == doctest::Approx(0.2));
  CHECK(tc.clip_norm == doctest::Approx(5.0));
  CHECK_NOTHROW(validate(tc));
}

TEST_CASE("validation rejects indivisible widths and bad ranges") {
  ModelConfig mc;
  mc.d_model = 301;  // not divisible by 6 heads
  CHECK_THROWS_AS(validate(mc), std::invalid_argument);

  mc = ModelConfig{};
  mc.d_e = 201;  // not divisible by 4 heads
  CHECK_THROWS_AS(validate(mc), std::invalid_argument);

  mc = ModelConfig{};
  mc.gru_width = 255;
  CHECK_THROWS_AS(validate(mc), std::invalid_argument);

  mc = ModelConfig{};
  mc.foc_size = 2;  // window must be odd
  CHECK_THROWS_AS(validate(mc), std::invalid_argument);

  mc = ModelConfig{};
  mc.max_tags = 0;
  CHECK_THROWS_AS(validate(mc), std::invalid_argument);

  TrainConfig tc;
  tc.dropout_keep = 0.0;
  CHECK_THROWS_AS(validate(tc), std::invalid_argument);
  tc = TrainConfig{};
  tc.dropout_keep = 1.2;
  CHECK_THROWS_AS(validate(tc), std::invalid_argument);
  tc = TrainConfig{};
  tc.label_smoothing = 1.0;
  CHECK_THROWS_AS(validate(tc), std::invalid_argument);
  tc = TrainConfig{};
  tc.val_fraction = 1.0;
  CHECK_THROWS_AS(validate(tc), std::invalid_argument);
  tc = TrainConfig{};
  tc.lambda2 = -0.5;
  CHECK_THROWS_AS(validate(tc), std::invalid_argument);
  tc = TrainConfig{};
  tc.clip_norm = -1.0;
  CHECK_THROWS_AS(validate(tc), std::invalid_argument);
}

TEST_CASE("json round trip preserves every field") {
  ModelConfig mc;
  mc.d_e = 8;
  mc.d_model = 12;
  mc.gru_width = 10;
  mc.gru_layers = 1;
  mc.salience_hidden = 7;
  mc.scaled_salience_attention = true;
  mc.enc_layers = 1;
  mc.enc_heads = 2;
  mc.dec_layers = 3;
  mc.dec_heads = 2;
  mc.ffn_hidden = 9;
  mc.pool_window = 2;
  mc.max_tags = 6;
  mc.foc_size = 5;
  mc.max_decode_len = 17;
  mc.k_override = 4;
  mc.vocab_cap = 123;

  TrainConfig tc;
  tc.lambda1 = 0.5;
  tc.lambda3 = 2.0;
  tc.beta1 = 0.8;
  tc.base_lr = 3e-3;
  tc.warmup = 10;
  tc.dropout_keep = 0.9;
  tc.label_smoothing = 0.0;
  tc.batch_size = 4;
  tc.max_epochs = 2;
  tc.patience = 1;
  tc.val_fraction = 0.25;
  tc.clip_norm = 0.0;
  tc.seed = 987654321123456789ull;
  tc.no_af = true;

  const std::string text = config_to_json(mc, tc);
  ModelConfig mc2;
  TrainConfig tc2;
  config_from_json(text, mc2, tc2);

  CHECK(mc2.d_e == mc.d_e);
  CHECK(mc2.d_model == mc.d_model);
  CHECK(mc2.gru_width == mc.gru_width);
  CHECK(mc2.gru_layers == mc.gru_layers);
  CHECK(mc2.salience_hidden == mc.salience_hidden);
  CHECK(mc2.scaled_salience_attention == mc.scaled_salience_attention);
  CHECK(mc2.enc_layers == mc.enc_layers);
  CHECK(mc2.enc_heads == mc.enc_heads);
  CHECK(mc2.dec_layers == mc.dec_layers);
  CHECK(mc2.dec_heads == mc.dec_heads);
  CHECK(mc2.ffn_hidden == mc.ffn_hidden);
  CHECK(mc2.pool_window == mc.pool_window);
  CHECK(mc2.max_tags == mc.max_tags);
  CHECK(mc2.foc_size == mc.foc_size);
  CHECK(mc2.max_decode_len == mc.max_decode_len);
  CHECK(mc2.k_override == mc.k_override);
  CHECK(mc2.vocab_cap == mc.vocab_cap);

  CHECK(tc2.lambda1 == doctest::Approx(tc.lambda1));
  CHECK(tc2.lambda2 == doctest::Approx(tc.lambda2));
  CHECK(tc2.lambda3 == doctest::Approx(tc.lambda3));
  CHECK(tc2.beta1 == doctest::Approx(tc.beta1));
  CHECK(tc2.base_lr == doctest::Approx(tc.base_lr));
  CHECK(tc2.warmup == tc.warmup);
  CHECK(tc2.dropout_keep == doctest::Approx(tc.dropout_keep));
  CHECK(tc2.label_smoothing == doctest::Approx(tc.label_smoothing));
  CHECK(tc2.batch_size == tc.batch_size);
  CHECK(tc2.max_epochs == tc.max_epochs);
  CHECK(tc2.patience == tc.patience);
  CHECK(tc2.val_fraction == doctest::Approx(tc.val_fraction));
  CHECK(tc2.clip_norm == doctest::Approx(tc.clip_norm));
  CHECK(tc2.seed == tc.seed);
  CHECK(tc2.no_af == true);
  CHECK(tc2.no_sse == false);

  // Serialization is deterministic, so a second pass is byte-identical.
  CHECK(config_to_json(mc2, tc2) == text);
}

TEST_CASE("partial json overrides only the listed keys") {
  ModelConfig mc;
  TrainConfig tc;
  config_from_json(R"({"d_model": 120, "batch_size": 2})", mc, tc);
  CHECK(mc.d_model == 120);
  CHECK(mc.d_e == 200);
  CHECK(tc.batch_size == 2);
  CHECK(tc.warmup == 4000);
}

TEST_CASE("unknown keys and malformed text are rejected") {
  ModelConfig mc;
  TrainConfig tc;
  CHECK_THROWS_AS(config_from_json(R"({"d_q": 3})", mc, tc), std::runtime_error);
  CHECK_THROWS_AS(config_from_json("[1, 2]", mc, tc), std::runtime_error);
  CHECK_THROWS_AS(config_from_json("{not json", mc, tc), std::runtime_error);
  // Values that parse but violate the invariants still fail.
  CHECK_THROWS_AS(config_from_json(R"({"d_model": 301})", mc, tc),
                  std::invalid_argument);
}

TEST_CASE("ablation flags force their loss weights off") {
  ModelConfig mc;
  TrainConfig tc;
  config_from_json(R"({"no_sse": true, "lambda1": 1.0})", mc, tc);
  CHECK(tc.no_sse);
  CHECK(tc.lambda1 == 0.0);

  tc = TrainConfig{};
  config_from_json(R"({"no_al": true})", mc, tc);
  CHECK(tc.no_al);
  CHECK(tc.lambda2 == 0.0);
}

TEST_CASE("apply_ablation is idempotent and composes") {
  TrainConfig tc;
  apply_ablation(tc, "no_sse");
  const TrainConfig once = tc;
  apply_ablation(tc, "no_sse");
  CHECK(tc.no_sse == once.no_sse);
  CHECK(tc.lambda1 == once.lambda1);
  CHECK(tc.lambda1 == 0.0);

  tc = TrainConfig{};
  apply_ablation_list(tc, "no_af,no_al");
  CHECK(tc.no_af);
  CHECK(tc.no_al);
  CHECK(tc.lambda2 == 0.0);
  CHECK(tc.lambda1 == 1.0);

  tc = TrainConfig{};
  CHECK_THROWS_AS(apply_ablation(tc, "no_such"), std::invalid_argument);
}

TEST_CASE("config files survive a save and load cycle") {
  const std::string path = "test_config_roundtrip.json";
  ModelConfig mc;
  mc.d_model = 60;
  mc.enc_heads = 6;
  TrainConfig tc;
  tc.seed = 42;
  save_config(path, mc, tc);

  ModelConfig mc2;
  TrainConfig tc2;
  load_config(path, mc2, tc2);
  CHECK(mc2.d_model == 60);
  CHECK(tc2.seed == 42);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_config("does_not_exist.json", mc2, tc2),
                  std::runtime_error);
}
