#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aot/model.hpp"

namespace aot {

// Transformer warmup schedule capped at the base rate.
double lr_at(long step, int d_model, int warmup, double base_lr);

// lambda1*cla + lambda2*aln + lambda3*gen; throws on non-finite inputs.
ad::Value multitask_loss(const ad::Value& cla, const ad::Value& aln,
                         const ad::Value& gen, const TrainConfig& tc);

struct AdamState {
  std::vector<double> m, v;
  long step = 0;

  void init(std::size_t n);
  // One update over every parameter from the accumulated gradients.
  void update(ad::ParamStore& ps, double lr, const TrainConfig& tc);
};

// Builds the vocabulary from the items and initializes all parameters.
AotModel make_model(const std::vector<Item>& items, const ModelConfig& mc,
                    std::uint64_t seed);

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = 0;  // 1-based; 0 when no validation split exists
  double best_val = 0.0;
  long steps = 0;
  bool early_stopped = false;
};

// Teacher-forced epochs over a deterministic shuffle; the tail val_fraction
// of the items is held out and the best-validation parameters are restored
// before returning. Throws on a non-finite loss.
TrainResult train(AotModel& m, const std::vector<Item>& items,
                  const TrainConfig& tc, AdamState* adam_out = nullptr);

// Mean teacher-forced argmax accuracy, evaluation mode.
double token_accuracy(AotModel& m, const std::vector<Item>& items,
                      const TrainConfig& tc);

// Mean joint loss in evaluation mode.
double dataset_loss(AotModel& m, const std::vector<Item>& items,
                    const TrainConfig& tc);

void save_checkpoint(const std::string& path, const AotModel& m,
                     const TrainConfig& tc, const AdamState* adam = nullptr);

struct LoadedCheckpoint {
  AotModel model;
  TrainConfig train;
  AdamState adam;
  bool has_adam = false;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace aot
