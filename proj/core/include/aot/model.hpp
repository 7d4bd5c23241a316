#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aot/cluster_rank.hpp"
#include "aot/config.hpp"
#include "aot/corpus.hpp"
#include "aot/tagger.hpp"

namespace aot {

struct AotModel {
  ModelConfig cfg;
  Vocabulary vocab;
  ad::ParamStore ps;
};

// Registers the shared embedding table plus the salience ("sal"), encoder
// ("enc") and decoder ("dec") parameter groups.
void init_model(AotModel& m, std::uint64_t seed);

struct PipelineFlags {
  bool no_sse = false;
  bool no_rcr = false;
  bool no_af = false;
};

PipelineFlags pipeline_flags(const TrainConfig& tc);

// Stable per-item stream id so clustering stays reproducible across runs.
std::uint64_t item_stream(const std::string& item_id, std::uint64_t seed);

struct ItemEncoding {
  ExtendedVocab ev;
  std::vector<std::vector<int>> review_ids;
  ad::Value z;  // M x 1 salience scores; left undefined under no_sse
  RankedMemory plan;
  int n_clusters = 1;
  ad::Value memory;  // total_words x d_model
  std::vector<int> word_ext_ids;
};

// Salience scoring, per-review encoding, weighted clustering and memory
// assembly for one item. Clustering consumes current salience values but
// stays outside the gradient graph.
ItemEncoding encode_item(AotModel& m, const Item& item,
                         const PipelineFlags& flags, std::uint64_t cluster_seed,
                         const DropoutCtx& drop = {});

struct ItemLosses {
  ad::Value cla, aln, gen;
  int steps = 0;
  int correct = 0;  // teacher-forced argmax hits over the steps
};

ItemLosses item_losses(AotModel& m, const Item& item, const ItemEncoding& enc,
                       const PipelineFlags& flags, double label_smoothing,
                       const DropoutCtx& drop = {});

struct ItemInference {
  std::vector<std::string> tags;  // space-joined token runs, ranked
  DecodeTrace trace;
  FocMass mass;
  std::vector<int> word_cluster_rank;
  int n_clusters = 1;
};

ItemInference infer_item(AotModel& m, const Item& item,
                         const PipelineFlags& flags,
                         std::uint64_t cluster_seed);

}  // namespace aot
