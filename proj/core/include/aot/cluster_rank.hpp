#pragma once

#include <cstdint>
#include <vector>

#include "aot/autodiff.hpp"

namespace aot {

struct OpinionCluster {
  int rank = 0;              // 1-based after ranking
  std::vector<int> members;  // review indices
  Eigen::RowVectorXd center;
  double inertia = 0.0;  // sum of squared member distances to the center
  int word_count = 0;    // filled by flatten_memory
};

// K = ceil(M/20) up to 200 reviews, then a flat 20.
int choose_k(int m_reviews);

// Row i scaled by z(i); clustering consumes the weighted vectors while the
// memory bank keeps the unweighted word vectors.
ad::Mat weight_by_salience(const ad::Mat& pooled, const Eigen::VectorXd& z);

struct KmeansResult {
  std::vector<int> assignment;  // point -> cluster id
  ad::Mat centers;              // k x d
  int iterations = 0;
};

// Lloyd's iterations from a seeded k-means++ start. Ties go to the lowest
// index; an emptied cluster is reseeded with the farthest point of the
// largest cluster. No randomness is consumed after initialization.
KmeansResult kmeans(const ad::Mat& points, int k, std::uint64_t seed,
                    int max_iters = 100);

std::vector<OpinionCluster> make_clusters(const ad::Mat& points,
                                          const KmeansResult& result);

// Size descending; ties by lower inertia, then by lowest member index.
std::vector<OpinionCluster> rank_clusters(std::vector<OpinionCluster> clusters);

// Ascending distance to the cluster center; ties by lower review index.
std::vector<int> rank_within_cluster(const OpinionCluster& cluster,
                                     const ad::Mat& points);

struct RankedMemory {
  std::vector<int> review_order;       // reviews in (cluster, proximity) order
  std::vector<int> word_review;        // per memory slot: source review
  std::vector<int> word_position;      // per memory slot: position in review
  std::vector<int> word_cluster_rank;  // per memory slot: 1-based cluster rank
  std::vector<int> boundaries;         // end offset of each cluster's slots
  std::vector<int> cluster_sizes;      // review count per rank
  int total_words = 0;
};

// Orders every word slot by (cluster rank, within-cluster rank, position).
RankedMemory flatten_memory(const std::vector<OpinionCluster>& ranked,
                            const std::vector<int>& review_lengths);

// Stacks per-review word vectors following the flattening plan.
ad::Value assemble_memory(const RankedMemory& plan,
                          const std::vector<ad::Value>& review_words);

// Full phase: weight, cluster, rank clusters and members.
std::vector<OpinionCluster> cluster_and_rank(const ad::Mat& weighted_pooled,
                                             int k, std::uint64_t seed);

}  // namespace aot
