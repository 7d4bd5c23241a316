#include "aot/cluster_rank.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "aot/rng.hpp"

namespace aot {

int choose_k(int m_reviews) {
  if (m_reviews <= 200) return (m_reviews + 19) / 20;
  return 20;
}

ad::Mat weight_by_salience(const ad::Mat& pooled, const Eigen::VectorXd& z) {
  if (pooled.rows() != z.size())
    throw std::invalid_argument("weight_by_salience: row/score mismatch");
  return z.asDiagonal() * pooled;
}

namespace {

double sq_dist(const ad::Mat& points, long i, const ad::Mat& centers, long c) {
  return (points.row(i) - centers.row(c)).squaredNorm();
}

// Nearest center id, lowest index on ties.
int nearest(const ad::Mat& points, long i, const ad::Mat& centers) {
  int best = 0;
  double best_d = sq_dist(points, i, centers, 0);
  for (long c = 1; c < centers.rows(); ++c) {
    const double d = sq_dist(points, i, centers, c);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

ad::Mat plus_plus_init(const ad::Mat& points, int k, Rng& rng) {
  const long n = points.rows();
  ad::Mat centers(k, points.cols());
  std::vector<bool> taken(n, false);
  long first = static_cast<long>(rng.index(static_cast<std::size_t>(n)));
  centers.row(0) = points.row(first);
  taken[first] = true;

  Eigen::VectorXd d2(n);
  for (long i = 0; i < n; ++i) d2(i) = (points.row(i) - centers.row(0)).squaredNorm();

  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    long chosen = -1;
    if (total <= 0.0) {
      // All remaining points coincide with a center: take the lowest free one.
      for (long i = 0; i < n; ++i)
        if (!taken[i]) {
          chosen = i;
          break;
        }
      if (chosen < 0) chosen = 0;
    } else {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (long i = 0; i < n; ++i) {
        acc += d2(i);
        if (r < acc) {
          chosen = i;
          break;
        }
      }
      if (chosen < 0) chosen = n - 1;  // guard against accumulated rounding
    }
    centers.row(c) = points.row(chosen);
    taken[chosen] = true;
    for (long i = 0; i < n; ++i)
      d2(i) = std::min(d2(i), (points.row(i) - centers.row(c)).squaredNorm());
  }
  return centers;
}

void repair_empty_clusters(const ad::Mat& points, std::vector<int>& assignment,
                           int k) {
  std::vector<int> sizes(k, 0);
  for (int a : assignment) ++sizes[a];
  for (int c = 0; c < k; ++c) {
    if (sizes[c] > 0) continue;
    // Donate the largest cluster's farthest member.
    int largest = 0;
    for (int c2 = 1; c2 < k; ++c2)
      if (sizes[c2] > sizes[largest]) largest = c2;
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(points.cols());
    for (long i = 0; i < points.rows(); ++i)
      if (assignment[i] == largest) mean += points.row(i);
    mean /= std::max(1, sizes[largest]);
    long far = -1;
    double far_d = -1.0;
    for (long i = 0; i < points.rows(); ++i) {
      if (assignment[i] != largest) continue;
      const double d = (points.row(i) - mean).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far >= 0) {
      assignment[far] = c;
      --sizes[largest];
      ++sizes[c];
    }
  }
}

}  // namespace

KmeansResult kmeans(const ad::Mat& points, int k, std::uint64_t seed,
                    int max_iters) {
  const long n = points.rows();
  if (k <= 0 || k > n)
    throw std::invalid_argument("kmeans: need 1 <= k <= point count");
  Rng rng(seed);
  ad::Mat centers = plus_plus_init(points, k, rng);

  std::vector<int> assignment(n, -1);
  int iters = 0;
  for (; iters < max_iters; ++iters) {
    std::vector<int> next(n);
    for (long i = 0; i < n; ++i) next[i] = nearest(points, i, centers);
    repair_empty_clusters(points, next, k);
    const bool stable = (next == assignment);
    assignment = std::move(next);
    if (stable) break;
    centers.setZero();
    std::vector<int> sizes(k, 0);
    for (long i = 0; i < n; ++i) {
      centers.row(assignment[i]) += points.row(i);
      ++sizes[assignment[i]];
    }
    for (int c = 0; c < k; ++c) centers.row(c) /= std::max(1, sizes[c]);
  }

  // Final centers always reflect the final assignment.
  centers.setZero();
  std::vector<int> sizes(k, 0);
  for (long i = 0; i < n; ++i) {
    centers.row(assignment[i]) += points.row(i);
    ++sizes[assignment[i]];
  }
  for (int c = 0; c < k; ++c) centers.row(c) /= std::max(1, sizes[c]);
  return {assignment, centers, iters};
}

std::vector<OpinionCluster> make_clusters(const ad::Mat& points,
                                          const KmeansResult& result) {
  const int k = static_cast<int>(result.centers.rows());
  std::vector<OpinionCluster> clusters(k);
  for (int c = 0; c < k; ++c) clusters[c].center = result.centers.row(c);
  for (long i = 0; i < points.rows(); ++i) {
    clusters[result.assignment[i]].members.push_back(static_cast<int>(i));
  }
  for (auto& cl : clusters) {
    for (int m : cl.members)
      cl.inertia += (points.row(m) - cl.center).squaredNorm();
  }
  return clusters;
}

std::vector<OpinionCluster> rank_clusters(std::vector<OpinionCluster> clusters) {
  auto lowest_member = [](const OpinionCluster& c) {
    return c.members.empty() ? std::numeric_limits<int>::max()
                             : *std::min_element(c.members.begin(), c.members.end());
  };
  std::stable_sort(clusters.begin(), clusters.end(),
                   [&](const OpinionCluster& a, const OpinionCluster& b) {
                     if (a.members.size() != b.members.size())
                       return a.members.size() > b.members.size();
                     if (a.inertia != b.inertia) return a.inertia < b.inertia;
                     return lowest_member(a) < lowest_member(b);
                   });
  for (std::size_t i = 0; i < clusters.size(); ++i)
    clusters[i].rank = static_cast<int>(i) + 1;
  return clusters;
}

std::vector<int> rank_within_cluster(const OpinionCluster& cluster,
                                     const ad::Mat& points) {
  std::vector<int> order = cluster.members;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = (points.row(a) - cluster.center).squaredNorm();
    const double db = (points.row(b) - cluster.center).squaredNorm();
    if (da != db) return da < db;
    return a < b;
  });
  return order;
}

RankedMemory flatten_memory(const std::vector<OpinionCluster>& ranked,
                            const std::vector<int>& review_lengths) {
  RankedMemory mem;
  for (const auto& cl : ranked) {
    for (int r : cl.members) {
      mem.review_order.push_back(r);
      for (int p = 0; p < review_lengths.at(r); ++p) {
        mem.word_review.push_back(r);
        mem.word_position.push_back(p);
        mem.word_cluster_rank.push_back(cl.rank);
      }
    }
    mem.boundaries.push_back(static_cast<int>(mem.word_review.size()));
    mem.cluster_sizes.push_back(static_cast<int>(cl.members.size()));
  }
  mem.total_words = static_cast<int>(mem.word_review.size());
  return mem;
}

ad::Value assemble_memory(const RankedMemory& plan,
                          const std::vector<ad::Value>& review_words) {
  std::vector<ad::Value> blocks;
  blocks.reserve(plan.review_order.size());
  for (int r : plan.review_order) blocks.push_back(review_words.at(r));
  return ad::concat_rows(blocks);
}

std::vector<OpinionCluster> cluster_and_rank(const ad::Mat& weighted_pooled,
                                             int k, std::uint64_t seed) {
  auto result = kmeans(weighted_pooled, k, seed);
  auto clusters = rank_clusters(make_clusters(weighted_pooled, result));
  for (auto& cl : clusters) cl.members = rank_within_cluster(cl, weighted_pooled);
  return clusters;
}

}  // namespace aot
