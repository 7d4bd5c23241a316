#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "aot/rng.hpp"

namespace aot::ad {

using Mat = Eigen::MatrixXd;

// One node of the dynamically-built computation graph. Creation order (seq)
// is a topological order, so backward() just replays nodes in reverse.
struct Node {
  Mat val;
  Mat grad;  // allocated lazily, same shape as val
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> back;  // pulls this->grad into parents
  std::uint64_t seq = 0;
  bool needs_grad = false;
  bool grad_alloc = false;

  Mat& g() {
    if (!grad_alloc) {
      grad = Mat::Zero(val.rows(), val.cols());
      grad_alloc = true;
    }
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

// Value is a cheap shared handle on a Node; all ops below are functional.
class Value {
 public:
  Value() = default;
  explicit Value(NodePtr n) : n_(std::move(n)) {}

  static Value constant(Mat m);
  static Value scalar(double s) { return constant(Mat::Constant(1, 1, s)); }

  bool defined() const { return n_ != nullptr; }
  const Mat& v() const { return n_->val; }
  const Mat& grad() const { return n_->grad; }
  Eigen::Index rows() const { return n_->val.rows(); }
  Eigen::Index cols() const { return n_->val.cols(); }
  double item() const;  // 1x1 only
  bool needs_grad() const { return n_->needs_grad; }
  const NodePtr& node() const { return n_; }

 private:
  NodePtr n_;
};

// --- graph construction helpers -------------------------------------------

NodePtr make_node(Mat val, std::vector<NodePtr> parents,
                  std::function<void(Node&)> back);

// Runs reverse accumulation from a 1x1 root. Parameter gradients accumulate;
// call ParamStore::zero_grad between steps.
void backward(const Value& root);

// --- arithmetic ------------------------------------------------------------

Value add(const Value& a, const Value& b);           // same shape
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);           // elementwise
Value neg(const Value& a);
Value cmul(const Value& a, double k);
Value cadd(const Value& a, double k);
Value rsub(double k, const Value& a);                // k - a
Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);

inline Value operator+(const Value& a, const Value& b) { return add(a, b); }
inline Value operator-(const Value& a, const Value& b) { return sub(a, b); }
inline Value operator*(const Value& a, const Value& b) { return mul(a, b); }

// --- elementwise nonlinearities ---------------------------------------------

Value sigmoid(const Value& a);
Value tanh_v(const Value& a);
Value relu(const Value& a);
Value exp_v(const Value& a);
Value log_v(const Value& a);
Value pow_const(const Value& a, double p);
Value clamp(const Value& a, double lo, double hi);  // zero grad outside [lo,hi]

// --- reductions & shape ------------------------------------------------------

Value sum(const Value& a);        // 1x1
Value mean_all(const Value& a);   // 1x1
Value row_sum(const Value& a);    // (n,d) -> (n,1)
Value col_sum(const Value& a);    // (n,d) -> (1,d)
Value col_mean(const Value& a);   // (n,d) -> (1,d)
Value max_rows(const Value& a);   // (n,d) -> (1,d), colwise max, first argmax
Value bcast_col(const Value& a, Eigen::Index d);  // (n,1) -> (n,d)
Value bcast_row(const Value& a, Eigen::Index n);  // (1,d) -> (n,d)
Value concat_rows(const std::vector<Value>& parts);
Value concat_cols(const std::vector<Value>& parts);
Value slice_rows(const Value& a, Eigen::Index r0, Eigen::Index n);
Value slice_cols(const Value& a, Eigen::Index c0, Eigen::Index n);

// --- broadcasted combinations ------------------------------------------------

Value add_rowvec(const Value& a, const Value& b);  // (n,d) + (1,d)
Value mul_rowvec(const Value& a, const Value& b);  // (n,d) .* (1,d)
Value sub_colvec(const Value& a, const Value& b);  // (n,d) - (n,1)
Value mul_colvec(const Value& a, const Value& b);  // (n,d) .* (n,1)

// --- indexed access -----------------------------------------------------------

// out.row(i) = a.row(idx[i]); duplicate indices accumulate gradient.
Value gather_rows(const Value& a, const std::vector<int>& idx);
// out(i,0) = a(rows[i], cols[i])
Value pick(const Value& a, const std::vector<int>& rows,
           const std::vector<int>& cols);
// out(:, ids[s]) += a(:, s); out has `width` columns.
Value scatter_cols(const Value& a, const std::vector<int>& ids,
                   Eigen::Index width);
Value pad_cols(const Value& a, Eigen::Index width);  // zero-extend columns

// --- structured ops ------------------------------------------------------------

Value softmax_rows(const Value& a);
// Per-row affine normalization: gamma, beta are (1,d).
Value layer_norm_rows(const Value& a, const Value& gamma, const Value& beta,
                      double eps = 1e-6);
// Inverted dropout; identity when !train or keep >= 1.
Value dropout(const Value& a, double keep, Rng& rng, bool train);

// --- parameters ------------------------------------------------------------------

// Named trainable tensors in registration order. Flat indexing spans
// parameters in that order, row-major within each matrix.
class ParamStore {
 public:
  Value create(const std::string& name, Mat init);
  Value get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  Mat& value_of(const std::string& name);
  Mat& grad_of(const std::string& name);

  void zero_grad();
  std::size_t total_size() const;
  double get_flat(std::size_t i) const;
  void set_flat(std::size_t i, double x);
  double grad_flat(std::size_t i) const;

  // Global gradient norm over all parameters; scales down if above max_norm.
  double clip_grad_norm(double max_norm);

 private:
  std::pair<Node*, std::size_t> locate(std::size_t i) const;
  std::map<std::string, NodePtr> params_;
  std::vector<std::string> order_;
};

}  // namespace aot::ad
