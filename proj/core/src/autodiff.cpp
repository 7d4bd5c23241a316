#include "aot/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace aot::ad {

namespace {
std::atomic<std::uint64_t> g_seq{1};

void acc(const NodePtr& p, const Mat& d) {
  if (p->needs_grad) p->g() += d;
}
}  // namespace

NodePtr make_node(Mat val, std::vector<NodePtr> parents,
                  std::function<void(Node&)> back) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  n->back = std::move(back);
  n->seq = g_seq.fetch_add(1);
  for (const auto& p : n->parents) {
    if (p->needs_grad) {
      n->needs_grad = true;
      break;
    }
  }
  return n;
}

Value Value::constant(Mat m) {
  auto n = std::make_shared<Node>();
  n->val = std::move(m);
  n->seq = g_seq.fetch_add(1);
  return Value(n);
}

double Value::item() const {
  if (rows() != 1 || cols() != 1) throw std::logic_error("item(): not scalar");
  return n_->val(0, 0);
}

void backward(const Value& root) {
  if (root.rows() != 1 || root.cols() != 1)
    throw std::logic_error("backward(): root must be 1x1");
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node().get()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    topo.push_back(n);
    for (const auto& p : n->parents) {
      if (p->needs_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(topo.begin(), topo.end(),
            [](const Node* a, const Node* b) { return a->seq > b->seq; });
  root.node()->g()(0, 0) += 1.0;
  for (Node* n : topo) {
    if (n->back && n->grad_alloc) n->back(*n);
  }
}

// --- arithmetic ------------------------------------------------------------

Value add(const Value& a, const Value& b) {
  return Value(make_node(a.v() + b.v(), {a.node(), b.node()}, [](Node& n) {
    acc(n.parents[0], n.grad);
    acc(n.parents[1], n.grad);
  }));
}

Value sub(const Value& a, const Value& b) {
  return Value(make_node(a.v() - b.v(), {a.node(), b.node()}, [](Node& n) {
    acc(n.parents[0], n.grad);
    if (n.parents[1]->needs_grad) n.parents[1]->g() -= n.grad;
  }));
}

Value mul(const Value& a, const Value& b) {
  return Value(make_node(a.v().cwiseProduct(b.v()), {a.node(), b.node()},
                         [](Node& n) {
                           acc(n.parents[0], n.grad.cwiseProduct(n.parents[1]->val));
                           acc(n.parents[1], n.grad.cwiseProduct(n.parents[0]->val));
                         }));
}

Value neg(const Value& a) { return cmul(a, -1.0); }

Value cmul(const Value& a, double k) {
  return Value(make_node(a.v() * k, {a.node()}, [k](Node& n) {
    acc(n.parents[0], n.grad * k);
  }));
}

Value cadd(const Value& a, double k) {
  return Value(make_node(a.v().array() + k, {a.node()}, [](Node& n) {
    acc(n.parents[0], n.grad);
  }));
}

Value rsub(double k, const Value& a) {
  return Value(make_node((k - a.v().array()).matrix(), {a.node()}, [](Node& n) {
    if (n.parents[0]->needs_grad) n.parents[0]->g() -= n.grad;
  }));
}

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows()) throw std::logic_error("matmul: shape mismatch");
  return Value(make_node(a.v() * b.v(), {a.node(), b.node()}, [](Node& n) {
    acc(n.parents[0], n.grad * n.parents[1]->val.transpose());
    acc(n.parents[1], n.parents[0]->val.transpose() * n.grad);
  }));
}

Value transpose(const Value& a) {
  return Value(make_node(a.v().transpose(), {a.node()}, [](Node& n) {
    acc(n.parents[0], n.grad.transpose());
  }));
}

// --- elementwise -------------------------------------------------------------

Value sigmoid(const Value& a) {
  Mat y = (1.0 / (1.0 + (-a.v().array()).exp())).matrix();
  return Value(make_node(std::move(y), {a.node()}, [](Node& n) {
    const auto& y = n.val.array();
    acc(n.parents[0], (n.grad.array() * y * (1.0 - y)).matrix());
  }));
}

Value tanh_v(const Value& a) {
  Mat y = a.v().array().tanh().matrix();
  return Value(make_node(std::move(y), {a.node()}, [](Node& n) {
    const auto& y = n.val.array();
    acc(n.parents[0], (n.grad.array() * (1.0 - y * y)).matrix());
  }));
}

Value relu(const Value& a) {
  Mat y = a.v().cwiseMax(0.0);
  return Value(make_node(std::move(y), {a.node()}, [](Node& n) {
    Mat d = (n.parents[0]->val.array() > 0.0).cast<double>().matrix();
    acc(n.parents[0], n.grad.cwiseProduct(d));
  }));
}

Value exp_v(const Value& a) {
  Mat y = a.v().array().exp().matrix();
  return Value(make_node(std::move(y), {a.node()}, [](Node& n) {
    acc(n.parents[0], n.grad.cwiseProduct(n.val));
  }));
}

Value log_v(const Value& a) {
  Mat y = a.v().array().log().matrix();
  return Value(make_node(std::move(y), {a.node()}, [](Node& n) {
    acc(n.parents[0], n.grad.cwiseQuotient(n.parents[0]->val));
  }));
}

Value pow_const(const Value& a, double p) {
  Mat y = a.v().array().pow(p).matrix();
  return Value(make_node(std::move(y), {a.node()}, [p](Node& n) {
    Mat d = p * n.parents[0]->val.array().pow(p - 1.0);
    acc(n.parents[0], n.grad.cwiseProduct(d));
  }));
}

Value clamp(const Value& a, double lo, double hi) {
  Mat y = a.v().cwiseMax(lo).cwiseMin(hi);
  return Value(make_node(std::move(y), {a.node()}, [lo, hi](Node& n) {
    const auto& x = n.parents[0]->val.array();
    Mat pass = ((x >= lo) && (x <= hi)).cast<double>().matrix();
    acc(n.parents[0], n.grad.cwiseProduct(pass));
  }));
}

// --- reductions & shape ---------------------------------------------------------

Value sum(const Value& a) {
  return Value(make_node(Mat::Constant(1, 1, a.v().sum()), {a.node()},
                         [](Node& n) {
                           if (n.parents[0]->needs_grad)
                             n.parents[0]->g().array() += n.grad(0, 0);
                         }));
}

Value mean_all(const Value& a) {
  const double inv = 1.0 / static_cast<double>(a.rows() * a.cols());
  return Value(make_node(Mat::Constant(1, 1, a.v().mean()), {a.node()},
                         [inv](Node& n) {
                           if (n.parents[0]->needs_grad)
                             n.parents[0]->g().array() += n.grad(0, 0) * inv;
                         }));
}

Value row_sum(const Value& a) {
  Mat y = a.v().rowwise().sum();
  return Value(make_node(std::move(y), {a.node()}, [](Node& n) {
    if (n.parents[0]->needs_grad)
      n.parents[0]->g() += n.grad.replicate(1, n.parents[0]->val.cols());
  }));
}

Value col_sum(const Value& a) {
  Mat y = a.v().colwise().sum();
  return Value(make_node(std::move(y), {a.node()}, [](Node& n) {
    if (n.parents[0]->needs_grad)
      n.parents[0]->g() += n.grad.replicate(n.parents[0]->val.rows(), 1);
  }));
}

Value col_mean(const Value& a) {
  const double inv = 1.0 / static_cast<double>(a.rows());
  Mat y = a.v().colwise().mean();
  return Value(make_node(std::move(y), {a.node()}, [inv](Node& n) {
    if (n.parents[0]->needs_grad)
      n.parents[0]->g() +=
          inv * n.grad.replicate(n.parents[0]->val.rows(), 1);
  }));
}

Value max_rows(const Value& a) {
  const Eigen::Index nr = a.rows(), nc = a.cols();
  Mat y(1, nc);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(nc));
  for (Eigen::Index c = 0; c < nc; ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < nr; ++r)
      if (a.v()(r, c) > a.v()(best, c)) best = r;
    arg[static_cast<std::size_t>(c)] = best;
    y(0, c) = a.v()(best, c);
  }
  return Value(make_node(std::move(y), {a.node()}, [arg](Node& n) {
    if (!n.parents[0]->needs_grad) return;
    Mat& g = n.parents[0]->g();
    for (Eigen::Index c = 0; c < n.val.cols(); ++c)
      g(arg[static_cast<std::size_t>(c)], c) += n.grad(0, c);
  }));
}

Value bcast_col(const Value& a, Eigen::Index d) {
  if (a.cols() != 1) throw std::logic_error("bcast_col: need (n,1)");
  return Value(make_node(a.v().replicate(1, d), {a.node()}, [](Node& n) {
    acc(n.parents[0], n.grad.rowwise().sum());
  }));
}

Value bcast_row(const Value& a, Eigen::Index n_rows) {
  if (a.rows() != 1) throw std::logic_error("bcast_row: need (1,d)");
  return Value(make_node(a.v().replicate(n_rows, 1), {a.node()}, [](Node& n) {
    acc(n.parents[0], n.grad.colwise().sum());
  }));
}

Value concat_rows(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::logic_error("concat_rows: empty");
  Eigen::Index total = 0;
  const Eigen::Index d = parts.front().cols();
  std::vector<NodePtr> ps;
  for (const auto& p : parts) {
    if (p.cols() != d) throw std::logic_error("concat_rows: col mismatch");
    total += p.rows();
    ps.push_back(p.node());
  }
  Mat y(total, d);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    y.middleRows(r, p.rows()) = p.v();
    r += p.rows();
  }
  return Value(make_node(std::move(y), std::move(ps), [](Node& n) {
    Eigen::Index r = 0;
    for (auto& p : n.parents) {
      acc(p, n.grad.middleRows(r, p->val.rows()));
      r += p->val.rows();
    }
  }));
}

Value concat_cols(const std::vector<Value>& parts) {
  if (parts.empty()) throw std::logic_error("concat_cols: empty");
  Eigen::Index total = 0;
  const Eigen::Index nr = parts.front().rows();
  std::vector<NodePtr> ps;
  for (const auto& p : parts) {
    if (p.rows() != nr) throw std::logic_error("concat_cols: row mismatch");
    total += p.cols();
    ps.push_back(p.node());
  }
  Mat y(nr, total);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    y.middleCols(c, p.cols()) = p.v();
    c += p.cols();
  }
  return Value(make_node(std::move(y), std::move(ps), [](Node& n) {
    Eigen::Index c = 0;
    for (auto& p : n.parents) {
      acc(p, n.grad.middleCols(c, p->val.cols()));
      c += p->val.cols();
    }
  }));
}

Value slice_rows(const Value& a, Eigen::Index r0, Eigen::Index n_rows) {
  return Value(
      make_node(a.v().middleRows(r0, n_rows), {a.node()}, [r0](Node& n) {
        if (n.parents[0]->needs_grad)
          n.parents[0]->g().middleRows(r0, n.val.rows()) += n.grad;
      }));
}

Value slice_cols(const Value& a, Eigen::Index c0, Eigen::Index n_cols) {
  return Value(
      make_node(a.v().middleCols(c0, n_cols), {a.node()}, [c0](Node& n) {
        if (n.parents[0]->needs_grad)
          n.parents[0]->g().middleCols(c0, n.val.cols()) += n.grad;
      }));
}

// --- broadcasted combinations ------------------------------------------------------

Value add_rowvec(const Value& a, const Value& b) {
  if (b.rows() != 1 || b.cols() != a.cols())
    throw std::logic_error("add_rowvec: shape");
  Mat y = a.v().rowwise() + b.v().row(0);
  return Value(make_node(std::move(y), {a.node(), b.node()}, [](Node& n) {
    acc(n.parents[0], n.grad);
    acc(n.parents[1], n.grad.colwise().sum());
  }));
}

Value mul_rowvec(const Value& a, const Value& b) {
  if (b.rows() != 1 || b.cols() != a.cols())
    throw std::logic_error("mul_rowvec: shape");
  Mat y = a.v().array().rowwise() * b.v().row(0).array();
  return Value(make_node(std::move(y), {a.node(), b.node()}, [](Node& n) {
    const Mat& av = n.parents[0]->val;
    const Mat& bv = n.parents[1]->val;
    acc(n.parents[0], (n.grad.array().rowwise() * bv.row(0).array()).matrix());
    acc(n.parents[1], n.grad.cwiseProduct(av).colwise().sum());
  }));
}

Value sub_colvec(const Value& a, const Value& b) {
  if (b.cols() != 1 || b.rows() != a.rows())
    throw std::logic_error("sub_colvec: shape");
  Mat y = a.v().colwise() - b.v().col(0);
  return Value(make_node(std::move(y), {a.node(), b.node()}, [](Node& n) {
    acc(n.parents[0], n.grad);
    if (n.parents[1]->needs_grad) n.parents[1]->g() -= n.grad.rowwise().sum();
  }));
}

Value mul_colvec(const Value& a, const Value& b) {
  if (b.cols() != 1 || b.rows() != a.rows())
    throw std::logic_error("mul_colvec: shape");
  Mat y = a.v().array().colwise() * b.v().col(0).array();
  return Value(make_node(std::move(y), {a.node(), b.node()}, [](Node& n) {
    const Mat& av = n.parents[0]->val;
    const Mat& bv = n.parents[1]->val;
    acc(n.parents[0], (n.grad.array().colwise() * bv.col(0).array()).matrix());
    acc(n.parents[1], n.grad.cwiseProduct(av).rowwise().sum());
  }));
}

// --- indexed access -------------------------------------------------------------------

Value gather_rows(const Value& a, const std::vector<int>& idx) {
  Mat y(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a.rows())
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[i]));
    y.row(static_cast<Eigen::Index>(i)) = a.v().row(idx[i]);
  }
  return Value(make_node(std::move(y), {a.node()}, [idx](Node& n) {
    if (!n.parents[0]->needs_grad) return;
    Mat& g = n.parents[0]->g();
    for (std::size_t i = 0; i < idx.size(); ++i)
      g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  }));
}

Value pick(const Value& a, const std::vector<int>& rows,
           const std::vector<int>& cols) {
  if (rows.size() != cols.size()) throw std::logic_error("pick: size mismatch");
  Mat y(static_cast<Eigen::Index>(rows.size()), 1);
  for (std::size_t i = 0; i < rows.size(); ++i)
    y(static_cast<Eigen::Index>(i), 0) = a.v()(rows[i], cols[i]);
  return Value(make_node(std::move(y), {a.node()}, [rows, cols](Node& n) {
    if (!n.parents[0]->needs_grad) return;
    Mat& g = n.parents[0]->g();
    for (std::size_t i = 0; i < rows.size(); ++i)
      g(rows[i], cols[i]) += n.grad(static_cast<Eigen::Index>(i), 0);
  }));
}

Value scatter_cols(const Value& a, const std::vector<int>& ids,
                   Eigen::Index width) {
  if (static_cast<Eigen::Index>(ids.size()) != a.cols())
    throw std::logic_error("scatter_cols: ids size");
  Mat y = Mat::Zero(a.rows(), width);
  for (std::size_t s = 0; s < ids.size(); ++s) {
    if (ids[s] < 0 || ids[s] >= width)
      throw std::out_of_range("scatter_cols: id out of range");
    y.col(ids[s]) += a.v().col(static_cast<Eigen::Index>(s));
  }
  return Value(make_node(std::move(y), {a.node()}, [ids](Node& n) {
    if (!n.parents[0]->needs_grad) return;
    Mat& g = n.parents[0]->g();
    for (std::size_t s = 0; s < ids.size(); ++s)
      g.col(static_cast<Eigen::Index>(s)) += n.grad.col(ids[s]);
  }));
}

Value pad_cols(const Value& a, Eigen::Index width) {
  if (width < a.cols()) throw std::logic_error("pad_cols: narrower than input");
  Mat y = Mat::Zero(a.rows(), width);
  y.leftCols(a.cols()) = a.v();
  return Value(make_node(std::move(y), {a.node()}, [](Node& n) {
    acc(n.parents[0], n.grad.leftCols(n.parents[0]->val.cols()));
  }));
}

// --- structured ops ------------------------------------------------------------------

Value softmax_rows(const Value& a) {
  Mat y(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double m = a.v().row(r).maxCoeff();
    Eigen::ArrayXd e = (a.v().row(r).array() - m).exp();
    y.row(r) = (e / e.sum()).matrix();
  }
  return Value(make_node(std::move(y), {a.node()}, [](Node& n) {
    if (!n.parents[0]->needs_grad) return;
    const Mat& y = n.val;
    Mat gy = n.grad.cwiseProduct(y);
    Eigen::VectorXd dot = gy.rowwise().sum();
    Mat dx = gy - (y.array().colwise() * dot.array()).matrix();
    n.parents[0]->g() += dx;
  }));
}

Value layer_norm_rows(const Value& a, const Value& gamma, const Value& beta,
                      double eps) {
  const auto d = a.cols();
  Value mu = cmul(row_sum(a), 1.0 / static_cast<double>(d));
  Value xc = sub_colvec(a, mu);
  Value var = cmul(row_sum(mul(xc, xc)), 1.0 / static_cast<double>(d));
  Value inv = pow_const(cadd(var, eps), -0.5);
  Value norm = mul_colvec(xc, inv);
  return add_rowvec(mul_rowvec(norm, gamma), beta);
}

Value dropout(const Value& a, double keep, Rng& rng, bool train) {
  if (!train || keep >= 1.0) return a;
  if (keep <= 0.0) throw std::logic_error("dropout: keep must be in (0,1]");
  Mat mask(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      mask(r, c) = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  return mul(a, Value::constant(std::move(mask)));
}

// --- ParamStore -----------------------------------------------------------------------

Value ParamStore::create(const std::string& name, Mat init) {
  if (params_.count(name))
    throw std::logic_error("duplicate parameter: " + name);
  auto n = std::make_shared<Node>();
  n->val = std::move(init);
  n->seq = g_seq.fetch_add(1);
  n->needs_grad = true;
  params_[name] = n;
  order_.push_back(name);
  return Value(n);
}

Value ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::logic_error("no parameter: " + name);
  return Value(it->second);
}

bool ParamStore::has(const std::string& name) const {
  return params_.count(name) > 0;
}

Mat& ParamStore::value_of(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::logic_error("no parameter: " + name);
  return it->second->val;
}

Mat& ParamStore::grad_of(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::logic_error("no parameter: " + name);
  return it->second->g();
}

void ParamStore::zero_grad() {
  for (auto& [_, n] : params_) {
    if (n->grad_alloc) n->grad.setZero();
  }
}

std::size_t ParamStore::total_size() const {
  std::size_t t = 0;
  for (const auto& name : order_) {
    const auto& v = params_.at(name)->val;
    t += static_cast<std::size_t>(v.rows() * v.cols());
  }
  return t;
}

std::pair<Node*, std::size_t> ParamStore::locate(std::size_t i) const {
  for (const auto& name : order_) {
    Node* n = params_.at(name).get();
    const auto sz = static_cast<std::size_t>(n->val.rows() * n->val.cols());
    if (i < sz) return {n, i};
    i -= sz;
  }
  throw std::out_of_range("ParamStore flat index");
}

double ParamStore::get_flat(std::size_t i) const {
  auto [n, off] = locate(i);
  const auto c = static_cast<Eigen::Index>(off) % n->val.cols();
  const auto r = static_cast<Eigen::Index>(off) / n->val.cols();
  return n->val(r, c);
}

void ParamStore::set_flat(std::size_t i, double x) {
  auto [n, off] = locate(i);
  const auto c = static_cast<Eigen::Index>(off) % n->val.cols();
  const auto r = static_cast<Eigen::Index>(off) / n->val.cols();
  n->val(r, c) = x;
}

double ParamStore::grad_flat(std::size_t i) const {
  auto [n, off] = locate(i);
  if (!n->grad_alloc) return 0.0;
  const auto c = static_cast<Eigen::Index>(off) % n->val.cols();
  const auto r = static_cast<Eigen::Index>(off) / n->val.cols();
  return n->grad(r, c);
}

double ParamStore::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& name : order_) {
    Node* n = params_.at(name).get();
    if (n->grad_alloc) sq += n->grad.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& name : order_) {
      Node* n = params_.at(name).get();
      if (n->grad_alloc) n->grad *= scale;
    }
  }
  return norm;
}

}  // namespace aot::ad
