#include "aot/salience.hpp"

#include <cmath>
#include <stdexcept>

namespace aot {

using ad::Value;

namespace {

double glorot(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

ad::Mat uniform_mat(int rows, int cols, double scale, Rng& rng) {
  ad::Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-scale, scale);
  return m;
}

void init_gru(ad::ParamStore& ps, const std::string& name, int in, int hidden,
              Rng& rng) {
  const double si = glorot(in, hidden);
  const double sh = glorot(hidden, hidden);
  for (const char* gate : {"r", "z", "h"}) {
    ps.create(name + ".w" + gate, uniform_mat(in, hidden, si, rng));
    ps.create(name + ".u" + gate, uniform_mat(hidden, hidden, sh, rng));
    ps.create(name + ".b" + gate, ad::Mat::Zero(1, hidden));
  }
}

struct GruCell {
  Value wr, ur, br, wz, uz, bz, wh, uh, bh;
};

GruCell gru_cell(ad::ParamStore& ps, const std::string& name) {
  return {ps.get(name + ".wr"), ps.get(name + ".ur"), ps.get(name + ".br"),
          ps.get(name + ".wz"), ps.get(name + ".uz"), ps.get(name + ".bz"),
          ps.get(name + ".wh"), ps.get(name + ".uh"), ps.get(name + ".bh")};
}

Value gru_step(const GruCell& p, const Value& x, const Value& h) {
  Value r = sigmoid(add_rowvec(add(matmul(x, p.wr), matmul(h, p.ur)), p.br));
  Value z = sigmoid(add_rowvec(add(matmul(x, p.wz), matmul(h, p.uz)), p.bz));
  Value n = tanh_v(add_rowvec(add(matmul(x, p.wh), matmul(mul(r, h), p.uh)), p.bh));
  return add(mul(z, h), mul(rsub(1.0, z), n));
}

// One masked scan over padded positions. Rows whose review ends before a
// position keep their previous state, so the held state after the loop is
// each review's last (forward) or first (backward) real state.
std::vector<Value> gru_scan(const GruCell& cell,
                            const std::vector<Value>& inputs,
                            const std::vector<ad::Mat>& masks, int hidden,
                            bool backward) {
  const int steps = static_cast<int>(inputs.size());
  const long m = inputs[0].v().rows();
  Value h = Value::constant(ad::Mat::Zero(m, hidden));
  std::vector<Value> states(steps, h);
  for (int s = 0; s < steps; ++s) {
    const int t = backward ? steps - 1 - s : s;
    Value h_new = gru_step(cell, inputs[t], h);
    Value mask = Value::constant(masks[t]);
    Value keep = Value::constant(ad::Mat::Ones(m, 1) - masks[t]);
    h = add(mul_colvec(h_new, mask), mul_colvec(h, keep));
    states[t] = h;
  }
  return states;
}

}  // namespace

void init_salience_params(ad::ParamStore& ps, const std::string& prefix,
                          const SalienceConfig& cfg, Rng& rng) {
  const int hidden = cfg.d / 2;
  for (int l = 1; l <= cfg.layers; ++l) {
    const int in = (l == 1) ? cfg.d_e : cfg.d;
    for (const char* dir : {"f", "b"}) {
      init_gru(ps, prefix + ".gru.l" + std::to_string(l) + "." + dir, in,
               hidden, rng);
    }
  }
  const double sa = glorot(cfg.d, cfg.d);
  ps.create(prefix + ".att.wq", uniform_mat(cfg.d, cfg.d, sa, rng));
  ps.create(prefix + ".att.wk", uniform_mat(cfg.d, cfg.d, sa, rng));
  ps.create(prefix + ".att.wv", uniform_mat(cfg.d, cfg.d, sa, rng));
  ps.create(prefix + ".ffn.w_in",
            uniform_mat(cfg.d, cfg.ffn_hidden, glorot(cfg.d, cfg.ffn_hidden), rng));
  ps.create(prefix + ".ffn.w_out",
            uniform_mat(cfg.ffn_hidden, cfg.d, glorot(cfg.ffn_hidden, cfg.d), rng));
  ps.create(prefix + ".score.w", uniform_mat(cfg.d, 1, glorot(cfg.d, 1), rng));
  ps.create(prefix + ".score.b", ad::Mat::Zero(1, 1));
}

Value encode_reviews(ad::ParamStore& ps, const std::string& prefix,
                     const Value& embedding,
                     const std::vector<std::vector<int>>& reviews,
                     const SalienceConfig& cfg) {
  const int m = static_cast<int>(reviews.size());
  if (m == 0) throw std::invalid_argument("encode_reviews: no reviews");
  int l_max = 0;
  for (const auto& r : reviews) {
    if (r.empty()) throw std::invalid_argument("encode_reviews: empty review");
    l_max = std::max(l_max, static_cast<int>(r.size()));
  }
  const int hidden = cfg.d / 2;

  // Padded inputs and per-position presence masks.
  std::vector<Value> inputs(l_max);
  std::vector<ad::Mat> masks(l_max);
  for (int t = 0; t < l_max; ++t) {
    std::vector<int> ids(m, 0);
    ad::Mat mask = ad::Mat::Zero(m, 1);
    for (int i = 0; i < m; ++i) {
      if (t < static_cast<int>(reviews[i].size())) {
        ids[i] = reviews[i][t];
        mask(i, 0) = 1.0;
      }
    }
    inputs[t] = gather_rows(embedding, ids);
    masks[t] = mask;
  }

  Value fwd_last, bwd_first;
  for (int l = 1; l <= cfg.layers; ++l) {
    const std::string base = prefix + ".gru.l" + std::to_string(l);
    auto fwd = gru_scan(gru_cell(ps, base + ".f"), inputs, masks, hidden, false);
    auto bwd = gru_scan(gru_cell(ps, base + ".b"), inputs, masks, hidden, true);
    fwd_last = fwd[l_max - 1];  // masked scan holds each row's final state
    bwd_first = bwd[0];
    for (int t = 0; t < l_max; ++t) inputs[t] = ad::concat_cols({fwd[t], bwd[t]});
  }
  return ad::concat_cols({fwd_last, bwd_first});
}

SelfAttention self_attend(ad::ParamStore& ps, const std::string& prefix,
                          const Value& h, const SalienceConfig& cfg) {
  Value q = matmul(h, ps.get(prefix + ".att.wq"));
  Value k = matmul(h, ps.get(prefix + ".att.wk"));
  Value v = matmul(h, ps.get(prefix + ".att.wv"));
  Value scores = matmul(q, transpose(k));
  if (cfg.scaled_attention) scores = cmul(scores, 1.0 / std::sqrt(double(cfg.d)));
  Value attention = softmax_rows(scores);
  return {matmul(attention, v), attention};
}

Value salience_score(ad::ParamStore& ps, const std::string& prefix,
                     const Value& h, const Value& context) {
  Value mixed = add(h, context);
  Value hp = matmul(relu(matmul(mixed, ps.get(prefix + ".ffn.w_in"))),
                    ps.get(prefix + ".ffn.w_out"));
  return sigmoid(add_rowvec(matmul(hp, ps.get(prefix + ".score.w")),
                            ps.get(prefix + ".score.b")));
}

SalienceResult salience_forward(ad::ParamStore& ps, const std::string& prefix,
                                const Value& embedding,
                                const std::vector<std::vector<int>>& reviews,
                                const SalienceConfig& cfg) {
  Value h = encode_reviews(ps, prefix, embedding, reviews, cfg);
  auto att = self_attend(ps, prefix, h, cfg);
  Value z = salience_score(ps, prefix, h, att.context);
  return {h, att.context, att.attention, z};
}

Value salience_loss(const Value& scores, const std::vector<int>& labels) {
  const long m = scores.v().rows();
  if (m != static_cast<long>(labels.size()))
    throw std::invalid_argument("salience_loss: score/label length mismatch");
  ad::Mat y(m, 1);
  for (long i = 0; i < m; ++i) y(i, 0) = labels[i];
  Value target = Value::constant(y);
  const double eps = 1e-12;
  Value z = clamp(scores, eps, 1.0 - eps);
  Value ll = add(mul(target, log_v(z)),
                 mul(rsub(1.0, target), log_v(rsub(1.0, z))));
  return neg(mean_all(ll));
}

}  // namespace aot
