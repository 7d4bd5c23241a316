#include "aot/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace aot {

using ad::Mat;
using ad::Value;

namespace {

double glorot(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (fan_in + fan_out));
}

Mat uniform_mat(int rows, int cols, double scale, Rng& rng) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-scale, scale);
  return m;
}

Value maybe_drop(const Value& x, const DropoutCtx& drop) {
  if (!drop.train || drop.rng == nullptr) return x;
  return ad::dropout(x, drop.keep, *drop.rng, true);
}

std::string layer_prefix(const std::string& prefix, int l) {
  return prefix + ".l" + std::to_string(l);
}

}  // namespace

void init_mha(ad::ParamStore& ps, const std::string& prefix, int q_width,
              int kv_width, int head_width, int heads, bool output_proj,
              int out_width, Rng& rng) {
  const int inner = head_width * heads;
  ps.create(prefix + ".wq", uniform_mat(q_width, inner, glorot(q_width, inner), rng));
  ps.create(prefix + ".wk", uniform_mat(kv_width, inner, glorot(kv_width, inner), rng));
  ps.create(prefix + ".wv", uniform_mat(kv_width, inner, glorot(kv_width, inner), rng));
  if (output_proj)
    ps.create(prefix + ".wo",
              uniform_mat(inner, out_width, glorot(inner, out_width), rng));
}

Value multi_head_attention(ad::ParamStore& ps, const std::string& prefix,
                           const Value& q_in, const Value& kv_in,
                           const MhaSpec& spec,
                           std::vector<Value>* attentions) {
  Value q = matmul(q_in, ps.get(prefix + ".wq"));
  Value k = matmul(kv_in, ps.get(prefix + ".wk"));
  Value v = matmul(kv_in, ps.get(prefix + ".wv"));
  const int inner = static_cast<int>(q.cols());
  if (inner % spec.heads != 0)
    throw std::invalid_argument("attention width not divisible by head count");
  const int d_h = inner / spec.heads;

  Value mask;
  if (spec.mask_limits) {
    Mat m = Mat::Zero(q.rows(), k.rows());
    for (long i = 0; i < q.rows(); ++i)
      for (long j = (*spec.mask_limits)[i]; j < k.rows(); ++j) m(i, j) = -1e30;
    mask = Value::constant(m);
  }

  std::vector<Value> heads_out;
  for (int h = 0; h < spec.heads; ++h) {
    Value qh = slice_cols(q, h * d_h, d_h);
    Value kh = slice_cols(k, h * d_h, d_h);
    Value vh = slice_cols(v, h * d_h, d_h);
    Value scores = matmul(qh, transpose(kh));
    if (spec.scale) scores = cmul(scores, 1.0 / std::sqrt(double(d_h)));
    if (mask.defined()) scores = add(scores, mask);
    Value attn = softmax_rows(scores);
    if (attentions) attentions->push_back(attn);
    heads_out.push_back(matmul(attn, vh));
  }
  Value mixed = ad::concat_cols(heads_out);
  if (!spec.output_proj) return mixed;
  return matmul(mixed, ps.get(prefix + ".wo"));
}

void init_encoder_params(ad::ParamStore& ps, const std::string& prefix,
                         const EncoderConfig& cfg, Rng& rng) {
  if (cfg.d_model % cfg.heads != 0)
    throw std::invalid_argument("d_model must be divisible by the head count");
  ps.create(prefix + ".proj.w",
            uniform_mat(cfg.d_e, cfg.d_model, glorot(cfg.d_e, cfg.d_model), rng));
  ps.create(prefix + ".proj.b", Mat::Zero(1, cfg.d_model));
  for (int l = 1; l <= cfg.layers; ++l) {
    const std::string lp = layer_prefix(prefix, l);
    init_mha(ps, lp + ".att", cfg.d_model, cfg.d_model, cfg.d_model / cfg.heads,
             cfg.heads, true, cfg.d_model, rng);
    ps.create(lp + ".ln1.gamma", Mat::Ones(1, cfg.d_model));
    ps.create(lp + ".ln1.beta", Mat::Zero(1, cfg.d_model));
    ps.create(lp + ".ffn.w1",
              uniform_mat(cfg.d_model, cfg.ffn_hidden,
                          glorot(cfg.d_model, cfg.ffn_hidden), rng));
    ps.create(lp + ".ffn.b1", Mat::Zero(1, cfg.ffn_hidden));
    ps.create(lp + ".ffn.w2",
              uniform_mat(cfg.ffn_hidden, cfg.d_model,
                          glorot(cfg.ffn_hidden, cfg.d_model), rng));
    ps.create(lp + ".ffn.b2", Mat::Zero(1, cfg.d_model));
    ps.create(lp + ".ln2.gamma", Mat::Ones(1, cfg.d_model));
    ps.create(lp + ".ln2.beta", Mat::Zero(1, cfg.d_model));
  }
}

Mat positional_encoding(int length, int dim) {
  Mat pe(length, dim);
  for (int p = 0; p < length; ++p) {
    for (int i = 0; i < dim; ++i) {
      const double angle = p / std::pow(10000.0, double(2 * (i / 2)) / dim);
      pe(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Value embed_with_position(ad::ParamStore& ps, const std::string& prefix,
                          const Value& embedding,
                          const std::vector<int>& tokens,
                          const EncoderConfig& cfg, bool use_positions) {
  if (tokens.empty()) throw std::invalid_argument("embed_with_position: empty input");
  for (int id : tokens) {
    if (id < 0 || id >= embedding.rows())
      throw std::out_of_range("token id outside embedding table");
  }
  Value x = gather_rows(embedding, tokens);
  if (use_positions) {
    x = add(x, Value::constant(
                   positional_encoding(static_cast<int>(tokens.size()), cfg.d_e)));
  }
  return add_rowvec(matmul(x, ps.get(prefix + ".proj.w")),
                    ps.get(prefix + ".proj.b"));
}

Value transformer_encode(ad::ParamStore& ps, const std::string& prefix,
                         const Value& x_in, const EncoderConfig& cfg,
                         const DropoutCtx& drop,
                         std::vector<Value>* attentions) {
  Value x = x_in;
  MhaSpec spec;
  spec.heads = cfg.heads;
  spec.scale = true;
  spec.output_proj = true;
  for (int l = 1; l <= cfg.layers; ++l) {
    const std::string lp = layer_prefix(prefix, l);
    Value att = multi_head_attention(ps, lp + ".att", x, x, spec, attentions);
    Value g = layer_norm_rows(add(x, maybe_drop(att, drop)),
                              ps.get(lp + ".ln1.gamma"), ps.get(lp + ".ln1.beta"));
    Value ffn = add_rowvec(
        matmul(relu(add_rowvec(matmul(g, ps.get(lp + ".ffn.w1")),
                               ps.get(lp + ".ffn.b1"))),
               ps.get(lp + ".ffn.w2")),
        ps.get(lp + ".ffn.b2"));
    x = layer_norm_rows(add(g, maybe_drop(ffn, drop)),
                        ps.get(lp + ".ln2.gamma"), ps.get(lp + ".ln2.beta"));
  }
  return x;
}

Value hierarchical_pool(const Value& words, int window) {
  const long l = words.rows();
  if (l <= window) return col_mean(words);
  std::vector<Value> means;
  means.reserve(l - window + 1);
  for (long t = 0; t + window <= l; ++t) {
    means.push_back(cmul(col_sum(slice_rows(words, t, window)), 1.0 / window));
  }
  return max_rows(ad::concat_rows(means));
}

EncodedReview encode_review_words(ad::ParamStore& ps, const std::string& prefix,
                                  const Value& embedding,
                                  const std::vector<int>& tokens,
                                  const EncoderConfig& cfg,
                                  const DropoutCtx& drop,
                                  std::vector<Value>* attentions) {
  Value x = maybe_drop(embed_with_position(ps, prefix, embedding, tokens, cfg), drop);
  Value words = transformer_encode(ps, prefix, x, cfg, drop, attentions);
  return {words, hierarchical_pool(words, cfg.pool_window)};
}

}  // namespace aot
