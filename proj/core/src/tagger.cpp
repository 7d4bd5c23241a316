#include "aot/tagger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
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

int embed_row(int ext_id, long table_rows) {
  if (ext_id < 0) throw std::out_of_range("negative token id");
  return ext_id < table_rows ? ext_id : Vocabulary::kUnk;
}

// The two terminal markers can push j past the table; they reuse the last row.
int aln_row(int j, int max_tags) { return std::min(j, max_tags); }

bool in_foc(const FocSpec& spec, int rank) {
  return std::binary_search(spec.foc.begin(), spec.foc.end(), rank);
}

}  // namespace

TagSequence prepare_targets(const std::vector<std::vector<std::string>>& gold,
                            const ExtendedVocab& ev) {
  TagSequence seq;
  auto push = [&seq](int tok, int j, int q) {
    seq.tokens.push_back(tok);
    seq.tag_index.push_back(j);
    seq.within_pos.push_back(q);
  };
  int j = 0;
  for (const auto& tag : gold) {
    if (tag.empty()) throw std::invalid_argument("prepare_targets: empty tag");
    ++j;
    push(Vocabulary::kBos, j, 0);
    int q = 0;
    for (const auto& word : tag) push(ev.ext_id(word), j, ++q);
  }
  push(Vocabulary::kBos, j + 1, 0);
  push(Vocabulary::kBos, j + 2, 0);
  return seq;
}

std::vector<std::vector<std::string>> segment_tags(const std::vector<int>& tokens,
                                                   const ExtendedVocab& ev) {
  std::vector<std::vector<std::string>> tags;
  std::vector<std::string> current;
  auto flush = [&] {
    if (!current.empty()) tags.push_back(std::move(current));
    current.clear();
  };
  for (int tok : tokens) {
    if (tok == Vocabulary::kBos) {
      flush();
    } else {
      current.push_back(ev.token(tok));
    }
  }
  flush();
  return tags;
}

FocSpec foc_set(int j, int k, int f) {
  if (j < 1 || k < 1) throw std::invalid_argument("foc_set: indices start at 1");
  if (f < 1 || f % 2 == 0) throw std::invalid_argument("foc_set: window must be odd");
  const int want = std::min(f, k);
  int lo, hi;
  if (j > k) {
    lo = k - want + 1;
    hi = k;
  } else {
    lo = std::max(j - f / 2, 1);
    hi = std::min(j + f / 2, k);
    while (hi - lo + 1 < want) {
      if (lo > 1)
        --lo;
      else
        ++hi;
    }
  }
  FocSpec spec;
  spec.j = j;
  spec.f = f;
  for (int r = 1; r <= k; ++r) {
    if (r >= lo && r <= hi)
      spec.foc.push_back(r);
    else
      spec.ooc.push_back(r);
  }
  return spec;
}

void init_tagger_params(ad::ParamStore& ps, const std::string& prefix,
                        const TaggerConfig& cfg, int vocab_size, Rng& rng) {
  if (cfg.d_e % cfg.heads != 0)
    throw std::invalid_argument("decoder width must be divisible by head count");
  const int d_h = cfg.d_e / cfg.heads;
  ps.create(prefix + ".aln.table",
            uniform_mat(cfg.max_tags + 1, cfg.d_e,
                        glorot(cfg.max_tags + 1, cfg.d_e), rng));
  ps.create(prefix + ".aln.wrt",
            uniform_mat(cfg.d_e, cfg.d_e, glorot(cfg.d_e, cfg.d_e), rng));
  ps.create(prefix + ".aln.wrc",
            uniform_mat(cfg.d_e, cfg.d_model, glorot(cfg.d_e, cfg.d_model), rng));
  for (int l = 1; l <= cfg.layers; ++l) {
    const std::string lp = layer_prefix(prefix, l);
    init_mha(ps, lp + ".self", cfg.d_e, cfg.d_e, d_h, cfg.heads, true, cfg.d_e,
             rng);
    ps.create(lp + ".ln1.gamma", Mat::Ones(1, cfg.d_e));
    ps.create(lp + ".ln1.beta", Mat::Zero(1, cfg.d_e));
    init_mha(ps, lp + ".cross", cfg.d_e, cfg.d_model, d_h, cfg.heads, false,
             cfg.d_e, rng);
    ps.create(lp + ".ln2.gamma", Mat::Ones(1, cfg.d_e));
    ps.create(lp + ".ln2.beta", Mat::Zero(1, cfg.d_e));
    ps.create(lp + ".ffn.w1",
              uniform_mat(cfg.d_e, cfg.ffn_hidden,
                          glorot(cfg.d_e, cfg.ffn_hidden), rng));
    ps.create(lp + ".ffn.b1", Mat::Zero(1, cfg.ffn_hidden));
    ps.create(lp + ".ffn.w2",
              uniform_mat(cfg.ffn_hidden, cfg.d_e,
                          glorot(cfg.ffn_hidden, cfg.d_e), rng));
    ps.create(lp + ".ffn.b2", Mat::Zero(1, cfg.d_e));
    ps.create(lp + ".ln3.gamma", Mat::Ones(1, cfg.d_e));
    ps.create(lp + ".ln3.beta", Mat::Zero(1, cfg.d_e));
  }
  ps.create(prefix + ".out.w",
            uniform_mat(cfg.d_e, vocab_size, glorot(cfg.d_e, vocab_size), rng));
  ps.create(prefix + ".out.b", Mat::Zero(1, vocab_size));
  // Zero gate weights open the copy/generate mixture at exactly one half.
  ps.create(prefix + ".gate.w", Mat::Zero(cfg.d_e, 1));
  ps.create(prefix + ".gate.b", Mat::Zero(1, 1));
}

Value embed_target_token(ad::ParamStore& ps, const std::string& prefix,
                         const Value& embedding, int token_ext_id, int j,
                         int global_pos, const TaggerConfig& cfg) {
  if (j < 1 || j > cfg.max_tags)
    throw std::out_of_range("tag index outside alignment table");
  if (global_pos < 0) throw std::out_of_range("negative sequence position");
  Value x = gather_rows(embedding, {embed_row(token_ext_id, embedding.rows())});
  Mat pos = positional_encoding(global_pos + 1, cfg.d_e);
  x = add(x, Value::constant(Mat(pos.row(global_pos))));
  if (cfg.alignment_features) {
    Value aln = gather_rows(ps.get(prefix + ".aln.table"), {j});
    x = add(x, matmul(aln, ps.get(prefix + ".aln.wrt")));
  }
  return x;
}

Value align_memory(ad::ParamStore& ps, const std::string& prefix,
                   const Value& memory,
                   const std::vector<int>& word_cluster_rank,
                   const FocSpec& foc, const TaggerConfig& cfg) {
  const long n = memory.rows();
  if (static_cast<long>(word_cluster_rank.size()) != n)
    throw std::invalid_argument("align_memory: rank list does not match memory");
  if (!cfg.alignment_features) return memory;
  Mat mask(n, 1);
  for (long i = 0; i < n; ++i)
    mask(i, 0) = in_foc(foc, word_cluster_rank[i]) ? 1.0 : 0.0;
  const Value wrc = ps.get(prefix + ".aln.wrc");
  const Value table = ps.get(prefix + ".aln.table");
  Value aln_in = matmul(gather_rows(table, {aln_row(foc.j, cfg.max_tags)}), wrc);
  Value aln_out = matmul(gather_rows(table, {0}), wrc);
  Value m = Value::constant(mask);
  Value addend = add(mul_colvec(bcast_row(aln_in, n), m),
                     mul_colvec(bcast_row(aln_out, n), rsub(1.0, m)));
  return add(memory, addend);
}

DecoderOutput decoder_forward(ad::ParamStore& ps, const std::string& prefix,
                              const Value& embedding,
                              const std::vector<int>& input_tokens,
                              const std::vector<int>& input_tags,
                              const Value& memory,
                              const std::vector<int>& word_cluster_rank,
                              const std::vector<int>& word_ext_ids,
                              int n_clusters, int vocab_size, int ext_size,
                              const TaggerConfig& cfg, const DropoutCtx& drop) {
  const int t_len = static_cast<int>(input_tokens.size());
  if (t_len == 0) throw std::invalid_argument("decoder_forward: empty prefix");
  if (static_cast<int>(input_tags.size()) != t_len)
    throw std::invalid_argument("decoder_forward: tag list mismatch");
  const long n_words = memory.rows();
  if (static_cast<long>(word_cluster_rank.size()) != n_words ||
      static_cast<long>(word_ext_ids.size()) != n_words)
    throw std::invalid_argument("decoder_forward: memory annotation mismatch");
  for (int t = 0; t < t_len; ++t) {
    if (input_tags[t] < 1 || (t > 0 && input_tags[t] < input_tags[t - 1]))
      throw std::invalid_argument("decoder_forward: tag indices must not decrease");
  }
  for (int id : word_ext_ids) {
    if (id < 0 || id >= ext_size)
      throw std::out_of_range("memory word id outside the extended vocabulary");
  }

  struct Block {
    int r0 = 0;
    int n = 0;
  };
  std::vector<Block> blocks;
  for (int t = 0; t < t_len; ++t) {
    if (t == 0 || input_tags[t] != input_tags[t - 1])
      blocks.push_back({t, 1});
    else
      ++blocks.back().n;
  }

  DecoderOutput out;
  out.foc.reserve(t_len);
  for (int t = 0; t < t_len; ++t)
    out.foc.push_back(foc_set(input_tags[t], n_clusters, cfg.foc_size));
  std::vector<Value> block_mask;  // per block: n_words x 1 focus indicator
  block_mask.reserve(blocks.size());
  for (const Block& b : blocks) {
    Mat mask(n_words, 1);
    for (long i = 0; i < n_words; ++i)
      mask(i, 0) = in_foc(out.foc[b.r0], word_cluster_rank[i]) ? 1.0 : 0.0;
    block_mask.push_back(Value::constant(std::move(mask)));
  }

  std::vector<int> embed_ids(t_len);
  for (int t = 0; t < t_len; ++t)
    embed_ids[t] = embed_row(input_tokens[t], embedding.rows());
  Value x = gather_rows(embedding, embed_ids);
  x = add(x, Value::constant(positional_encoding(t_len, cfg.d_e)));
  if (cfg.alignment_features) {
    std::vector<int> rows(t_len);
    for (int t = 0; t < t_len; ++t) rows[t] = aln_row(input_tags[t], cfg.max_tags);
    Value aln = gather_rows(ps.get(prefix + ".aln.table"), rows);
    x = add(x, matmul(aln, ps.get(prefix + ".aln.wrt")));
  }
  x = maybe_drop(x, drop);

  std::vector<int> causal(t_len);
  std::iota(causal.begin(), causal.end(), 1);
  MhaSpec self_spec;
  self_spec.heads = cfg.heads;
  self_spec.scale = true;
  self_spec.output_proj = true;
  self_spec.mask_limits = &causal;
  const int d_h = cfg.d_e / cfg.heads;

  for (int l = 1; l <= cfg.layers; ++l) {
    const std::string lp = layer_prefix(prefix, l);
    Value satt =
        multi_head_attention(ps, lp + ".self", x, x, self_spec, &out.head_attention);
    Value a = layer_norm_rows(add(x, maybe_drop(satt, drop)),
                              ps.get(lp + ".ln1.gamma"), ps.get(lp + ".ln1.beta"));

    // Cross-attention with raw dot products and no output projection. The
    // memory key/value projections are shared by every tag block; only the
    // projected rank addends differ per block.
    const Value cwq = ps.get(lp + ".cross.wq");
    const Value cwk = ps.get(lp + ".cross.wk");
    const Value cwv = ps.get(lp + ".cross.wv");
    Value k_base = matmul(memory, cwk);
    Value v_base = matmul(memory, cwv);
    Value out_k, out_v;
    if (cfg.alignment_features) {
      Value aln0 =
          matmul(gather_rows(ps.get(prefix + ".aln.table"), {0}),
                 ps.get(prefix + ".aln.wrc"));
      out_k = matmul(aln0, cwk);
      out_v = matmul(aln0, cwv);
    }
    std::vector<Value> context_parts;
    std::vector<Value> alpha_parts;
    context_parts.reserve(blocks.size());
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const Block& b = blocks[bi];
      Value kj = k_base;
      Value vj = v_base;
      if (cfg.alignment_features) {
        Value alnj = matmul(
            gather_rows(ps.get(prefix + ".aln.table"),
                        {aln_row(input_tags[b.r0], cfg.max_tags)}),
            ps.get(prefix + ".aln.wrc"));
        Value in_k = matmul(alnj, cwk);
        Value in_v = matmul(alnj, cwv);
        const Value& mask = block_mask[bi];
        Value inv = rsub(1.0, mask);
        kj = add(k_base, add(mul_colvec(bcast_row(in_k, n_words), mask),
                             mul_colvec(bcast_row(out_k, n_words), inv)));
        vj = add(v_base, add(mul_colvec(bcast_row(in_v, n_words), mask),
                             mul_colvec(bcast_row(out_v, n_words), inv)));
      }
      Value qb = matmul(blocks.size() == 1 ? a : slice_rows(a, b.r0, b.n), cwq);
      std::vector<Value> head_ctx;
      Value mean;
      for (int h = 0; h < cfg.heads; ++h) {
        Value scores = matmul(slice_cols(qb, h * d_h, d_h),
                              transpose(slice_cols(kj, h * d_h, d_h)));
        Value attn = softmax_rows(scores);
        out.head_attention.push_back(attn);
        mean = h == 0 ? attn : add(mean, attn);
        head_ctx.push_back(matmul(attn, slice_cols(vj, h * d_h, d_h)));
      }
      if (l == cfg.layers)
        alpha_parts.push_back(cmul(mean, 1.0 / cfg.heads));
      context_parts.push_back(ad::concat_cols(head_ctx));
    }
    Value c = context_parts.size() == 1 ? context_parts[0]
                                        : ad::concat_rows(context_parts);
    Value s = layer_norm_rows(add(a, maybe_drop(c, drop)),
                              ps.get(lp + ".ln2.gamma"), ps.get(lp + ".ln2.beta"));
    Value ffn = add_rowvec(
        matmul(relu(add_rowvec(matmul(s, ps.get(lp + ".ffn.w1")),
                               ps.get(lp + ".ffn.b1"))),
               ps.get(lp + ".ffn.w2")),
        ps.get(lp + ".ffn.b2"));
    x = layer_norm_rows(add(s, maybe_drop(ffn, drop)),
                        ps.get(lp + ".ln3.gamma"), ps.get(lp + ".ln3.beta"));
    if (l == cfg.layers)
      out.alpha = alpha_parts.size() == 1 ? alpha_parts[0]
                                          : ad::concat_rows(alpha_parts);
  }

  Value vocab_dist = softmax_rows(add_rowvec(matmul(x, ps.get(prefix + ".out.w")),
                                             ps.get(prefix + ".out.b")));
  out.p_gen = sigmoid(add_rowvec(matmul(x, ps.get(prefix + ".gate.w")),
                                 ps.get(prefix + ".gate.b")));
  if (vocab_size != static_cast<int>(vocab_dist.cols()))
    throw std::invalid_argument("decoder_forward: vocab size mismatch");
  if (ext_size < vocab_size)
    throw std::invalid_argument("decoder_forward: extended space too small");
  Value copy = scatter_cols(out.alpha, word_ext_ids, ext_size);
  out.dist = add(mul_colvec(pad_cols(vocab_dist, ext_size), out.p_gen),
                 mul_colvec(copy, rsub(1.0, out.p_gen)));
  return out;
}

Value generation_loss(const Value& dist, const std::vector<int>& targets,
                      int base_vocab, double label_smoothing) {
  const long t_len = dist.rows();
  if (static_cast<long>(targets.size()) != t_len)
    throw std::invalid_argument("generation_loss: target length mismatch");
  for (int t : targets) {
    if (t < 0 || t >= dist.cols())
      throw std::out_of_range("generation_loss: target id outside distribution");
  }
  std::vector<int> rows(t_len);
  std::iota(rows.begin(), rows.end(), 0);
  Value logp = log_v(clamp(dist, 1e-12, 1.0));
  Value gold = pick(logp, rows, targets);
  if (label_smoothing <= 0.0) return neg(sum(gold));
  if (base_vocab < 1 || base_vocab > dist.cols())
    throw std::invalid_argument("generation_loss: bad base vocab size");
  Value spread = row_sum(slice_cols(logp, 0, base_vocab));
  Value per = add(cmul(gold, 1.0 - label_smoothing),
                  cmul(spread, label_smoothing / base_vocab));
  return neg(sum(per));
}

Value alignment_loss(const Value& alpha, const std::vector<FocSpec>& foc,
                     const std::vector<int>& word_cluster_rank) {
  const long t_len = alpha.rows();
  const long n_words = alpha.cols();
  if (static_cast<long>(foc.size()) != t_len)
    throw std::invalid_argument("alignment_loss: step count mismatch");
  if (static_cast<long>(word_cluster_rank.size()) != n_words)
    throw std::invalid_argument("alignment_loss: word count mismatch");
  Mat fmask(t_len, n_words);
  for (long t = 0; t < t_len; ++t)
    for (long i = 0; i < n_words; ++i)
      fmask(t, i) = in_foc(foc[t], word_cluster_rank[i]) ? 1.0 : 0.0;
  Value fm = Value::constant(fmask);
  Value inv_total = pow_const(row_sum(alpha), -1.0);
  Value mass_in = mul(row_sum(mul(alpha, fm)), inv_total);
  Value mass_out = mul(row_sum(mul(alpha, rsub(1.0, fm))), inv_total);
  const double eps = 1e-8;
  Value per = add(neg(log_v(clamp(mass_in, eps, 1.0))),
                  log_v(clamp(mass_out, eps, 1.0)));
  return mean_all(per);
}

FocMass foc_attention_mass(const std::vector<Mat>& alpha,
                           const std::vector<FocSpec>& foc,
                           const std::vector<int>& word_cluster_rank) {
  if (alpha.size() != foc.size())
    throw std::invalid_argument("foc_attention_mass: step count mismatch");
  FocMass fm;
  if (alpha.empty()) return fm;
  for (std::size_t s = 0; s < alpha.size(); ++s) {
    const Mat& row = alpha[s];
    if (row.size() != static_cast<long>(word_cluster_rank.size()))
      throw std::invalid_argument("foc_attention_mass: word count mismatch");
    double total = 0.0, inside = 0.0;
    for (long i = 0; i < row.size(); ++i) {
      total += row(i);
      if (in_foc(foc[s], word_cluster_rank[i])) inside += row(i);
    }
    if (total <= 0.0) throw std::runtime_error("foc_attention_mass: empty row");
    fm.foc += inside / total;
    fm.ooc += (total - inside) / total;
  }
  fm.foc /= static_cast<double>(alpha.size());
  fm.ooc /= static_cast<double>(alpha.size());
  return fm;
}

DecodeTrace greedy_decode(ad::ParamStore& ps, const std::string& prefix,
                          const Value& embedding, const Value& memory,
                          const std::vector<int>& word_cluster_rank,
                          const std::vector<int>& word_ext_ids, int n_clusters,
                          const ExtendedVocab& ev, const TaggerConfig& cfg) {
  if (ev.base == nullptr)
    throw std::invalid_argument("greedy_decode: extended vocab missing base");
  const int vocab_size = ev.base->size();
  const int ext_size = ev.total_size();
  DecodeTrace trace;
  std::vector<int> inputs{Vocabulary::kBos};
  std::vector<int> tags{1};
  int segments = 1;
  while (static_cast<int>(trace.tokens.size()) < cfg.max_decode_len) {
    DecoderOutput step =
        decoder_forward(ps, prefix, embedding, inputs, tags, memory,
                        word_cluster_rank, word_ext_ids, n_clusters, vocab_size,
                        ext_size, cfg);
    const long last = step.dist.rows() - 1;
    const Mat& dist = step.dist.v();
    int best = -1;
    double best_p = -1.0;
    for (int c = 0; c < ext_size; ++c) {
      if (c == Vocabulary::kPad) continue;  // padding is never a real token
      if (dist(last, c) > best_p) {
        best_p = dist(last, c);
        best = c;
      }
    }
    trace.tokens.push_back(best);
    trace.alpha.push_back(Mat(step.alpha.v().row(last)));
    trace.p_gen.push_back(step.p_gen.v()(last, 0));
    trace.foc.push_back(step.foc.back());
    const bool empty_segment =
        best == Vocabulary::kBos && inputs.back() == Vocabulary::kBos;
    if (best == Vocabulary::kBos) ++segments;
    inputs.push_back(best);
    tags.push_back(segments);
    if (empty_segment || segments > cfg.max_tags) break;
  }
  trace.tags = segment_tags(trace.tokens, ev);
  return trace;
}

}  // namespace aot
