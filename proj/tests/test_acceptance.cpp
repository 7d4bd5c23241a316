#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "aot/baselines.hpp"
#include "aot/cluster_rank.hpp"
#include "aot/config.hpp"
#include "aot/corpus.hpp"
#include "aot/metrics.hpp"
#include "aot/model.hpp"
#include "aot/rng.hpp"
#include "aot/tagger.hpp"
#include "aot/training.hpp"

using namespace aot;
namespace fs = std::filesystem;

namespace {

void report(int id, bool ok, const std::string& detail) {
  std::printf("[criterion %02d] %s: %s\n", id, ok ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  CHECK_MESSAGE(ok, "criterion " << id << ": " << detail);
}

template <typename... Args>
std::string fmt(const char* pattern, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), pattern, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<std::string> gold_strings(const Item& item) {
  std::vector<std::string> out;
  for (const auto& tag : item.gold_tags) out.push_back(join(tag));
  return out;
}

SynthSpec corpus_spec(int n_items, std::uint64_t seed, double absent,
                      int min_reviews, int max_reviews) {
  SynthSpec s;
  s.n_items = n_items;
  s.min_aspects = 3;
  s.max_aspects = 6;
  s.min_reviews = min_reviews;
  s.max_reviews = max_reviews;
  s.noise_fraction = 0.15;
  s.absent_fraction = absent;
  s.seed = seed;
  return s;
}

ModelConfig small_model() {
  ModelConfig mc;
  mc.d_e = 24;
  mc.d_model = 36;
  mc.gru_width = 12;
  mc.gru_layers = 1;
  mc.salience_hidden = 8;
  mc.enc_layers = 1;
  mc.enc_heads = 2;
  mc.dec_layers = 1;
  mc.dec_heads = 2;
  mc.ffn_hidden = 16;
  mc.max_tags = 8;
  mc.max_decode_len = 50;
  return mc;
}

ModelConfig micro_model() {
  ModelConfig mc;
  mc.d_e = 8;
  mc.d_model = 12;
  mc.gru_width = 6;
  mc.gru_layers = 1;
  mc.salience_hidden = 4;
  mc.enc_layers = 1;
  mc.enc_heads = 2;
  mc.dec_layers = 1;
  mc.dec_heads = 2;
  mc.ffn_hidden = 5;
  mc.max_tags = 5;
  mc.foc_size = 3;
  mc.max_decode_len = 20;
  return mc;
}

TrainConfig fast_train(int epochs, double lr, std::uint64_t seed) {
  TrainConfig tc;
  tc.base_lr = lr;
  tc.warmup = 30;
  tc.batch_size = 4;
  tc.max_epochs = epochs;
  tc.patience = 1000;
  tc.val_fraction = 0.0;
  tc.dropout_keep = 1.0;
  tc.seed = seed;
  return tc;
}

// ---- independent metric oracles (nested-loop / set-based) ------------------

std::string oracle_norm(std::string s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
  for (auto& c : s)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return s;
}

int oracle_matches(const std::vector<std::string>& pred,
                   const std::vector<std::string>& gold, int k) {
  std::map<std::string, int> want;
  for (const auto& g : gold) ++want[oracle_norm(g)];
  std::map<std::string, int> have;
  for (int i = 0; i < static_cast<int>(pred.size()) && i < k; ++i)
    ++have[oracle_norm(pred[i])];
  int m = 0;
  for (const auto& [tag, n] : have) {
    const auto it = want.find(tag);
    if (it != want.end()) m += std::min(n, it->second);
  }
  return m;
}

double oracle_f1(const std::vector<std::string>& pred,
                 const std::vector<std::string>& gold, int k) {
  if (pred.empty()) return 0.0;
  const int m = oracle_matches(pred, gold, k);
  const double p =
      m / static_cast<double>(std::min<int>(k, static_cast<int>(pred.size())));
  const double r = m / static_cast<double>(gold.size());
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double oracle_ndcg(const std::vector<std::string>& pred,
                   const std::vector<std::string>& gold, int k) {
  std::multiset<std::string> pool;
  for (const auto& g : gold) pool.insert(oracle_norm(g));
  double dcg = 0.0;
  for (int i = 0; i < static_cast<int>(pred.size()) && i < k; ++i) {
    const auto it = pool.find(oracle_norm(pred[i]));
    if (it != pool.end()) {
      pool.erase(it);
      dcg += 1.0 / std::log2(i + 2.0);
    }
  }
  double idcg = 0.0;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(gold.size())); ++i)
    idcg += 1.0 / std::log2(i + 2.0);
  return dcg / idcg;
}

double oracle_erm(const std::vector<std::string>& pred,
                  const std::vector<std::string>& gold) {
  int hits = 0;
  for (std::size_t j = 0; j < pred.size() && j < gold.size(); ++j)
    if (oracle_norm(pred[j]) == oracle_norm(gold[j])) ++hits;
  return hits / static_cast<double>(gold.size());
}

std::vector<std::string> oracle_split(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::pair<double, double> oracle_distinct2(
    const std::vector<std::vector<std::string>>& items) {
  std::set<std::pair<std::string, std::string>> all;
  long total = 0;
  double macro = 0.0;
  int counted = 0;
  for (const auto& tags : items) {
    std::set<std::pair<std::string, std::string>> here;
    long n = 0;
    for (const auto& t : tags) {
      const auto toks = oracle_split(oracle_norm(t));
      for (std::size_t i = 1; i < toks.size(); ++i) {
        here.emplace(toks[i - 1], toks[i]);
        all.emplace(toks[i - 1], toks[i]);
        ++n;
      }
    }
    total += n;
    if (n > 0) {
      macro += 100.0 * static_cast<double>(here.size()) / n;
      ++counted;
    }
  }
  return {total > 0 ? 100.0 * static_cast<double>(all.size()) / total : 0.0,
          counted > 0 ? macro / counted : 0.0};
}

double oracle_unique_n(const std::vector<std::vector<std::string>>& items) {
  double sum = 0.0;
  for (const auto& tags : items) {
    std::vector<std::string> n;
    for (const auto& t : tags) n.push_back(oracle_norm(t));
    std::sort(n.begin(), n.end());
    sum += static_cast<double>(std::unique(n.begin(), n.end()) - n.begin());
  }
  return sum / static_cast<double>(items.size());
}

double oracle_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    dot += a(i) * b(i);
    na += a(i) * a(i);
    nb += b(i) * b(i);
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double oracle_frm(const std::vector<std::string>& pred,
                  const std::vector<std::string>& gold,
                  const ad::Mat& embedding, const Vocabulary& vocab) {
  const auto tag_vec = [&](const std::string& tag) {
    const auto toks = oracle_split(oracle_norm(tag));
    Eigen::VectorXd v = Eigen::VectorXd::Zero(embedding.cols());
    for (const auto& t : toks)
      if (vocab.contains(t)) v += embedding.row(vocab.id(t)).transpose();
    if (!toks.empty()) v /= static_cast<double>(toks.size());
    return v;
  };
  const std::size_t n = std::min(pred.size(), gold.size());
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j)
    sum += oracle_cosine(tag_vec(pred[j]), tag_vec(gold[j]));
  return sum / static_cast<double>(n);
}

std::vector<std::string> random_tags(Rng& rng, int lo, int hi) {
  static const std::vector<std::string> pool = {
      "a",     "b",      "a b",  "b c",     "c d e", "  A ",
      "B c",   "d",      "e f",  "f g h i", "g",     "h b",
      "a b c", " C d E", "b  c", "x y",     "y",     "z z",
  };
  const int n = rng.range(lo, hi);
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(pool[rng.index(pool.size())]);
  return out;
}

// ---- shared ablation study (criteria 3 and 4) ------------------------------

struct AblationScores {
  double f1 = 0.0, erm = 0.0, foc = 0.0;
};

struct AblationStudy {
  std::array<AblationScores, 3> full, no_af, no_al;
  double secs = 0.0;
};

const AblationStudy& ablation_study() {
  static const AblationStudy study = [] {
    const auto t0 = std::chrono::steady_clock::now();
    const auto train_items = synthesize_corpus(corpus_spec(32, 101, 0.2, 8, 12));
    const auto test_items = synthesize_corpus(corpus_spec(16, 202, 0.2, 8, 12));

    ModelConfig mc = small_model();
    mc.k_override = 4;  // more clusters than the FOC window covers

    const auto run = [&](std::uint64_t seed, const std::string& ablate) {
      TrainConfig tc = fast_train(150, 5e-3, seed);
      tc.lambda2 = 0.3;
      tc.label_smoothing = 0.1;
      if (!ablate.empty()) apply_ablation_list(tc, ablate);
      AotModel m = make_model(train_items, mc, tc.seed);
      train(m, train_items, tc);
      const PipelineFlags fl = pipeline_flags(tc);
      AblationScores sc;
      for (const auto& item : test_items) {
        const auto inf =
            infer_item(m, item, fl, item_stream(item.item_id, tc.seed));
        const auto gold = gold_strings(item);
        sc.f1 += f1_at_k(inf.tags, gold, 5);
        sc.erm += erm(inf.tags, gold);
        sc.foc += inf.mass.foc;
      }
      const double n = static_cast<double>(test_items.size());
      sc.f1 /= n;
      sc.erm /= n;
      sc.foc /= n;
      return sc;
    };

    AblationStudy s;
    const std::array<std::uint64_t, 3> seeds = {1, 2, 3};
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      s.full[i] = run(seeds[i], "");
      s.no_af[i] = run(seeds[i], "no_af");
      s.no_al[i] = run(seeds[i], "no_al");
    }
    s.secs = seconds_since(t0);
    return s;
  }();
  return study;
}

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" + AOT_CLI_PATH +
                          "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("criterion 01: analytic gradients match finite differences") {
  const auto t0 = std::chrono::steady_clock::now();

  Item item;
  item.item_id = "grad-item";
  for (const char* text : {"battery life is long", "battery charges fast",
                           "screen looks bright", "screen is sharp"}) {
    Review r;
    r.raw = text;
    r.tokens = tokenize(text);
    r.salience_label = 1;
    item.reviews.push_back(std::move(r));
  }
  item.gold_tags = {{"long", "battery", "life"}, {"bright", "screen"}};

  ModelConfig mc = micro_model();
  mc.k_override = 2;
  mc.foc_size = 1;  // leaves a rank outside the window so L_aln is not flat
  AotModel m = make_model({item}, mc, 7);
  TrainConfig tc;
  tc.seed = 7;
  const PipelineFlags fl = pipeline_flags(tc);
  const std::uint64_t stream = item_stream(item.item_id, tc.seed);

  const auto losses_of = [&] {
    const ItemEncoding enc = encode_item(m, item, fl, stream);
    return item_losses(m, item, enc, fl, 0.1);
  };
  const std::vector<std::pair<const char*, std::function<ad::Value()>>> terms =
      {{"L_cla", [&] { return losses_of().cla; }},
       {"L_aln", [&] { return losses_of().aln; }},
       {"L_gen", [&] { return losses_of().gen; }},
       {"joint", [&] {
          const auto l = losses_of();
          return multitask_loss(l.cla, l.aln, l.gen, tc);
        }}};

  // Sample flat indices: first and last entry of every matrix plus a stride.
  std::vector<std::size_t> indices;
  std::size_t offset = 0;
  for (const auto& name : m.ps.names()) {
    const auto& v = m.ps.value_of(name);
    const std::size_t sz =
        static_cast<std::size_t>(v.rows()) * static_cast<std::size_t>(v.cols());
    indices.push_back(offset);
    if (sz > 1) indices.push_back(offset + sz - 1);
    offset += sz;
  }
  const std::size_t total = m.ps.total_size();
  const std::size_t stride = std::max<std::size_t>(1, total / 120);
  for (std::size_t i = 0; i < total; i += stride) indices.push_back(i);
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());

  const double h = 1e-4;
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t fewest_per_term = indices.size();
  for (const auto& [name, fwd] : terms) {
    m.ps.zero_grad();
    ad::backward(fwd());
    std::vector<double> analytic(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i)
      analytic[i] = m.ps.grad_flat(indices[i]);
    std::size_t term_checked = 0;
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const std::size_t idx = indices[i];
      const double x0 = m.ps.get_flat(idx);
      m.ps.set_flat(idx, x0 + h);
      const double fp = fwd().item();
      m.ps.set_flat(idx, x0 - h);
      const double fm = fwd().item();
      m.ps.set_flat(idx, x0);
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom = std::max(std::abs(analytic[i]), std::abs(numeric));
      if (denom < 1e-7) continue;
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
      ++term_checked;
    }
    checked += term_checked;
    fewest_per_term = std::min(fewest_per_term, term_checked);
  }

  const double secs = seconds_since(t0);
  const bool ok = worst <= 1e-4 && fewest_per_term >= 20 && secs < 60.0;
  report(1, ok,
         fmt("salience, alignment, generation and joint losses: max rel err "
             "%.2e over %zu sampled entries (limit 1e-4, every loss "
             "contributing), %.1fs (limit 60s)",
             worst, checked, secs));
}

TEST_CASE("criterion 02: full model overfits a 20 item corpus") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto items = synthesize_corpus(corpus_spec(20, 101, 0.5, 6, 9));

  TrainConfig tc = fast_train(200, 5e-3, 101);
  tc.label_smoothing = 0.0;
  AotModel m = make_model(items, small_model(), tc.seed);
  train(m, items, tc);

  const double acc = token_accuracy(m, items, tc);
  const PipelineFlags fl = pipeline_flags(tc);
  double f1 = 0.0;
  for (const auto& item : items) {
    const auto inf = infer_item(m, item, fl, item_stream(item.item_id, tc.seed));
    f1 += f1_at_k(inf.tags, gold_strings(item), 5);
  }
  f1 /= static_cast<double>(items.size());

  const double secs = seconds_since(t0);
  const bool ok = acc >= 0.99 && f1 >= 0.9 && secs < 1800.0;
  report(2, ok,
         fmt("token accuracy %.4f (floor 0.99), train F1@5 %.4f (floor 0.9), "
             "%.0fs (limit 1800s)",
             acc, f1, secs));
}

TEST_CASE("criterion 03: alignment loss lifts FOC attention mass") {
  const AblationStudy& s = ablation_study();
  double min_gap = 1.0;
  std::string gaps;
  for (std::size_t i = 0; i < 3; ++i) {
    const double gap = s.full[i].foc - s.no_al[i].foc;
    min_gap = std::min(min_gap, gap);
    gaps += fmt("%s%.3f", i ? "/" : "", gap);
  }
  const bool ok = min_gap >= 0.03;
  report(3, ok,
         fmt("per-seed FOC mass gap full vs no_al = %s (each >= 0.03), "
             "study took %.0fs",
             gaps.c_str(), s.secs));
}

TEST_CASE("criterion 04: ablations do not beat the full model") {
  const AblationStudy& s = ablation_study();
  double f1_full = 0.0, f1_noaf = 0.0, erm_full = 0.0, erm_noal = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    f1_full += s.full[i].f1 / 3.0;
    f1_noaf += s.no_af[i].f1 / 3.0;
    erm_full += s.full[i].erm / 3.0;
    erm_noal += s.no_al[i].erm / 3.0;
  }
  const bool ok = f1_full >= f1_noaf && erm_full >= erm_noal;
  report(4, ok,
         fmt("3-seed means on held-out items: F1@5 full %.4f >= no_af %.4f; "
             "ERM full %.4f >= no_al %.4f",
             f1_full, f1_noaf, erm_full, erm_noal));
}

TEST_CASE("criterion 05: choose_k matches the piecewise oracle") {
  const auto t0 = std::chrono::steady_clock::now();
  int mismatches = 0;
  for (int m = 1; m <= 1000; ++m) {
    const int expect = m <= 200 ? static_cast<int>(std::ceil(m / 20.0)) : 20;
    if (choose_k(m) != expect) ++mismatches;
  }
  const double secs = seconds_since(t0);
  const bool ok = mismatches == 0 && secs < 1.0;
  report(5, ok,
         fmt("M in [1,1000]: %d mismatches, %.3fs (limit 1s)", mismatches,
             secs));
}

TEST_CASE("criterion 06: metrics equal independent oracles") {
  Rng rng(2024);
  double worst = 0.0;
  int instances = 0;

  Vocabulary vocab;
  for (const char* t : {"a", "b", "c", "d", "e", "f", "g", "h", "i", "x", "y", "z"})
    vocab.add(t);
  ad::Mat embedding(vocab.size(), 4);
  for (int r = 0; r < embedding.rows(); ++r)
    for (int c = 0; c < embedding.cols(); ++c) embedding(r, c) = rng.normal();

  for (int t = 0; t < 50; ++t) {
    const auto pred = random_tags(rng, 0, 6);
    const auto gold = random_tags(rng, 1, 6);
    const int k = rng.range(1, 6);

    worst = std::max(worst, std::abs(f1_at_k(pred, gold, k) -
                                     oracle_f1(pred, gold, k)));
    worst = std::max(worst, std::abs(ndcg_at_k(pred, gold, k) -
                                     oracle_ndcg(pred, gold, k)));
    worst = std::max(worst, std::abs(erm(pred, gold) - oracle_erm(pred, gold)));
    worst = std::max(worst, std::abs(frm(pred, gold, embedding, vocab) -
                                     oracle_frm(pred, gold, embedding, vocab)));

    std::vector<std::vector<std::string>> corpus;
    const int n_items = rng.range(1, 5);
    for (int i = 0; i < n_items; ++i) corpus.push_back(random_tags(rng, 0, 6));
    const auto [micro, macro] = oracle_distinct2(corpus);
    const DistinctScores d = distinct2(corpus);
    worst = std::max(worst, std::abs(d.micro - micro));
    worst = std::max(worst, std::abs(d.macro - macro));
    worst = std::max(worst, std::abs(unique_n(corpus) - oracle_unique_n(corpus)));
    ++instances;
  }

  const bool ok = worst <= 1e-9;
  report(6, ok,
         fmt("F1@k, NDCG@k, ERM, FRM, Distinct-2, Unique-N on %d random "
             "instances: max abs diff %.2e (limit 1e-9)",
             instances, worst));
}

TEST_CASE("criterion 07: extractive baselines cannot reach absent tags") {
  const auto items = synthesize_corpus(corpus_spec(16, 303, 0.8, 8, 12));
  const CorpusStats stats = corpus_stats(items);

  long gold_total = 0, present_total = 0;
  std::vector<int> present_per_item;
  for (const auto& item : items) {
    int present = 0;
    for (const auto& tag : item.gold_tags) present += tag_is_present(item, tag);
    present_per_item.push_back(present);
    present_total += present;
    gold_total += static_cast<long>(item.gold_tags.size());
  }
  REQUIRE(2 * present_total <= gold_total);  // at least half the tags absent

  bool all_verbatim = true;
  bool bound_holds = true;
  long matches_tfidf = 0, matches_textrank = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    const int n = static_cast<int>(item.gold_tags.size());
    const auto gold = gold_strings(item);
    for (const bool use_tfidf : {true, false}) {
      const auto preds = use_tfidf ? tfidf_tags(item, stats, n)
                                   : textrank_tags(item, n);
      for (const auto& tag : preds)
        all_verbatim = all_verbatim && tag_is_present(item, tokenize(tag));
      const int m = oracle_matches(preds, gold, static_cast<int>(preds.size()));
      bound_holds = bound_holds && m <= present_per_item[i];
      (use_tfidf ? matches_tfidf : matches_textrank) += m;
    }
  }

  const double present_frac =
      static_cast<double>(present_total) / static_cast<double>(gold_total);
  const bool ok = all_verbatim && bound_holds &&
                  matches_tfidf <= present_total &&
                  matches_textrank <= present_total;
  report(7, ok,
         fmt("present-tag fraction %.3f; recalls tfidf %.3f, textrank %.3f; "
             "all %s verbatim and bounded per item",
             present_frac,
             static_cast<double>(matches_tfidf) / static_cast<double>(gold_total),
             static_cast<double>(matches_textrank) /
                 static_cast<double>(gold_total),
             all_verbatim ? "tags" : "NOT ALL TAGS"));
}

TEST_CASE("criterion 08: the cli pipeline is byte reproducible") {
  const fs::path base = fs::temp_directory_path() / "aot_acceptance_cli";
  fs::remove_all(base);

  const nlohmann::json cfg = {
      {"d_e", 8},          {"d_model", 12},        {"gru_width", 6},
      {"gru_layers", 1},   {"salience_hidden", 4}, {"enc_layers", 1},
      {"enc_heads", 2},    {"dec_layers", 1},      {"dec_heads", 2},
      {"ffn_hidden", 5},   {"pool_window", 3},     {"max_tags", 6},
      {"foc_size", 3},     {"max_decode_len", 24}, {"base_lr", 0.003},
      {"warmup", 20},      {"batch_size", 4},      {"max_epochs", 2},
      {"patience", 5},     {"val_fraction", 0.2},  {"dropout_keep", 1.0},
      {"seed", 9}};

  for (const char* run : {"run1", "run2"}) {
    const fs::path dir = base / run;
    fs::create_directories(dir);
    std::ofstream(dir / "micro.json") << cfg.dump() << '\n';
    REQUIRE(run_cli(dir, "synth --n-items 6 --seed 13 --out data.jsonl") == 0);
    REQUIRE(run_cli(dir, "train --data data.jsonl --config micro.json "
                         "--out model.ckpt") == 0);
    REQUIRE(run_cli(dir, "infer --ckpt model.ckpt --data data.jsonl "
                         "--out pred.jsonl") == 0);
    REQUIRE(run_cli(dir, "eval --pred pred.jsonl --gold data.jsonl "
                         "--ckpt model.ckpt --out report.jsonl") == 0);
  }

  bool ok = true;
  std::string detail = "identical bytes for";
  for (const char* file :
       {"data.jsonl", "model.ckpt", "pred.jsonl", "report.jsonl"}) {
    const bool same = slurp(base / "run1" / file) == slurp(base / "run2" / file);
    ok = ok && same;
    detail += fmt(" %s%s", file, same ? "" : "(DIFFERS)");
  }
  report(8, ok, detail + " across two synth/train/infer/eval runs");
}

TEST_CASE("criterion 09: distributions and attention rows sum to one") {
  const auto items = synthesize_corpus(corpus_spec(40, 505, 0.5, 6, 9));
  const ModelConfig mc = micro_model();

  long dist_rows = 0, attention_rows = 0;
  double worst = 0.0;
  const auto check_rows = [&](const ad::Mat& m, long& counter) {
    for (int r = 0; r < m.rows(); ++r) {
      worst = std::max(worst, std::abs(m.row(r).sum() - 1.0));
      ++counter;
    }
  };

  for (const std::uint64_t seed : {1ull, 2ull}) {
    AotModel m = make_model(items, mc, seed);
    TrainConfig tc;
    tc.seed = seed;
    const PipelineFlags fl = pipeline_flags(tc);
    for (const auto& item : items) {
      const std::uint64_t stream = item_stream(item.item_id, seed);
      const ItemEncoding enc = encode_item(m, item, fl, stream);
      const TagSequence seq = prepare_targets(item.gold_tags, enc.ev);
      const std::vector<int> inputs(seq.tokens.begin(), seq.tokens.end() - 1);
      const std::vector<int> input_tags(seq.tag_index.begin(),
                                        seq.tag_index.end() - 1);
      const DecoderOutput out = decoder_forward(
          m.ps, "dec", m.ps.get("emb"), inputs, input_tags, enc.memory,
          enc.plan.word_cluster_rank, enc.word_ext_ids, enc.n_clusters,
          m.vocab.size(), enc.ev.total_size(), tagger_config(m.cfg, true));
      check_rows(out.dist.v(), dist_rows);
      check_rows(out.alpha.v(), attention_rows);
      for (const auto& head : out.head_attention)
        check_rows(head.v(), attention_rows);

      const auto inf = infer_item(m, item, fl, stream);
      for (const auto& alpha : inf.trace.alpha) check_rows(alpha, attention_rows);
    }
  }

  const bool ok = dist_rows >= 1000 && worst <= 1e-6;
  report(9, ok,
         fmt("%ld decode-step distributions (need 1000) and %ld attention "
             "rows: max |sum-1| = %.2e (limit 1e-6)",
             dist_rows, attention_rows, worst));
}

TEST_CASE("criterion 10: decode cap and segment round trip") {
  const auto items = synthesize_corpus(corpus_spec(30, 606, 0.5, 6, 9));
  AotModel m = make_model(items, small_model(), 3);
  TrainConfig tc;
  tc.seed = 3;
  const PipelineFlags fl = pipeline_flags(tc);

  std::size_t max_tokens = 0;
  for (const auto& item : items) {
    const auto inf = infer_item(m, item, fl, item_stream(item.item_id, tc.seed));
    max_tokens = std::max(max_tokens, inf.trace.tokens.size());
  }

  // Vocabulary item whose reviews cover the whole sampling pool.
  std::vector<std::string> pool;
  for (int i = 0; i < 40; ++i) pool.push_back("w" + std::to_string(i));
  Item vocab_item;
  vocab_item.item_id = "pool";
  for (int r = 0; r < 8; ++r) {
    Review rev;
    for (int c = 0; c < 5; ++c) rev.tokens.push_back(pool[r * 5 + c]);
    rev.raw = join(rev.tokens);
    rev.salience_label = 1;
    vocab_item.reviews.push_back(std::move(rev));
  }
  vocab_item.gold_tags = {{pool[0]}};
  const Vocabulary vocab = build_vocabulary({vocab_item});
  const ExtendedVocab ev = build_extended_vocab(vocab, vocab_item);

  Rng rng(99);
  int round_trips = 0;
  for (int t = 0; t < 200; ++t) {
    std::vector<std::vector<std::string>> gold;
    const int n_tags = rng.range(1, 6);
    for (int j = 0; j < n_tags; ++j) {
      std::vector<std::string> tag;
      const int len = rng.range(1, 3);
      for (int q = 0; q < len; ++q) tag.push_back(pool[rng.index(pool.size())]);
      gold.push_back(std::move(tag));
    }
    const TagSequence seq = prepare_targets(gold, ev);
    if (segment_tags(seq.tokens, ev) == gold) ++round_trips;
  }

  const bool ok = max_tokens <= 50 && round_trips == 200;
  report(10, ok,
         fmt("longest decode %zu tokens (cap 50); %d/200 segment round trips "
             "exact",
             max_tokens, round_trips));
}
