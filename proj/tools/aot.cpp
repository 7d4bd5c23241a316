#include <cstdint>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "aot/baselines.hpp"
#include "aot/cluster_rank.hpp"
#include "aot/config.hpp"
#include "aot/corpus.hpp"
#include "aot/encoder.hpp"
#include "aot/metrics.hpp"
#include "aot/model.hpp"
#include "aot/training.hpp"

using json = nlohmann::json;

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::string ablation_csv(const aot::TrainConfig& tc) {
  std::string out;
  const auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(tc.no_sse, "no_sse");
  add(tc.no_rcr, "no_rcr");
  add(tc.no_af, "no_af");
  add(tc.no_al, "no_al");
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write output file: " + path);
  return out;
}

json meta_line(const std::string& verb) {
  json meta;
  meta["type"] = "meta";
  meta["verb"] = verb;
  return meta;
}

json row_values(const aot::ad::Mat& m, int row) {
  json values = json::array();
  for (int c = 0; c < m.cols(); ++c) values.push_back(m(row, c));
  return values;
}

struct PredictionFile {
  json meta;  // null when the file carries no meta line
  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> tags;
};

PredictionFile read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prediction file: " + path);
  PredictionFile pf;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("prediction file line " + std::to_string(lineno) +
                               ": invalid JSON: " + e.what());
    }
    if (!rec.is_object())
      throw std::runtime_error("prediction file line " + std::to_string(lineno) +
                               ": record is not an object");
    if (rec.value("type", std::string()) == "meta") {
      pf.meta = rec;
      continue;
    }
    if (!rec.contains("item_id") || !rec["item_id"].is_string() ||
        !rec.contains("tags") || !rec["tags"].is_array())
      throw std::runtime_error("prediction file line " + std::to_string(lineno) +
                               ": record needs 'item_id' and 'tags'");
    pf.ids.push_back(rec["item_id"].get<std::string>());
    std::vector<std::string> tags;
    for (const auto& t : rec["tags"]) {
      if (!t.is_string())
        throw std::runtime_error("prediction file line " +
                                 std::to_string(lineno) +
                                 ": 'tags' entries must be strings");
      tags.push_back(t.get<std::string>());
    }
    pf.tags.push_back(std::move(tags));
  }
  return pf;
}

void run_synth(int n_items, double noise, std::uint64_t seed,
               const std::string& out) {
  if (n_items < 1) throw std::invalid_argument("--n-items must be positive");
  if (noise < 0.0 || noise >= 1.0)
    throw std::invalid_argument("--noise must lie in [0, 1)");
  aot::SynthSpec spec;
  spec.n_items = n_items;
  spec.noise_fraction = noise;
  spec.seed = seed;
  const auto items = aot::synthesize_corpus(spec);
  aot::save_dataset(items, out);

  json meta = meta_line("synth");
  meta["n_items"] = n_items;
  meta["noise"] = noise;
  meta["seed"] = seed;
  meta["out"] = out;
  meta["items"] = items.size();
  std::cout << meta.dump() << '\n';
}

void run_train(const std::string& data, const std::string& config,
               const std::string& out, bool seed_given, std::uint64_t seed,
               const std::string& ablate) {
  aot::ModelConfig mc;
  aot::TrainConfig tc;
  if (!config.empty()) aot::load_config(config, mc, tc);
  if (seed_given) tc.seed = seed;
  if (!ablate.empty()) aot::apply_ablation_list(tc, ablate);

  const auto items = aot::load_dataset(data);
  aot::AotModel model = aot::make_model(items, mc, tc.seed);
  aot::AdamState adam;
  const aot::TrainResult res = aot::train(model, items, tc, &adam);
  aot::save_checkpoint(out, model, tc, &adam);

  json meta = meta_line("train");
  meta["data"] = data;
  if (!config.empty()) meta["config"] = config;
  meta["out"] = out;
  meta["seed"] = tc.seed;
  meta["ablate"] = ablation_csv(tc);
  std::cout << meta.dump() << '\n';
  for (std::size_t e = 0; e < res.history.size(); ++e) {
    json line;
    line["type"] = "epoch";
    line["epoch"] = e + 1;
    line["train_loss"] = res.history[e].train_loss;
    line["val_loss"] = res.history[e].val_loss;
    std::cout << line.dump() << '\n';
  }
  json summary;
  summary["type"] = "summary";
  summary["best_epoch"] = res.best_epoch;
  summary["best_val"] = res.best_val;
  summary["steps"] = res.steps;
  summary["early_stopped"] = res.early_stopped;
  summary["params"] = model.ps.total_size();
  summary["vocab"] = model.vocab.size();
  std::cout << summary.dump() << '\n';
}

void run_infer(const std::string& ckpt, const std::string& data,
               const std::string& out, const std::string& dump,
               bool seed_given, std::uint64_t seed) {
  aot::LoadedCheckpoint lc = aot::load_checkpoint(ckpt);
  const auto items = aot::load_dataset(data);
  const std::uint64_t use_seed = seed_given ? seed : lc.train.seed;
  const aot::PipelineFlags fl = aot::pipeline_flags(lc.train);

  json meta = meta_line("infer");
  meta["ckpt"] = ckpt;
  meta["data"] = data;
  meta["seed"] = use_seed;
  meta["ablate"] = ablation_csv(lc.train);

  auto outf = open_out(out);
  outf << meta.dump() << '\n';
  std::ofstream dumpf;
  if (!dump.empty()) {
    dumpf = open_out(dump);
    dumpf << meta.dump() << '\n';
  }

  for (const auto& item : items) {
    const aot::ItemInference inf = aot::infer_item(
        lc.model, item, fl, aot::item_stream(item.item_id, use_seed));
    json rec;
    rec["item_id"] = item.item_id;
    rec["tags"] = inf.tags;
    outf << rec.dump() << '\n';

    if (!dump.empty()) {
      const aot::ExtendedVocab ev =
          aot::build_extended_vocab(lc.model.vocab, item);
      for (std::size_t t = 0; t < inf.trace.tokens.size(); ++t) {
        json step;
        step["type"] = "step";
        step["item_id"] = item.item_id;
        step["step"] = t;
        step["token"] = ev.token(inf.trace.tokens[t]);
        step["tag"] = inf.trace.foc[t].j;
        step["p_gen"] = inf.trace.p_gen[t];
        step["foc_ranks"] = inf.trace.foc[t].foc;
        step["alpha"] = row_values(inf.trace.alpha[t], 0);
        dumpf << step.dump() << '\n';
      }
      json mass;
      mass["type"] = "foc_mass";
      mass["item_id"] = item.item_id;
      mass["foc"] = inf.mass.foc;
      mass["ooc"] = inf.mass.ooc;
      dumpf << mass.dump() << '\n';
    }
  }
  meta["items"] = items.size();
  std::cout << meta.dump() << '\n';
}

void run_eval(const std::string& pred, const std::string& gold,
              const std::string& ckpt, const std::string& out) {
  const auto gold_items = aot::load_dataset(gold);
  const PredictionFile pf = read_predictions(pred);
  if (pf.ids.size() != gold_items.size())
    throw std::runtime_error(
        "prediction/gold item count mismatch: " + std::to_string(pf.ids.size()) +
        " predictions vs " + std::to_string(gold_items.size()) + " gold items");

  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < pf.ids.size(); ++i) {
    if (!by_id.emplace(pf.ids[i], i).second)
      throw std::runtime_error("duplicate prediction for item '" + pf.ids[i] + "'");
  }

  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> preds, golds;
  for (const auto& item : gold_items) {
    const auto it = by_id.find(item.item_id);
    if (it == by_id.end())
      throw std::runtime_error("missing prediction for item '" + item.item_id + "'");
    ids.push_back(item.item_id);
    preds.push_back(pf.tags[it->second]);
    std::vector<std::string> g;
    for (const auto& tag : item.gold_tags) g.push_back(join_tokens(tag));
    golds.push_back(std::move(g));
  }

  aot::EvalReport rep;
  if (!ckpt.empty()) {
    aot::LoadedCheckpoint lc = aot::load_checkpoint(ckpt);
    rep = aot::evaluate(ids, preds, golds, &lc.model.ps.value_of("emb"),
                        &lc.model.vocab);
  } else {
    rep = aot::evaluate(ids, preds, golds);
  }

  json meta = meta_line("eval");
  meta["pred"] = pred;
  meta["gold"] = gold;
  if (!ckpt.empty()) meta["ckpt"] = ckpt;
  if (!pf.meta.is_null()) {
    meta["source"] = pf.meta;
    if (pf.meta.contains("ablate")) meta["ablate"] = pf.meta["ablate"];
  }

  json report;
  report["type"] = "report";
  report["items"] = ids.size();
  report["f1_5"] = rep.f1_5;
  report["f1_10"] = rep.f1_10;
  report["ndcg_5"] = rep.ndcg_5;
  report["ndcg_10"] = rep.ndcg_10;
  report["erm"] = rep.erm;
  if (rep.has_frm) report["frm"] = rep.frm;
  report["distinct2_micro"] = rep.distinct2_micro;
  report["distinct2_macro"] = rep.distinct2_macro;
  report["unique_n"] = rep.unique_n;

  auto outf = open_out(out);
  outf << meta.dump() << '\n';
  outf << report.dump() << '\n';
  for (const auto& it : rep.items) {
    json line;
    line["type"] = "item";
    line["item_id"] = it.item_id;
    line["f1_5"] = it.f1_5;
    line["f1_10"] = it.f1_10;
    line["ndcg_5"] = it.ndcg_5;
    line["ndcg_10"] = it.ndcg_10;
    line["erm"] = it.erm;
    if (rep.has_frm) line["frm"] = it.frm;
    outf << line.dump() << '\n';
  }
  std::cout << report.dump() << '\n';
}

void run_baseline(const std::string& method, const std::string& data,
                  const std::string& out, int top_n) {
  if (top_n < 0) throw std::invalid_argument("--top-n must be non-negative");
  const auto items = aot::load_dataset(data);
  const aot::CorpusStats stats = aot::corpus_stats(items);

  json meta = meta_line("baseline");
  meta["method"] = method;
  meta["data"] = data;
  meta["top_n"] = top_n;

  auto outf = open_out(out);
  outf << meta.dump() << '\n';
  for (const auto& item : items) {
    const int n =
        top_n > 0 ? top_n : static_cast<int>(item.gold_tags.size());
    const std::vector<std::string> tags = method == "tfidf"
                                              ? aot::tfidf_tags(item, stats, n)
                                              : aot::textrank_tags(item, n);
    json rec;
    rec["item_id"] = item.item_id;
    rec["tags"] = tags;
    outf << rec.dump() << '\n';
  }
  meta["items"] = items.size();
  std::cout << meta.dump() << '\n';
}

void run_inspect(const std::string& ckpt, const std::string& data,
                 const std::string& out, bool seed_given, std::uint64_t seed,
                 int top_n, bool clusters) {
  if (top_n < 1) throw std::invalid_argument("--top-n must be positive");
  aot::LoadedCheckpoint lc = aot::load_checkpoint(ckpt);
  const auto items = aot::load_dataset(data);
  const std::uint64_t use_seed = seed_given ? seed : lc.train.seed;
  const aot::PipelineFlags fl = aot::pipeline_flags(lc.train);

  json meta = meta_line("inspect");
  meta["ckpt"] = ckpt;
  meta["data"] = data;
  meta["seed"] = use_seed;
  meta["top_n"] = top_n;
  meta["clusters"] = clusters;

  auto outf = open_out(out);
  outf << meta.dump() << '\n';

  long correct = 0, total = 0;
  double foc_sum = 0.0, ooc_sum = 0.0;
  const aot::EncoderConfig ecfg = aot::encoder_config(lc.model.cfg);
  const aot::ad::Value emb = lc.model.ps.get("emb");

  for (const auto& item : items) {
    const std::uint64_t stream = aot::item_stream(item.item_id, use_seed);
    const aot::ItemEncoding enc = aot::encode_item(lc.model, item, fl, stream);
    if (!fl.no_sse) {
      for (std::size_t r = 0; r < item.reviews.size(); ++r) {
        const int guess = enc.z.v()(static_cast<int>(r), 0) >= 0.5 ? 1 : 0;
        correct += guess == item.reviews[r].salience_label;
        ++total;
      }
    }

    if (clusters) {
      const int n_reviews = static_cast<int>(item.reviews.size());
      aot::ad::Mat pooled(n_reviews, lc.model.cfg.d_model);
      for (int r = 0; r < n_reviews; ++r) {
        const auto ids = lc.model.vocab.encode(item.reviews[r].tokens);
        pooled.row(r) =
            aot::encode_review_words(lc.model.ps, "enc", emb, ids, ecfg)
                .pooled.v()
                .row(0);
      }
      Eigen::VectorXd weights = Eigen::VectorXd::Ones(n_reviews);
      if (!fl.no_sse) weights = enc.z.v().col(0);
      const aot::ad::Mat weighted = aot::weight_by_salience(pooled, weights);

      std::vector<aot::OpinionCluster> ranked;
      if (fl.no_rcr) {
        aot::OpinionCluster single;
        single.rank = 1;
        for (int r = 0; r < n_reviews; ++r) single.members.push_back(r);
        single.center = weighted.colwise().mean();
        ranked.push_back(std::move(single));
      } else {
        ranked = aot::cluster_and_rank(weighted, enc.n_clusters, stream);
      }
      for (const auto& c : ranked) {
        json line;
        line["type"] = "cluster";
        line["item_id"] = item.item_id;
        line["rank"] = c.rank;
        line["size"] = c.members.size();
        line["members"] = c.members;
        line["inertia"] = c.inertia;
        json center = json::array();
        for (int i = 0; i < c.center.size(); ++i) center.push_back(c.center(i));
        line["center"] = center;
        outf << line.dump() << '\n';
      }
    }

    const aot::ItemInference inf = aot::infer_item(lc.model, item, fl, stream);
    foc_sum += inf.mass.foc;
    ooc_sum += inf.mass.ooc;
  }

  json sal;
  sal["type"] = "salience";
  if (total > 0)
    sal["accuracy"] = static_cast<double>(correct) / static_cast<double>(total);
  else
    sal["accuracy"] = nullptr;
  sal["reviews"] = total;
  outf << sal.dump() << '\n';

  json mass;
  mass["type"] = "foc_mass";
  mass["foc"] = items.empty() ? 0.0 : foc_sum / static_cast<double>(items.size());
  mass["ooc"] = items.empty() ? 0.0 : ooc_sum / static_cast<double>(items.size());
  mass["items"] = items.size();
  outf << mass.dump() << '\n';

  const aot::ad::Mat sim =
      aot::cluster_tag_similarity(lc.model, items, fl, use_seed, top_n);
  for (int j = 0; j < sim.rows(); ++j) {
    json line;
    line["type"] = "cluster_tag_similarity";
    line["rank"] = j + 1;
    line["values"] = row_values(sim, j);
    outf << line.dump() << '\n';
  }

  meta["items"] = items.size();
  std::cout << meta.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"abstractive opinion tagging over item reviews"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  int synth_n = 20;
  double synth_noise = 0.2;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  synth->add_option("--n-items", synth_n, "items to generate");
  synth->add_option("--noise", synth_noise, "noise review fraction");
  synth->add_option("--seed", synth_seed, "rng seed");
  synth->add_option("--out", synth_out, "dataset file to write")->required();

  auto* train = app.add_subcommand("train", "train a model on a dataset");
  std::string train_data, train_config, train_out, train_ablate;
  std::uint64_t train_seed = 1;
  train->add_option("--data", train_data, "dataset file")->required();
  train->add_option("--config", train_config, "flat key/value config file");
  train->add_option("--out", train_out, "checkpoint file to write")->required();
  auto* train_seed_opt = train->add_option("--seed", train_seed, "rng seed");
  train->add_option("--ablate", train_ablate,
                    "comma list of no_sse,no_rcr,no_af,no_al");

  auto* infer = app.add_subcommand("infer", "decode tags for a dataset");
  std::string infer_ckpt, infer_data, infer_out, infer_dump;
  std::uint64_t infer_seed = 1;
  infer->add_option("--ckpt", infer_ckpt, "checkpoint file")->required();
  infer->add_option("--data", infer_data, "dataset file")->required();
  infer->add_option("--out", infer_out, "prediction file to write")->required();
  infer->add_option("--dump-attention", infer_dump,
                    "write per-step attention records here");
  auto* infer_seed_opt =
      infer->add_option("--seed", infer_seed, "clustering seed override");

  auto* eval = app.add_subcommand("eval", "score predictions against gold tags");
  std::string eval_pred, eval_gold, eval_ckpt, eval_out;
  eval->add_option("--pred", eval_pred, "prediction file")->required();
  eval->add_option("--gold,--data", eval_gold, "gold dataset file")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint for embedding similarity");
  eval->add_option("--out", eval_out, "report file to write")->required();

  auto* baseline = app.add_subcommand("baseline", "run an extractive baseline");
  std::string base_method, base_data, base_out;
  int base_top_n = 0;
  baseline->add_option("--method", base_method, "tfidf or textrank")
      ->required()
      ->check(CLI::IsMember({"tfidf", "textrank"}));
  baseline->add_option("--data", base_data, "dataset file")->required();
  baseline->add_option("--out", base_out, "prediction file to write")->required();
  baseline->add_option("--top-n", base_top_n,
                       "tags per item; 0 matches the gold tag count");

  auto* inspect = app.add_subcommand("inspect", "model analysis report");
  std::string ins_ckpt, ins_data, ins_out;
  std::uint64_t ins_seed = 1;
  int ins_top_n = 5;
  bool ins_clusters = false;
  inspect->add_option("--ckpt", ins_ckpt, "checkpoint file")->required();
  inspect->add_option("--data", ins_data, "dataset file")->required();
  inspect->add_option("--out", ins_out, "report file to write")->required();
  auto* ins_seed_opt =
      inspect->add_option("--seed", ins_seed, "clustering seed override");
  inspect->add_option("--top-n", ins_top_n, "rank table size");
  inspect->add_flag("--clusters", ins_clusters,
                    "emit per-item cluster membership and centers");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(synth)) {
      run_synth(synth_n, synth_noise, synth_seed, synth_out);
    } else if (app.got_subcommand(train)) {
      run_train(train_data, train_config, train_out, train_seed_opt->count() > 0,
                train_seed, train_ablate);
    } else if (app.got_subcommand(infer)) {
      run_infer(infer_ckpt, infer_data, infer_out, infer_dump,
                infer_seed_opt->count() > 0, infer_seed);
    } else if (app.got_subcommand(eval)) {
      run_eval(eval_pred, eval_gold, eval_ckpt, eval_out);
    } else if (app.got_subcommand(baseline)) {
      run_baseline(base_method, base_data, base_out, base_top_n);
    } else if (app.got_subcommand(inspect)) {
      run_inspect(ins_ckpt, ins_data, ins_out, ins_seed_opt->count() > 0,
                  ins_seed, ins_top_n, ins_clusters);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
