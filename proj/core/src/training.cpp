#include "aot/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace aot {

using ad::Mat;

double lr_at(long step, int d_model, int warmup, double base_lr) {
  if (step < 1) throw std::invalid_argument("lr_at: step must be >= 1");
  if (warmup < 1) throw std::invalid_argument("lr_at: warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double rate =
      std::pow(static_cast<double>(d_model), -0.5) *
      std::min(std::pow(s, -0.5),
               s * std::pow(static_cast<double>(warmup), -1.5));
  return std::min(rate, base_lr);
}

ad::Value multitask_loss(const ad::Value& cla, const ad::Value& aln,
                         const ad::Value& gen, const TrainConfig& tc) {
  if (!std::isfinite(cla.item())) throw std::runtime_error("salience loss is not finite");
  if (!std::isfinite(aln.item())) throw std::runtime_error("alignment loss is not finite");
  if (!std::isfinite(gen.item())) throw std::runtime_error("generation loss is not finite");
  return ad::add(ad::add(ad::cmul(cla, tc.lambda1), ad::cmul(aln, tc.lambda2)),
                 ad::cmul(gen, tc.lambda3));
}

void AdamState::init(std::size_t n) {
  m.assign(n, 0.0);
  v.assign(n, 0.0);
  step = 0;
}

void AdamState::update(ad::ParamStore& ps, double lr, const TrainConfig& tc) {
  if (m.size() != ps.total_size())
    throw std::logic_error("optimizer state does not match the parameters");
  ++step;
  const double c1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
  std::size_t idx = 0;
  for (const auto& name : ps.names()) {
    Mat& val = ps.value_of(name);
    const Mat& grad = ps.grad_of(name);
    for (Eigen::Index r = 0; r < val.rows(); ++r) {
      for (Eigen::Index c = 0; c < val.cols(); ++c, ++idx) {
        const double g = grad(r, c);
        m[idx] = tc.beta1 * m[idx] + (1.0 - tc.beta1) * g;
        v[idx] = tc.beta2 * v[idx] + (1.0 - tc.beta2) * g * g;
        val(r, c) -= lr * (m[idx] / c1) / (std::sqrt(v[idx] / c2) + tc.adam_eps);
      }
    }
  }
}

AotModel make_model(const std::vector<Item>& items, const ModelConfig& mc,
                    std::uint64_t seed) {
  AotModel m;
  m.cfg = mc;
  m.vocab = build_vocabulary(items, mc.vocab_cap);
  init_model(m, seed);
  return m;
}

namespace {

double item_joint_loss(AotModel& m, const Item& item, const PipelineFlags& flags,
                       const TrainConfig& tc) {
  ItemEncoding enc = encode_item(m, item, flags, item_stream(item.item_id, tc.seed));
  ItemLosses losses = item_losses(m, item, enc, flags, tc.label_smoothing);
  return multitask_loss(losses.cla, losses.aln, losses.gen, tc).item();
}

}  // namespace

TrainResult train(AotModel& m, const std::vector<Item>& items,
                  const TrainConfig& tc, AdamState* adam_out) {
  validate(tc);
  if (items.empty()) throw std::invalid_argument("train: no items");

  const auto n = static_cast<int>(items.size());
  const int n_val = static_cast<int>(std::floor(tc.val_fraction * n));
  const int n_train = n - n_val;
  if (n_train < 1) throw std::invalid_argument("train: validation split leaves no training items");

  const PipelineFlags flags = pipeline_flags(tc);
  Rng root(tc.seed);

  AdamState adam;
  adam.init(m.ps.total_size());

  TrainResult res;
  std::vector<Mat> best;
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;

  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    std::vector<int> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = root.child(100 + static_cast<std::uint64_t>(epoch));
    shuffle(order, shuffle_rng);
    Rng drop_rng = root.child(200 + static_cast<std::uint64_t>(epoch));

    double loss_sum = 0.0;
    for (int start = 0; start < n_train; start += tc.batch_size) {
      const int bn = std::min(tc.batch_size, n_train - start);
      m.ps.zero_grad();
      for (int b = 0; b < bn; ++b) {
        const Item& item = items[static_cast<std::size_t>(order[start + b])];
        DropoutCtx drop{tc.dropout_keep, &drop_rng, true};
        ItemEncoding enc =
            encode_item(m, item, flags, item_stream(item.item_id, tc.seed), drop);
        ItemLosses parts = item_losses(m, item, enc, flags, tc.label_smoothing, drop);
        ad::Value joint;
        try {
          joint = multitask_loss(parts.cla, parts.aln, parts.gen, tc);
        } catch (const std::runtime_error& e) {
          throw std::runtime_error(std::string(e.what()) + " at update step " +
                                   std::to_string(adam.step + 1));
        }
        loss_sum += joint.item();
        ad::backward(ad::cmul(joint, 1.0 / bn));
      }
      if (tc.clip_norm > 0.0) m.ps.clip_grad_norm(tc.clip_norm);
      const double lr = lr_at(adam.step + 1, m.cfg.d_model, tc.warmup, tc.base_lr);
      adam.update(m.ps, lr, tc);
    }

    EpochStats st;
    st.train_loss = loss_sum / n_train;
    if (n_val > 0) {
      double val_sum = 0.0;
      for (int i = n_train; i < n; ++i)
        val_sum += item_joint_loss(m, items[static_cast<std::size_t>(i)], flags, tc);
      st.val_loss = val_sum / n_val;
    }
    res.history.push_back(st);

    if (n_val > 0) {
      if (st.val_loss < best_val) {
        best_val = st.val_loss;
        res.best_epoch = epoch;
        stale = 0;
        best.clear();
        for (const auto& name : m.ps.names()) best.push_back(m.ps.value_of(name));
      } else if (++stale >= tc.patience) {
        res.early_stopped = true;
        break;
      }
    }
  }

  if (n_val > 0 && res.best_epoch > 0) {
    std::size_t i = 0;
    for (const auto& name : m.ps.names()) m.ps.value_of(name) = best[i++];
    res.best_val = best_val;
  }
  res.steps = adam.step;
  if (adam_out) *adam_out = adam;
  return res;
}

double token_accuracy(AotModel& m, const std::vector<Item>& items,
                      const TrainConfig& tc) {
  const PipelineFlags flags = pipeline_flags(tc);
  long correct = 0, steps = 0;
  for (const auto& item : items) {
    ItemEncoding enc = encode_item(m, item, flags, item_stream(item.item_id, tc.seed));
    ItemLosses parts = item_losses(m, item, enc, flags, 0.0);
    correct += parts.correct;
    steps += parts.steps;
  }
  return steps == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(steps);
}

double dataset_loss(AotModel& m, const std::vector<Item>& items,
                    const TrainConfig& tc) {
  if (items.empty()) return 0.0;
  const PipelineFlags flags = pipeline_flags(tc);
  double sum = 0.0;
  for (const auto& item : items) sum += item_joint_loss(m, item, flags, tc);
  return sum / static_cast<double>(items.size());
}

namespace {

constexpr char kMagic[4] = {'A', 'O', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof bits);
  put_u64(os, bits);
}

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void need(std::istream& is) {
  if (!is) throw std::runtime_error("checkpoint is truncated or unreadable");
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  need(is);
  std::uint32_t x = 0;
  for (int i = 3; i >= 0; --i) x = (x << 8) | b[i];
  return x;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  need(is);
  std::uint64_t x = 0;
  for (int i = 7; i >= 0; --i) x = (x << 8) | b[i];
  return x;
}

double get_f64(std::istream& is) {
  const std::uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, sizeof d);
  return d;
}

std::string get_str(std::istream& is) {
  const std::uint32_t len = get_u32(is);
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  need(is);
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const AotModel& m,
                     const TrainConfig& tc, const AdamState* adam) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_str(os, config_to_json(m.cfg, tc));

  const int vs = m.vocab.size();
  put_u32(os, static_cast<std::uint32_t>(vs - 3));  // specials are implied
  for (int i = 3; i < vs; ++i) put_str(os, m.vocab.token(i));

  auto& ps = const_cast<ad::ParamStore&>(m.ps);
  put_u32(os, static_cast<std::uint32_t>(ps.names().size()));
  for (const auto& name : ps.names()) {
    const Mat& val = ps.value_of(name);
    put_str(os, name);
    put_u32(os, static_cast<std::uint32_t>(val.rows()));
    put_u32(os, static_cast<std::uint32_t>(val.cols()));
    for (Eigen::Index r = 0; r < val.rows(); ++r)
      for (Eigen::Index c = 0; c < val.cols(); ++c) put_f64(os, val(r, c));
  }

  os.put(adam ? '\1' : '\0');
  if (adam) {
    put_u64(os, static_cast<std::uint64_t>(adam->step));
    put_u64(os, static_cast<std::uint64_t>(adam->m.size()));
    for (double x : adam->m) put_f64(os, x);
    for (double x : adam->v) put_f64(os, x);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  need(is);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::uint32_t version = get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));

  LoadedCheckpoint out;
  config_from_json(get_str(is), out.model.cfg, out.train);

  const std::uint32_t extra = get_u32(is);
  for (std::uint32_t i = 0; i < extra; ++i) out.model.vocab.add(get_str(is));

  const std::uint32_t n_params = get_u32(is);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    const std::string name = get_str(is);
    const auto rows = static_cast<Eigen::Index>(get_u32(is));
    const auto cols = static_cast<Eigen::Index>(get_u32(is));
    Mat val(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) val(r, c) = get_f64(is);
    out.model.ps.create(name, std::move(val));
  }

  const int flag = is.get();
  need(is);
  if (flag == 1) {
    out.has_adam = true;
    out.adam.step = static_cast<long>(get_u64(is));
    const auto sz = static_cast<std::size_t>(get_u64(is));
    out.adam.m.resize(sz);
    out.adam.v.resize(sz);
    for (auto& x : out.adam.m) x = get_f64(is);
    for (auto& x : out.adam.v) x = get_f64(is);
  } else if (flag != 0) {
    throw std::runtime_error("corrupt checkpoint trailer");
  }
  return out;
}

}  // namespace aot
