#include "luxmix/training.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <thread>

#include "luxmix/errors.hpp"
#include "luxmix/eval.hpp"
#include "luxmix/metrics.hpp"
#include "luxmix/rng.hpp"

namespace luxmix {

using nn::GradMap;
using nn::Graph;
using nn::ParamStore;
using nn::Tensor;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be >= 1");
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw ConfigError("TrainConfig: split_fraction must lie in (0, 1)");
  if (grad_chunks < 1) throw ConfigError("TrainConfig: grad_chunks must be >= 1");
}

int worker_thread_count() {
  if (const char* env = std::getenv("LUXMIX_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

// Scalar loss over a subset of sample indices, built on a fresh graph.
using ChunkLoss = std::function<Tensor(Graph&, const std::vector<int>&)>;

struct BatchOutcome {
  double loss = 0.0;
  GradMap grads;
};

// Forward+backward over fixed contiguous sub-batches, reduced in sub-batch
// order. The thread count affects wall time only, never the result.
BatchOutcome run_batch(const std::vector<int>& batch, int chunks, int threads,
                       const ChunkLoss& fn) {
  const int n = static_cast<int>(batch.size());
  const int used = std::min(chunks, n);
  std::vector<std::vector<int>> parts(used);
  for (int c = 0; c < used; ++c) {
    const int lo = static_cast<int>(static_cast<long>(n) * c / used);
    const int hi = static_cast<int>(static_cast<long>(n) * (c + 1) / used);
    parts[c].assign(batch.begin() + lo, batch.begin() + hi);
  }

  std::vector<double> losses(used, 0.0);
  std::vector<GradMap> grads(used);
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int c = next.fetch_add(1);
      if (c >= used) return;
      Graph g;
      Tensor loss = fn(g, parts[c]);
      g.backward(loss);
      losses[c] = g.scalar(loss);
      grads[c] = g.param_grads();
    }
  };
  const int nthreads = std::max(1, std::min(threads, used));
  if (nthreads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  BatchOutcome out;
  for (int c = 0; c < used; ++c) {
    const double w = static_cast<double>(parts[c].size()) / n;
    out.loss += w * losses[c];
    for (auto& [name, gmat] : grads[c]) {
      auto it = out.grads.find(name);
      if (it == out.grads.end())
        out.grads.emplace(name, w * gmat);
      else
        it->second += w * gmat;
    }
  }
  return out;
}

ParamStore snapshot_values(const ParamStore& src) {
  ParamStore dst;
  for (const auto& [name, e] : src) dst.add(name, e.value, e.logical_shape, e.no_decay);
  return dst;
}

struct Driver {
  ChunkLoss loss_builder;
  std::function<std::pair<double, double>()> test_metrics;  // (loss, R or NaN)
  ParamStore* store = nullptr;
};

TrainResult drive(std::vector<int> train_indices, const TrainConfig& tc, const Driver& d) {
  tc.validate();
  if (train_indices.empty()) throw ConfigError("train: empty training set");
  const int threads = worker_thread_count();

  nn::AdamWConfig opt = tc.opt;
  nn::PlateauScheduler scheduler(tc.opt.lr, tc.sched);
  TrainResult result;
  result.history.reserve(tc.epochs);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::vector<int> order = train_indices;
    Rng shuffle_rng(Rng::mix(tc.seed, 0xE70C5, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t at = 0; at < order.size(); at += tc.batch_size) {
      const std::size_t end = std::min(order.size(), at + tc.batch_size);
      std::vector<int> batch(order.begin() + at, order.begin() + end);
      BatchOutcome out = run_batch(batch, tc.grad_chunks, threads, d.loss_builder);
      adamw_step(*d.store, out.grads, opt);
      loss_sum += out.loss * static_cast<double>(batch.size());
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());
    auto [test_loss, test_r] = d.test_metrics();
    result.history.push_back({epoch, train_loss, test_loss, test_r, opt.lr});

    if (std::isfinite(test_r) &&
        (result.best_epoch < 0 || test_r > result.best_test_r)) {
      result.best_test_r = test_r;
      result.best_epoch = epoch;
      result.best_params = snapshot_values(*d.store);
    }
    opt.lr = scheduler.observe(train_loss);
  }
  if (result.best_epoch < 0) result.best_params = snapshot_values(*d.store);
  return result;
}

constexpr int kEvalBlock = 128;

double safe_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  try {
    return pearson_r(a, b);
  } catch (const DataError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

TrainResult train_acunet(AcuNetModel& model, const std::vector<LabeledSample>& samples,
                         const EndmemberLibrary& lib, const TrainConfig& tc) {
  tc.validate();
  if (samples.empty()) throw ConfigError("train_acunet: empty dataset");
  for (const auto& s : samples)
    if (!s.c_ppix) throw UsageError("train_acunet: sample " + s.id + " has no c_ppix label");

  SplitResult split = split_dataset(samples, tc.split_fraction, tc.seed);
  const Eigen::MatrixXd fluo = rows_from_samples_fluo(samples);
  const Eigen::MatrixXd ref = rows_from_samples_ref(samples);
  Eigen::VectorXd labels(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    labels[static_cast<Eigen::Index>(i)] = *samples[i].c_ppix;
  const Eigen::MatrixXd& B = lib.B();

  Driver d;
  d.store = &model.params;
  d.loss_builder = [&](Graph& g, const std::vector<int>& idx) {
    const int b = static_cast<int>(idx.size());
    Eigen::MatrixXd bf(b, model.cfg.m), br(b, model.cfg.m);
    Eigen::VectorXd bc(b);
    for (int i = 0; i < b; ++i) {
      bf.row(i) = fluo.row(idx[i]);
      br.row(i) = ref.row(idx[i]);
      bc[i] = labels[idx[i]];
    }
    Tensor x = g.input(nn::Shape::rank3(b, 2, model.cfg.m), pack_two_channel(bf, br));
    Tensor z = acunet_forward(g, model.params, model.cfg, x);
    return acunet_loss(g, model.params, model.cfg, z, B, bc, bf);
  };
  d.test_metrics = [&]() {
    double loss_sum = 0.0;
    std::vector<double> pred, truth;
    pred.reserve(split.test.size());
    for (std::size_t at = 0; at < split.test.size(); at += kEvalBlock) {
      const std::size_t end = std::min(split.test.size(), at + kEvalBlock);
      std::vector<int> idx(split.test.begin() + at, split.test.begin() + end);
      Graph g;
      Tensor loss = d.loss_builder(g, idx);
      loss_sum += g.scalar(loss) * static_cast<double>(idx.size());
      // the z node sits right below the loss subtree; recompute is cheap and clear
      Eigen::MatrixXd bf(idx.size(), model.cfg.m), br(idx.size(), model.cfg.m);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        bf.row(static_cast<Eigen::Index>(i)) = fluo.row(idx[i]);
        br.row(static_cast<Eigen::Index>(i)) = ref.row(idx[i]);
      }
      Eigen::MatrixXd z = predict_acunet_batch(model, bf, br);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        pred.push_back(z(static_cast<Eigen::Index>(i), kPpix634));
        truth.push_back(labels[idx[i]]);
      }
    }
    const double test_loss = loss_sum / static_cast<double>(split.test.size());
    return std::make_pair(test_loss, safe_pearson(pred, truth));
  };
  return drive(split.train, tc, d);
}

TrainResult train_acusa_stage1(AcuSaModel& model, const Stage1Data& data,
                               const TrainConfig& tc) {
  tc.validate();
  const int n = static_cast<int>(data.rows.rows());
  if (n == 0) throw ConfigError("train_acusa_stage1: empty dataset");
  if (data.z_true.rows() != n)
    throw DimensionError("train_acusa_stage1: abundance rows do not match spectra");

  SplitResult split = split_indices(n, tc.split_fraction, tc.seed);

  Driver d;
  d.store = &model.hu_params;
  d.loss_builder = [&](Graph& g, const std::vector<int>& idx) {
    Eigen::MatrixXd rows(idx.size(), data.rows.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      rows.row(static_cast<Eigen::Index>(i)) = data.rows.row(idx[i]);
    return acusa_stage1_loss(g, model, rows);
  };
  d.test_metrics = [&]() {
    double loss_sum = 0.0;
    std::vector<double> pred, truth;
    for (std::size_t at = 0; at < split.test.size(); at += kEvalBlock) {
      const std::size_t end = std::min(split.test.size(), at + kEvalBlock);
      std::vector<int> idx(split.test.begin() + at, split.test.begin() + end);
      Eigen::MatrixXd rows(idx.size(), data.rows.cols());
      for (std::size_t i = 0; i < idx.size(); ++i)
        rows.row(static_cast<Eigen::Index>(i)) = data.rows.row(idx[i]);
      {
        Graph g;
        loss_sum += g.scalar(acusa_stage1_loss(g, model, rows)) *
                    static_cast<double>(idx.size());
      }
      Eigen::MatrixXd z = predict_hu_batch(model, rows);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        pred.push_back(z(static_cast<Eigen::Index>(i), kPpix634));
        truth.push_back(data.z_true(idx[i], kPpix634));
      }
    }
    const double test_loss = loss_sum / static_cast<double>(split.test.size());
    return std::make_pair(test_loss, safe_pearson(pred, truth));
  };
  return drive(split.train, tc, d);
}

TrainResult train_acusa_stage2(AcuSaModel& model, const std::vector<LabeledSample>& samples,
                               const TrainConfig& tc) {
  tc.validate();
  if (samples.empty()) throw ConfigError("train_acusa_stage2: empty dataset");
  for (const auto& s : samples)
    if (!s.c_ppix) throw UsageError("train_acusa_stage2: sample " + s.id + " has no label");

  SplitResult split = split_dataset(samples, tc.split_fraction, tc.seed);
  const Eigen::MatrixXd fluo = rows_from_samples_fluo(samples);
  const Eigen::MatrixXd ref = rows_from_samples_ref(samples);
  Eigen::VectorXd labels(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    labels[static_cast<Eigen::Index>(i)] = *samples[i].c_ppix;

  Driver d;
  d.store = &model.norm_params;
  d.loss_builder = [&](Graph& g, const std::vector<int>& idx) {
    const int b = static_cast<int>(idx.size());
    Eigen::MatrixXd bf(b, model.cfg.hu.m), br(b, model.cfg.hu.m);
    Eigen::VectorXd bc(b);
    for (int i = 0; i < b; ++i) {
      bf.row(i) = fluo.row(idx[i]);
      br.row(i) = ref.row(idx[i]);
      bc[i] = labels[idx[i]];
    }
    return acusa_stage2_loss(g, model, bf, br, bc);
  };
  d.test_metrics = [&]() {
    double loss_sum = 0.0;
    std::vector<double> pred, truth;
    for (std::size_t at = 0; at < split.test.size(); at += kEvalBlock) {
      const std::size_t end = std::min(split.test.size(), at + kEvalBlock);
      std::vector<int> idx(split.test.begin() + at, split.test.begin() + end);
      Eigen::MatrixXd bf(idx.size(), model.cfg.hu.m), br(idx.size(), model.cfg.hu.m);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        bf.row(static_cast<Eigen::Index>(i)) = fluo.row(idx[i]);
        br.row(static_cast<Eigen::Index>(i)) = ref.row(idx[i]);
      }
      {
        Graph g;
        Tensor loss = d.loss_builder(g, idx);
        loss_sum += g.scalar(loss) * static_cast<double>(idx.size());
      }
      Eigen::MatrixXd z = predict_acusa_batch(model, bf, br).z;
      for (std::size_t i = 0; i < idx.size(); ++i) {
        pred.push_back(z(static_cast<Eigen::Index>(i), kPpix634));
        truth.push_back(labels[idx[i]]);
      }
    }
    const double test_loss = loss_sum / static_cast<double>(split.test.size());
    return std::make_pair(test_loss, safe_pearson(pred, truth));
  };
  return drive(split.train, tc, d);
}

void save_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write history: " + path);
  out << "epoch,train_loss,test_loss,test_r,lr\n";
  char buf[192];
  for (const auto& h : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", h.epoch, h.train_loss,
                  h.test_loss, h.test_r, h.lr);
    out << buf;
  }
  if (!out) throw FormatError("failed writing history: " + path);
}

}  // namespace luxmix
