#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <ostream>
#include <thread>
#include <vector>

#include "convrank/common.hpp"
#include "convrank/example.hpp"
#include "convrank/model.hpp"
#include "convrank/vocab.hpp"

namespace convrank {

struct PlateauConfig {
  int window = 5;          // evaluations
  double min_delta = 0.001;  // absolute dev-accuracy gain that counts as progress

  void validate() const {
    if (window < 2) throw ConfigError("plateau window must be >= 2");
    if (min_delta < 0) throw ConfigError("plateau min_delta must be >= 0");
  }
};

struct TrainConfig {
  double lr = 0.03;
  Arch arch = Arch::multi;
  std::size_t d = 16;
  std::vector<std::size_t> hidden = {32, 16, 8};
  int workers = 1;
  std::uint64_t seed = 1;
  std::uint64_t eval_every = 5000;  // examples between dev evaluations
  PlateauConfig plateau;
  FeatureMask mask;

  void validate() const {
    if (lr <= 0) throw ConfigError("learning rate must be > 0");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    plateau.validate();
  }
};

struct EvalRecord {
  std::uint64_t examples_seen = 0;
  std::vector<double> head_losses;  // single: {L}; multi: {L1, L2, L3, L4}
  double dev_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EvalRecord> checkpoints;
  std::vector<float> train_losses;  // per processed example
  std::uint64_t examples_processed = 0;
  bool plateau_stopped = false;
};

template <typename T>
struct TrainResult {
  ModelParams<T> best;
  TrainReport report;
};

// ---------------------------------------------------------------------------
// Dev metrics.
// ---------------------------------------------------------------------------

template <typename T>
struct DevMetrics {
  double accuracy = 0.0;
  std::vector<double> head_losses;
};

template <typename T>
DevMetrics<T> dev_metrics(const ModelParams<T>& m, const Vocabulary& vocab,
                          const std::vector<Example>& dev) {
  if (dev.empty()) throw DataError("dev set is empty");
  std::size_t heads = m.arch() == Arch::single ? 1 : 4;
  std::vector<double> losses(heads, 0.0);
  std::uint64_t correct = 0;
  for (const auto& ex : dev) {
    auto fwd = forward_example(m, vocab, ex);
    for (std::size_t h = 0; h < heads; ++h) losses[h] += bce(fwd.result.probs[h], ex.positive);
    bool predicted = fwd.result.score() >= 0.5;
    if (predicted == ex.positive) ++correct;
  }
  DevMetrics<T> out;
  for (double& l : losses) l /= double(dev.size());
  out.head_losses = std::move(losses);
  out.accuracy = double(correct) / double(dev.size());
  return out;
}

// Per-head dev losses of the multi-loss network; the single-loss network has
// no per-feature heads to report.
template <typename T>
std::vector<double> per_feature_losses(const ModelParams<T>& m, const Vocabulary& vocab,
                                       const std::vector<Example>& dev) {
  if (m.arch() != Arch::multi)
    throw DataError("per-feature losses require the multi-loss architecture");
  return dev_metrics(m, vocab, dev).head_losses;
}

// ---------------------------------------------------------------------------
// SGD updates.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename Fn>
void for_each_net_grad(ModelParams<T>& m, const NetGrads<T>& g, Fn&& fn) {
  auto mlp = [&](Mlp<T>& mm, const MlpGrads<T>& mg) {
    for (std::size_t i = 0; i < mm.layers.size(); ++i) {
      fn(mm.layers[i].w, mg.layers[i].w);
      fn(mm.layers[i].b, mg.layers[i].b);
    }
  };
  if (m.arch() == Arch::single) {
    mlp(m.single().trunk, g.mlps[0]);
    fn(m.single().head.w, g.heads[0].w);
    fn(std::span<T>(&m.single().head.b, 1), std::span<const T>(&g.heads[0].b, 1));
  } else {
    auto& net = m.multi();
    mlp(net.sub_input, g.mlps[0]);
    mlp(net.sub_context, g.mlps[1]);
    mlp(net.sub_author, g.mlps[2]);
    mlp(net.aggregate, g.mlps[3]);
    LogisticHead<T>* heads_src[4] = {&net.head_input, &net.head_context, &net.head_author,
                                     &net.head_final};
    for (std::size_t h = 0; h < 4; ++h) {
      fn(heads_src[h]->w, g.heads[h].w);
      fn(std::span<T>(&heads_src[h]->b, 1), std::span<const T>(&g.heads[h].b, 1));
    }
  }
}

}  // namespace detail

// theta <- theta - lr * g, plain stores. Single-updater mode only.
template <typename T>
void apply_sgd(ModelParams<T>& m, const ExampleGrads<T>& g, double lr) {
  detail::for_each_net_grad(m, g.net, [&](std::span<T> p, std::span<const T> gr) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = T(double(p[i]) - lr * double(gr[i]));
  });
  for (const auto& [row, grad] : g.ngram_rows) {
    auto r = m.ngram_table.row(row);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = T(double(r[k]) - lr * double(grad[k]));
  }
  for (const auto& [row, grad] : g.user_rows) {
    auto r = m.user_table.row(row);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] = T(double(r[k]) - lr * double(grad[k]));
  }
}

// Lock-free variant: word-granular atomic writes, last writer wins on
// overlapping rows. No stronger ordering than relaxed is needed; staleness
// is tolerated by design.
template <typename T>
void apply_sgd_atomic(ModelParams<T>& m, const ExampleGrads<T>& g, double lr) {
  auto update = [&](std::span<T> p, std::span<const T> gr) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      std::atomic_ref<T> cell(p[i]);
      T cur = cell.load(std::memory_order_relaxed);
      cell.store(T(double(cur) - lr * double(gr[i])), std::memory_order_relaxed);
    }
  };
  detail::for_each_net_grad(m, g.net, update);
  for (const auto& [row, grad] : g.ngram_rows) update(m.ngram_table.row(row), std::span<const T>(grad));
  for (const auto& [row, grad] : g.user_rows) update(m.user_table.row(row), std::span<const T>(grad));
}

template <typename T>
ModelParams<T> snapshot_params(const ModelParams<T>& src) {
  ModelParams<T> dst = src;  // copies structure; payload refreshed atomically below
  auto* mutable_src = const_cast<ModelParams<T>*>(&src);
  std::vector<std::span<T>> src_spans, dst_spans;
  for_each_param(*mutable_src, [&](std::span<T> s) { src_spans.push_back(s); });
  for_each_param(dst, [&](std::span<T> s) { dst_spans.push_back(s); });
  for (std::size_t i = 0; i < src_spans.size(); ++i) {
    for (std::size_t j = 0; j < src_spans[i].size(); ++j) {
      std::atomic_ref<T> cell(src_spans[i][j]);
      dst_spans[i][j] = cell.load(std::memory_order_relaxed);
    }
  }
  return dst;
}

// ---------------------------------------------------------------------------
// Training loop.
// ---------------------------------------------------------------------------

template <typename T>
using EvalCallback = std::function<void(const EvalRecord&, const ModelParams<T>&)>;

namespace detail {

// Plateau rule: stop when the best dev accuracy seen so far has not improved
// by at least min_delta across the last `window` evaluations.
class PlateauTracker {
 public:
  explicit PlateauTracker(const PlateauConfig& cfg) : cfg_(cfg) {}

  // Returns true when training should stop.
  bool observe(double accuracy) {
    best_ = history_.empty() ? accuracy : std::max(best_, accuracy);
    history_.push_back(best_);
    std::size_t w = std::size_t(cfg_.window);
    if (history_.size() <= w) return false;
    return best_ - history_[history_.size() - 1 - w] < cfg_.min_delta;
  }

 private:
  PlateauConfig cfg_;
  double best_ = 0.0;
  std::vector<double> history_;
};

template <typename T>
double process_one(ModelParams<T>& m, const Vocabulary& vocab, const Example& ex, double lr,
                   bool atomic_updates) {
  auto fwd = forward_example(m, vocab, ex);
  double loss = loss_of(fwd.result.probs, ex.positive);
  if (!std::isfinite(loss))
    throw NumericError("non-finite training loss (learning rate too high?)");
  auto grads = backward_example(m, fwd, ex.positive);
  if (atomic_updates) {
    apply_sgd_atomic(m, grads, lr);
  } else {
    apply_sgd(m, grads, lr);
  }
  return loss;
}

}  // namespace detail

// One epoch of per-example SGD with periodic dev evaluation, plateau
// stopping, and best-checkpoint tracking. workers == 1 runs the exactly
// reproducible sequential path; workers > 1 shares parameters across threads
// without locks and evaluates on snapshots.
template <typename T>
TrainResult<T> train(const std::vector<Example>& train_set, const std::vector<Example>& dev_set,
                     const Vocabulary& vocab, const TrainConfig& cfg,
                     const EvalCallback<T>& on_eval = {}) {
  cfg.validate();
  if (train_set.empty()) throw DataError("training set is empty");
  ModelParams<T> params = init_model<T>(cfg.arch, vocab.ngram_size(), vocab.user_size(), cfg.d,
                                        cfg.hidden, cfg.seed, cfg.mask);

  TrainResult<T> result;
  result.report.train_losses.reserve(train_set.size());
  detail::PlateauTracker plateau(cfg.plateau);
  double best_accuracy = -1.0;
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  auto evaluate = [&](const ModelParams<T>& snapshot, std::uint64_t seen) -> bool {
    auto metrics = dev_metrics(snapshot, vocab, dev_set);
    EvalRecord record;
    record.examples_seen = seen;
    record.head_losses = metrics.head_losses;
    record.dev_accuracy = metrics.accuracy;
    record.seconds = elapsed();
    result.report.checkpoints.push_back(record);
    if (on_eval) on_eval(record, snapshot);
    if (metrics.accuracy > best_accuracy) {
      best_accuracy = metrics.accuracy;
      result.best = snapshot;
    }
    return plateau.observe(metrics.accuracy);
  };

  if (cfg.workers == 1) {
    std::uint64_t seen = 0;
    bool stopped = false;
    for (const auto& ex : train_set) {
      double loss = detail::process_one(params, vocab, ex, cfg.lr, /*atomic=*/false);
      result.report.train_losses.push_back(float(loss));
      ++seen;
      if (seen % cfg.eval_every == 0) {
        if (evaluate(params, seen)) {
          stopped = true;
          break;
        }
      }
    }
    if (!stopped && seen % cfg.eval_every != 0) evaluate(params, seen);
    result.report.plateau_stopped = stopped;
    result.report.examples_processed = seen;
    return result;
  }

  // Asynchronous mode.
  std::atomic<std::uint64_t> processed{0};
  std::atomic<bool> stop{false};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mutex;
  int n_workers = cfg.workers;
  std::vector<std::vector<float>> worker_losses;
  worker_losses.resize(std::size_t(n_workers));
  std::vector<std::thread> threads;
  threads.reserve(std::size_t(n_workers));
  for (int w = 0; w < n_workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = std::size_t(w); i < train_set.size(); i += std::size_t(n_workers)) {
          if (stop.load(std::memory_order_relaxed)) break;
          double loss = detail::process_one(params, vocab, train_set[i], cfg.lr, /*atomic=*/true);
          worker_losses[std::size_t(w)].push_back(float(loss));
          processed.fetch_add(1, std::memory_order_relaxed);
        }
      } catch (const std::exception& e) {
        {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (failure.empty()) failure = e.what();
        }
        failed.store(true);
        stop.store(true);
      }
    });
  }

  std::uint64_t next_eval = cfg.eval_every;
  bool stopped = false;
  auto workers_done = [&] {
    return processed.load(std::memory_order_relaxed) >= train_set.size() ||
           stop.load(std::memory_order_relaxed);
  };
  while (!workers_done()) {
    if (processed.load(std::memory_order_relaxed) >= next_eval) {
      auto snapshot = snapshot_params(params);
      if (evaluate(snapshot, processed.load(std::memory_order_relaxed))) {
        stopped = true;
        stop.store(true);
        break;
      }
      next_eval += cfg.eval_every;
    } else {
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
  }
  for (auto& t : threads) t.join();
  if (failed.load()) throw NumericError(failure);

  std::uint64_t seen = processed.load();
  if (!result.report.checkpoints.empty() || seen > 0) {
    if (result.report.checkpoints.empty() ||
        result.report.checkpoints.back().examples_seen < seen) {
      evaluate(snapshot_params(params), seen);
    }
  }
  for (auto& losses : worker_losses)
    result.report.train_losses.insert(result.report.train_losses.end(), losses.begin(),
                                      losses.end());
  result.report.plateau_stopped = stopped;
  result.report.examples_processed = seen;
  return result;
}

// ---------------------------------------------------------------------------
// New-user adaptation.
// ---------------------------------------------------------------------------

template <typename T>
struct AdaptResult {
  std::vector<T> vector;
  bool adapted = false;  // false: empty history, the random init came back
};

// Optimizes a fresh random author vector on the user's labeled examples with
// every model parameter frozen. Steps cycle through the history; the model
// is never mutated.
template <typename T>
AdaptResult<T> adapt_new_user(const ModelParams<T>& m, const Vocabulary& vocab,
                              const std::vector<Example>& history, int steps, double lr,
                              std::uint64_t seed) {
  if (steps < 0) throw ConfigError("adaptation steps must be >= 0");
  if (lr <= 0) throw ConfigError("adaptation learning rate must be > 0");
  AdaptResult<T> out;
  Rng rng(seed);
  double bound = 1.0 / std::sqrt(double(m.d));
  out.vector.resize(m.d);
  for (auto& v : out.vector) v = T(rng.uniform(-bound, bound));
  if (history.empty()) return out;

  for (int t = 0; t < steps; ++t) {
    const Example& ex = history[std::size_t(t) % history.size()];
    auto fwd = forward_example(m, vocab, ex, std::span<const T>(out.vector));
    double loss = loss_of(fwd.result.probs, ex.positive);
    if (!std::isfinite(loss)) throw NumericError("non-finite adaptation loss");
    auto grads = backward_example(m, fwd, ex.positive);
    for (std::size_t k = 0; k < out.vector.size(); ++k)
      out.vector[k] = T(double(out.vector[k]) - lr * double(grads.net.g_author[k]));
  }
  out.adapted = true;
  return out;
}

// ---------------------------------------------------------------------------
// Report output.
// ---------------------------------------------------------------------------

inline void write_train_report_tsv(std::ostream& out, const TrainReport& report) {
  out << "checkpoint\texamples\tL1\tL2\tL3\tL4\tdev_acc\tseconds\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < report.checkpoints.size(); ++i) {
    const auto& r = report.checkpoints[i];
    out << (i + 1) << '\t' << r.examples_seen << '\t';
    if (r.head_losses.size() == 4) {
      out << num(r.head_losses[0]) << '\t' << num(r.head_losses[1]) << '\t'
          << num(r.head_losses[2]) << '\t' << num(r.head_losses[3]);
    } else {
      out << "-\t-\t-\t" << num(r.head_losses[0]);
    }
    out << '\t' << num(r.dev_accuracy) << '\t' << num(r.seconds) << '\n';
  }
}

}  // namespace convrank
