#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include "convrank/common.hpp"
#include "convrank/example.hpp"
#include "convrank/model.hpp"

namespace convrank {

// One ranking task: the (I, C, A) features of a positive test example plus N
// candidate responses, exactly one of which is the true one.
struct RankingPool {
  std::vector<TokenizedMessage> context;
  TokenizedMessage input;
  std::uint32_t author_id = 0;
  std::string post_id;
  std::vector<TokenizedMessage> candidates;
  std::size_t positive_index = 0;
};

namespace detail {

inline std::string response_key(const TokenizedMessage& msg) {
  return join_tokens(msg);
}

}  // namespace detail

// pool_count pools over the test positives; each pool holds N-1 distractors
// drawn uniformly from the test response pool, with replacement across pools
// and without replacement (or collision with the positive) within a pool.
inline std::vector<RankingPool> build_pools(const std::vector<Example>& test_examples, int n,
                                            int pool_count, std::uint64_t seed) {
  if (n < 1) throw ConfigError("pool size N must be >= 1");
  if (pool_count < 1) throw ConfigError("pool count must be >= 1");
  std::vector<const Example*> positives;
  for (const auto& ex : test_examples)
    if (ex.positive) positives.push_back(&ex);
  if (positives.empty()) throw DataError("no positive test examples to build pools from");

  std::unordered_set<std::string> distinct;
  for (const Example* ex : positives) distinct.insert(detail::response_key(ex->response));
  if (distinct.size() < std::size_t(n))
    throw DataError("only " + std::to_string(distinct.size()) +
                    " distinct test responses, need at least " + std::to_string(n));

  std::vector<RankingPool> pools;
  pools.reserve(std::size_t(pool_count));
  for (int k = 0; k < pool_count; ++k) {
    Rng rng(mix64(seed, std::uint64_t(k)));
    const Example& pos = *positives[rng.below(positives.size())];
    std::string pos_key = detail::response_key(pos.response);

    std::vector<TokenizedMessage> distractors;
    std::unordered_set<std::string> used;
    used.insert(pos_key);
    while (int(distractors.size()) < n - 1) {
      const Example& draw = *positives[rng.below(positives.size())];
      std::string key = detail::response_key(draw.response);
      if (used.insert(key).second) distractors.push_back(draw.response);
    }

    RankingPool pool;
    pool.context = pos.context;
    pool.input = pos.input;
    pool.author_id = pos.author_id;
    pool.post_id = pos.post_id;
    pool.positive_index = std::size_t(rng.below(std::uint64_t(n)));
    pool.candidates.resize(std::size_t(n));
    std::size_t di = 0;
    for (std::size_t slot = 0; slot < std::size_t(n); ++slot) {
      if (slot == pool.positive_index) {
        pool.candidates[slot] = pos.response;
      } else {
        pool.candidates[slot] = std::move(distractors[di++]);
      }
    }
    pools.push_back(std::move(pool));
  }
  return pools;
}

// A pool is won when the positive candidate's score is strictly greater than
// every distractor's; ties lose.
inline bool pool_won(std::span<const double> scores, std::size_t positive_index) {
  double pos = scores[positive_index];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i == positive_index) continue;
    if (scores[i] >= pos) return false;
  }
  return true;
}

struct PrecisionResult {
  double p_at_1 = 0.0;
  std::uint64_t wins = 0;
  std::uint64_t pools = 0;
};

template <typename T>
std::vector<double> score_pool(const ModelParams<T>& m, const Vocabulary& vocab,
                               const RankingPool& pool) {
  std::vector<double> scores;
  scores.reserve(pool.candidates.size());
  Example probe;
  probe.context = pool.context;
  probe.input = pool.input;
  probe.author_id = pool.author_id;
  probe.post_id = pool.post_id;
  for (const auto& candidate : pool.candidates) {
    probe.response = candidate;
    scores.push_back(score_example(m, vocab, probe));
  }
  return scores;
}

template <typename T>
PrecisionResult precision_at_1(const ModelParams<T>& m, const Vocabulary& vocab,
                               const std::vector<RankingPool>& pools) {
  if (pools.empty()) throw DataError("no pools to evaluate");
  PrecisionResult result;
  result.pools = pools.size();
  for (const auto& pool : pools) {
    auto scores = score_pool(m, vocab, pool);
    if (pool_won(std::span<const double>(scores), pool.positive_index)) ++result.wins;
  }
  result.p_at_1 = double(result.wins) / double(result.pools);
  return result;
}

template <typename T>
double classifier_accuracy(const ModelParams<T>& m, const Vocabulary& vocab,
                           const std::vector<Example>& examples) {
  if (examples.empty()) throw DataError("no labeled examples to evaluate");
  std::uint64_t correct = 0;
  for (const auto& ex : examples) {
    bool predicted = score_example(m, vocab, ex) >= 0.5;
    if (predicted == ex.positive) ++correct;
  }
  return double(correct) / double(examples.size());
}

// Sample Pearson correlation; nullopt when either series has zero variance.
inline std::optional<double> pearson_correlation(
    const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 2) throw DataError("need at least two points for a correlation");
  double n = double(pairs.size());
  double mx = 0, my = 0;
  for (const auto& [x, y] : pairs) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (const auto& [x, y] : pairs) {
    sxx += (x - mx) * (x - mx);
    syy += (y - my) * (y - my);
    sxy += (x - mx) * (y - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Reports and ablation tables.
// ---------------------------------------------------------------------------

struct EvalReport {
  double p_at_1 = 0.0;
  std::uint64_t pools = 0;
  int n = 0;
  double classifier_accuracy = 0.0;
};

inline void write_eval_report_tsv(std::ostream& out, const EvalReport& report) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  out << "metric\tvalue\n";
  out << "p_at_1\t" << num(report.p_at_1) << '\n';
  out << "pools\t" << report.pools << '\n';
  out << "N\t" << report.n << '\n';
  out << "classifier_accuracy\t" << num(report.classifier_accuracy) << '\n';
}

// One measured (or absent) cell of the context-length / feature-subset
// grids.
struct AblationCell {
  std::string row_label;  // e.g. "context up to 2" or "message + author"
  Arch arch = Arch::single;
  int n = 0;
  std::optional<double> p_at_1;
};

template <typename T>
struct AblationRun {
  std::string row_label;
  const ModelParams<T>* model = nullptr;  // absent models are reported, not failed
  const std::vector<RankingPool>* pools = nullptr;
  int n = 0;
};

template <typename T>
std::vector<AblationCell> ablation_sweep(const Vocabulary& vocab,
                                         const std::vector<AblationRun<T>>& runs) {
  std::vector<AblationCell> cells;
  cells.reserve(runs.size());
  for (const auto& run : runs) {
    AblationCell cell;
    cell.row_label = run.row_label;
    cell.n = run.n;
    if (run.model && run.pools) {
      cell.arch = run.model->arch();
      cell.p_at_1 = precision_at_1(*run.model, vocab, *run.pools).p_at_1;
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

// Rows x (arch, N) columns, mirroring the usual sweep-table layout.
inline std::string format_ablation_table(const std::vector<AblationCell>& cells) {
  std::vector<std::string> rows;
  std::vector<std::pair<Arch, int>> columns;
  for (const auto& c : cells) {
    if (std::find(rows.begin(), rows.end(), c.row_label) == rows.end()) rows.push_back(c.row_label);
    auto col = std::make_pair(c.arch, c.n);
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
  }
  std::string out = "row";
  for (const auto& [arch, n] : columns)
    out += std::string("\t") + arch_name(arch) + " N=" + std::to_string(n);
  out += '\n';
  char buf[64];
  for (const auto& row : rows) {
    out += row;
    for (const auto& col : columns) {
      const AblationCell* found = nullptr;
      for (const auto& c : cells)
        if (c.row_label == row && c.arch == col.first && c.n == col.second) found = &c;
      if (found && found->p_at_1) {
        std::snprintf(buf, sizeof(buf), "\t%.2f", *found->p_at_1 * 100.0);
        out += buf;
      } else {
        out += "\tabsent";
      }
    }
    out += '\n';
  }
  return out;
}

}  // namespace convrank
