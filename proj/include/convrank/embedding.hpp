#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "convrank/common.hpp"
#include "convrank/example.hpp"
#include "convrank/text.hpp"
#include "convrank/vocab.hpp"

namespace convrank {

template <typename T>
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows, std::size_t dim) : dim_(dim), data_(rows * dim, T(0)) {}

  std::size_t rows() const { return dim_ ? data_.size() / dim_ : 0; }
  std::size_t dim() const { return dim_; }

  std::span<T> row(std::size_t i) { return std::span<T>(data_.data() + i * dim_, dim_); }
  std::span<const T> row(std::size_t i) const {
    return std::span<const T>(data_.data() + i * dim_, dim_);
  }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

 private:
  std::size_t dim_ = 0;
  std::vector<T> data_;
};

// Entries i.i.d. uniform in [-1/sqrt(d), +1/sqrt(d)], row-major fill order.
template <typename T>
EmbeddingTable<T> init_table(std::size_t rows, std::size_t dim, Rng& rng) {
  if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
  EmbeddingTable<T> table(rows, dim);
  double bound = 1.0 / std::sqrt(double(dim));
  for (auto& v : table.data()) v = T(rng.uniform(-bound, bound));
  return table;
}

// Which embedding rows a bag touches and how often; `total` is L, the
// number of in-vocabulary ngram occurrences. Row order is first-occurrence
// order, kept deterministic for reproducible updates.
struct BagRef {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> rows;  // (row, count)
  std::uint32_t total = 0;

  void add(std::uint32_t row) {
    ++total;
    for (auto& [r, c] : rows) {
      if (r == row) {
        ++c;
        return;
      }
    }
    rows.emplace_back(row, 1);
  }
};

// Eq-style bag embedding: the single global average of all in-vocabulary
// ngram occurrence embeddings across the whole message group. Summation runs
// per occurrence, per message, unigrams then bigrams, accumulated in double;
// an empty (or all-OOV) bag is the zero vector.
template <typename T>
std::vector<T> bag_embed(std::span<const TokenizedMessage> messages,
                         const EmbeddingTable<T>& table, const Vocabulary& vocab,
                         BagRef* bag = nullptr) {
  if (table.rows() != vocab.ngram_size())
    throw DataError("ngram table row count does not match vocabulary");
  std::size_t d = table.dim();
  std::vector<double> acc(d, 0.0);
  std::uint64_t total = 0;
  for (const auto& msg : messages) {
    for (const auto& g : extract_ngrams(msg)) {
      auto id = vocab.ngram_id(g);
      if (!id) continue;
      auto row = table.row(*id);
      for (std::size_t k = 0; k < d; ++k) acc[k] += double(row[k]);
      ++total;
      if (bag) bag->add(*id);
    }
  }
  std::vector<T> out(d, T(0));
  if (total > 0) {
    for (std::size_t k = 0; k < d; ++k) out[k] = T(acc[k] / double(total));
  }
  if (bag) bag->total = std::uint32_t(total);
  return out;
}

template <typename T>
std::vector<T> bag_embed(const TokenizedMessage& message, const EmbeddingTable<T>& table,
                         const Vocabulary& vocab, BagRef* bag = nullptr) {
  return bag_embed(std::span<const TokenizedMessage>(&message, 1), table, vocab, bag);
}

template <typename T>
struct FeatureVectors {
  std::vector<T> response;  // R
  std::vector<T> input;     // I
  std::vector<T> context;   // C, zero when the context is empty
  std::vector<T> author;    // A
};

struct FeatureBags {
  BagRef response;
  BagRef input;
  BagRef context;
  std::uint32_t author_row = kUnknownAuthor;  // kUnknownAuthor = no row touched
};

// Feature subset selection: a disabled feature is zeroed at featurization
// time and its parameters receive no updates.
struct FeatureMask {
  bool use_context = true;
  bool use_author = true;
};

template <typename T>
struct Featurized {
  FeatureVectors<T> vectors;
  FeatureBags bags;
};

// Maps one example to its (R, I, C, A) vectors. Pass `author_override` to
// substitute an explicit author vector (new-user adaptation); otherwise the
// author id must be a valid row.
template <typename T>
Featurized<T> featurize(const Example& ex, const EmbeddingTable<T>& ngram_table,
                        const EmbeddingTable<T>& user_table, const Vocabulary& vocab,
                        const FeatureMask& mask = {},
                        std::span<const T> author_override = {}) {
  Featurized<T> f;
  f.vectors.response = bag_embed(ex.response, ngram_table, vocab, &f.bags.response);
  f.vectors.input = bag_embed(ex.input, ngram_table, vocab, &f.bags.input);
  std::size_t d = ngram_table.dim();
  if (mask.use_context && !ex.context.empty()) {
    f.vectors.context = bag_embed(std::span<const TokenizedMessage>(ex.context),
                                  ngram_table, vocab, &f.bags.context);
  } else {
    f.vectors.context.assign(d, T(0));
  }
  if (!author_override.empty()) {
    if (author_override.size() != user_table.dim())
      throw DataError("author override dimension mismatch");
    f.vectors.author.assign(author_override.begin(), author_override.end());
  } else if (mask.use_author) {
    if (ex.author_id >= user_table.rows())
      throw DataError("author id " + std::to_string(ex.author_id) + " out of range");
    auto row = user_table.row(ex.author_id);
    f.vectors.author.assign(row.begin(), row.end());
    f.bags.author_row = ex.author_id;
  } else {
    f.vectors.author.assign(user_table.dim(), T(0));
  }
  return f;
}

}  // namespace convrank
