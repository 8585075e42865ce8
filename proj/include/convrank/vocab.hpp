#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "convrank/common.hpp"
#include "convrank/dump.hpp"
#include "convrank/text.hpp"
#include "convrank/tree.hpp"

namespace convrank {

struct VocabEntry {
  std::string key;
  std::uint64_t count = 0;
};

// Frequency counts, mergeable across shards.
struct NgramCounts {
  std::unordered_map<std::string, std::uint64_t> unigrams;
  std::unordered_map<std::string, std::uint64_t> bigrams;

  void add_message(const TokenizedMessage& tokens) {
    for (const auto& g : extract_ngrams(tokens)) {
      (is_bigram_key(g) ? bigrams : unigrams)[g] += 1;
    }
  }

  void merge(const NgramCounts& other) {
    for (const auto& [k, v] : other.unigrams) unigrams[k] += v;
    for (const auto& [k, v] : other.bigrams) bigrams[k] += v;
  }
};

namespace detail {

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const {
    return std::hash<std::string_view>{}(s);
  }
};

// Top-k by count, ties broken by lexicographically smaller key first.
inline std::vector<VocabEntry> select_top(
    const std::unordered_map<std::string, std::uint64_t>& counts, std::uint64_t k) {
  std::vector<VocabEntry> entries;
  entries.reserve(counts.size());
  for (const auto& [key, count] : counts) entries.push_back({key, count});
  std::sort(entries.begin(), entries.end(), [](const VocabEntry& a, const VocabEntry& b) {
    if (a.count != b.count) return a.count > b.count;
    return a.key < b.key;
  });
  if (entries.size() > k) entries.resize(k);
  return entries;
}

}  // namespace detail

// Two dense, gapless index spaces: ngrams (unigrams first, then bigrams) and
// users. Immutable once built; shared freely across threads.
class Vocabulary {
 public:
  Vocabulary() = default;

  void set_ngrams(std::vector<VocabEntry> unigrams, std::vector<VocabEntry> bigrams) {
    ngram_entries_ = std::move(unigrams);
    n_unigrams_ = ngram_entries_.size();
    ngram_entries_.insert(ngram_entries_.end(), std::make_move_iterator(bigrams.begin()),
                          std::make_move_iterator(bigrams.end()));
    ngram_index_.clear();
    ngram_index_.reserve(ngram_entries_.size());
    for (std::uint32_t i = 0; i < ngram_entries_.size(); ++i) {
      if (!ngram_index_.emplace(ngram_entries_[i].key, i).second)
        throw DataError("duplicate ngram entry '" + ngram_entries_[i].key + "'");
    }
  }

  void set_users(std::vector<VocabEntry> users) {
    user_entries_ = std::move(users);
    user_index_.clear();
    user_index_.reserve(user_entries_.size());
    for (std::uint32_t i = 0; i < user_entries_.size(); ++i) {
      if (!user_index_.emplace(user_entries_[i].key, i).second)
        throw DataError("duplicate user entry '" + user_entries_[i].key + "'");
    }
  }

  std::optional<std::uint32_t> ngram_id(std::string_view key) const {
    auto it = ngram_index_.find(key);
    if (it == ngram_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::uint32_t> user_id(std::string_view name) const {
    auto it = user_index_.find(name);
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t ngram_size() const { return ngram_entries_.size(); }
  std::size_t unigram_size() const { return n_unigrams_; }
  std::size_t bigram_size() const { return ngram_entries_.size() - n_unigrams_; }
  std::size_t user_size() const { return user_entries_.size(); }
  const std::vector<VocabEntry>& ngram_entries() const { return ngram_entries_; }
  const std::vector<VocabEntry>& user_entries() const { return user_entries_; }

  std::uint64_t ngram_fingerprint() const { return fingerprint_of(ngram_entries_); }
  std::uint64_t user_fingerprint() const { return fingerprint_of(user_entries_); }
  std::uint64_t fingerprint() const {
    return mix64(ngram_fingerprint(), user_fingerprint());
  }

  // Smallest retained counts, for build diagnostics.
  std::uint64_t min_unigram_count() const {
    return n_unigrams_ ? ngram_entries_[n_unigrams_ - 1].count : 0;
  }
  std::uint64_t min_bigram_count() const {
    return bigram_size() ? ngram_entries_.back().count : 0;
  }

 private:
  static std::uint64_t fingerprint_of(const std::vector<VocabEntry>& entries) {
    std::uint64_t h = kFnvOffset;
    for (std::uint32_t i = 0; i < entries.size(); ++i) {
      h = fnv1a64(entries[i].key, h);
      h = fnv1a64_u64(i, h);
    }
    return h;
  }

  using IndexMap =
      std::unordered_map<std::string, std::uint32_t, detail::StringHash, std::equal_to<>>;

  std::vector<VocabEntry> ngram_entries_;  // unigrams then bigrams, index order
  std::vector<VocabEntry> user_entries_;
  IndexMap ngram_index_;
  IndexMap user_index_;
  std::size_t n_unigrams_ = 0;
};

struct VocabBuildInfo {
  bool unigrams_exhausted = false;  // fewer distinct items than requested
  bool bigrams_exhausted = false;
  bool users_exhausted = false;
};

inline void build_ngram_vocab(Vocabulary& vocab, const NgramCounts& counts,
                              std::uint64_t k1, std::uint64_t k2,
                              VocabBuildInfo* info = nullptr) {
  if (k1 < 1 || k2 < 1) throw ConfigError("ngram vocabulary sizes must be >= 1");
  auto unigrams = detail::select_top(counts.unigrams, k1);
  auto bigrams = detail::select_top(counts.bigrams, k2);
  if (info) {
    info->unigrams_exhausted = unigrams.size() < k1;
    info->bigrams_exhausted = bigrams.size() < k2;
  }
  vocab.set_ngrams(std::move(unigrams), std::move(bigrams));
}

// Top contributors by comment count. The deleted marker never enters the
// population; one index per username.
inline void build_user_population(Vocabulary& vocab,
                                  const std::unordered_map<std::string, std::uint64_t>& comment_counts,
                                  std::uint64_t p, VocabBuildInfo* info = nullptr) {
  if (p < 1) throw ConfigError("user population size must be >= 1");
  std::unordered_map<std::string, std::uint64_t> filtered;
  filtered.reserve(comment_counts.size());
  for (const auto& [user, n] : comment_counts) {
    if (user != kDeletedMarker && !user.empty()) filtered.emplace(user, n);
  }
  auto users = detail::select_top(filtered, p);
  if (info) info->users_exhausted = users.size() < p;
  vocab.set_users(std::move(users));
}

// Corpus pass used by the vocab CLI command: counts ngrams over every
// message in the tree store (titles included, deleted bodies excluded) and
// comments per author.
struct CorpusCounts {
  NgramCounts ngrams;
  std::unordered_map<std::string, std::uint64_t> user_comments;
};

inline CorpusCounts count_corpus(const std::vector<PostTree>& trees) {
  CorpusCounts counts;
  for (const auto& tree : trees) {
    if (!tree.title.empty() && tree.title != kDeletedMarker)
      counts.ngrams.add_message(tokenize(strip_markdown(tree.title)));
    for (const Comment* c : tree.preorder()) {
      if (c->body != kDeletedMarker)
        counts.ngrams.add_message(tokenize(strip_markdown(c->body)));
      if (c->author != kDeletedMarker && !c->author.empty()) counts.user_comments[c->author] += 1;
    }
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Vocabulary file (kind 3): both parts, entries in index order, fingerprints
// trailing for load-time verification.
// ---------------------------------------------------------------------------

inline void save_vocabulary(std::ostream& out, const Vocabulary& vocab) {
  BinWriter w(out);
  w.header(FileKind::vocabulary);
  w.u64(vocab.unigram_size());
  w.u64(vocab.bigram_size());
  for (const auto& e : vocab.ngram_entries()) {
    w.str(e.key);
    w.u64(e.count);
  }
  w.u64(vocab.user_size());
  for (const auto& e : vocab.user_entries()) {
    w.str(e.key);
    w.u64(e.count);
  }
  w.u64(vocab.ngram_fingerprint());
  w.u64(vocab.user_fingerprint());
}

inline Vocabulary load_vocabulary(std::istream& in) {
  BinReader r(in);
  r.expect_header(FileKind::vocabulary);
  std::uint64_t n_uni = r.u64();
  std::uint64_t n_bi = r.u64();
  std::vector<VocabEntry> unigrams, bigrams;
  unigrams.reserve(n_uni);
  bigrams.reserve(n_bi);
  for (std::uint64_t i = 0; i < n_uni; ++i) {
    VocabEntry e;
    e.key = r.str();
    e.count = r.u64();
    unigrams.push_back(std::move(e));
  }
  for (std::uint64_t i = 0; i < n_bi; ++i) {
    VocabEntry e;
    e.key = r.str();
    e.count = r.u64();
    bigrams.push_back(std::move(e));
  }
  Vocabulary vocab;
  vocab.set_ngrams(std::move(unigrams), std::move(bigrams));
  std::uint64_t n_users = r.u64();
  std::vector<VocabEntry> users;
  users.reserve(n_users);
  for (std::uint64_t i = 0; i < n_users; ++i) {
    VocabEntry e;
    e.key = r.str();
    e.count = r.u64();
    users.push_back(std::move(e));
  }
  vocab.set_users(std::move(users));
  std::uint64_t ngram_fp = r.u64();
  std::uint64_t user_fp = r.u64();
  if (ngram_fp != vocab.ngram_fingerprint() || user_fp != vocab.user_fingerprint())
    throw DataError("vocabulary fingerprint mismatch (corrupt file)");
  return vocab;
}

inline void write_vocabulary_tsv(std::ostream& out, const Vocabulary& vocab) {
  out << "entry\tindex\tcount\n";
  const auto& ngrams = vocab.ngram_entries();
  for (std::uint32_t i = 0; i < ngrams.size(); ++i)
    out << ngrams[i].key << '\t' << i << '\t' << ngrams[i].count << '\n';
  const auto& users = vocab.user_entries();
  for (std::uint32_t i = 0; i < users.size(); ++i)
    out << users[i].key << '\t' << i << '\t' << users[i].count << '\n';
}

}  // namespace convrank
