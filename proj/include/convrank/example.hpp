#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "convrank/common.hpp"
#include "convrank/text.hpp"
#include "convrank/tree.hpp"
#include "convrank/vocab.hpp"

namespace convrank {

// One (context, input, author, response) record. Context and messages are
// stored as token lists so example files stay independent of any particular
// embedding table.
struct Example {
  std::vector<TokenizedMessage> context;  // root-ward to leaf-ward, <= m entries
  TokenizedMessage input;
  std::uint32_t author_id = 0;
  TokenizedMessage response;
  bool positive = true;
  std::string post_id;
};

// Author id used by examples of users outside the population (new-user
// adaptation histories). Never produced by regular extraction.
inline constexpr std::uint32_t kUnknownAuthor = 0xffffffffu;

struct ExtractConfig {
  int max_context = 25;        // m
  int max_post_size = 1000;    // comment cap; bigger posts are mega-threads
  int neg_per_pos = 1;
  std::uint64_t seed = 1;

  void validate() const {
    if (max_context < 0) throw ConfigError("max_context must be >= 0");
    if (max_post_size < 1) throw ConfigError("max_post_size must be >= 1");
    if (neg_per_pos < 1) throw ConfigError("neg_per_pos must be >= 1");
  }
};

namespace detail {

// Deleted bodies count as missing text: they tokenize to nothing but still
// occupy their message slot in a context.
inline TokenizedMessage message_tokens(const std::string& body) {
  if (body == kDeletedMarker) return {};
  return tokenize(strip_markdown(body));
}

inline std::string join_tokens(const TokenizedMessage& tokens) {
  std::string s;
  for (const auto& t : tokens) {
    s.append(t);
    s.push_back('\x1f');
  }
  return s;
}

}  // namespace detail

struct ExtractCounts {
  std::uint64_t positives = 0;
  std::uint64_t mega_threads = 0;
  std::uint64_t skipped_empty_input = 0;
  std::uint64_t skipped_author = 0;
};

namespace detail {

// Shared walk for extraction: AuthorFn maps a comment to an author index or
// nullopt (skip).
template <typename AuthorFn>
bool extract_examples_impl(const PostTree& tree, const ExtractConfig& config, AuthorFn&& author_of,
                           std::vector<Example>& out, ExtractCounts* counts) {
  config.validate();
  if (tree.comment_count() > std::size_t(config.max_post_size)) {
    if (counts) ++counts->mega_threads;
    return false;
  }

  // Tokenize each message once; the root (title) is keyed by post_id.
  std::unordered_map<std::string, TokenizedMessage> tokens_of;
  tokens_of.reserve(tree.comment_count() + 1);
  tokens_of.emplace(tree.post_id, detail::message_tokens(tree.title));
  for (const Comment* c : tree.preorder()) tokens_of.emplace(c->id, detail::message_tokens(c->body));

  for (const Comment* c : tree.preorder()) {
    const std::string& parent = c->parent_id ? *c->parent_id : tree.post_id;
    const TokenizedMessage& input = tokens_of.at(parent);
    if (input.empty()) {
      if (counts) ++counts->skipped_empty_input;
      continue;
    }
    std::optional<std::uint32_t> author = author_of(*c);
    if (!author) {
      if (counts) ++counts->skipped_author;
      continue;
    }

    // Ancestors of the parent, nearest first, truncated at max_context, then
    // reversed so the context reads root-ward to leaf-ward.
    std::vector<TokenizedMessage> context;
    if (parent != tree.post_id) {
      const Comment* p = tree.find(parent);
      std::string walk = p->parent_id ? *p->parent_id : tree.post_id;
      while (int(context.size()) < config.max_context) {
        context.push_back(tokens_of.at(walk));
        if (walk == tree.post_id) break;
        const Comment* a = tree.find(walk);
        walk = a->parent_id ? *a->parent_id : tree.post_id;
      }
      std::reverse(context.begin(), context.end());
    }

    Example ex;
    ex.context = std::move(context);
    ex.input = input;
    ex.author_id = *author;
    ex.response = tokens_of.at(c->id);
    ex.positive = true;
    ex.post_id = tree.post_id;
    out.push_back(std::move(ex));
    if (counts) ++counts->positives;
  }
  return true;
}

}  // namespace detail

// Positive examples of one tree: each comment whose parent tokenizes to a
// non-empty input and whose author is in the population yields one example.
// The comment's grand-ancestors (nearest max_context of them, the post title
// included as the root message) form the context. Returns false without
// touching `out` when the tree is a mega-thread.
inline bool extract_examples(const PostTree& tree, const ExtractConfig& config,
                             const Vocabulary& vocab, std::vector<Example>& out,
                             ExtractCounts* counts = nullptr) {
  return detail::extract_examples_impl(
      tree, config,
      [&](const Comment& c) -> std::optional<std::uint32_t> {
        if (c.author == kDeletedMarker) return std::nullopt;
        return vocab.user_id(c.author);
      },
      out, counts);
}

// History of one named user, population membership not required: the
// positives a new-user adaptation trains on. author_id comes back as
// kUnknownAuthor since the user has no embedding row.
inline std::vector<Example> extract_user_history(const std::vector<PostTree>& trees,
                                                 const ExtractConfig& config,
                                                 const std::string& author) {
  std::vector<Example> out;
  for (const auto& tree : trees) {
    detail::extract_examples_impl(
        tree, config,
        [&](const Comment& c) -> std::optional<std::uint32_t> {
          if (c.author != author || c.author == kDeletedMarker) return std::nullopt;
          return kUnknownAuthor;
        },
        out, nullptr);
  }
  return out;
}

inline std::vector<Example> extract_all(const std::vector<PostTree>& trees,
                                        const ExtractConfig& config, const Vocabulary& vocab,
                                        ExtractCounts* counts = nullptr) {
  std::vector<Example> out;
  for (const auto& tree : trees) extract_examples(tree, config, vocab, out, counts);
  return out;
}

// ---------------------------------------------------------------------------
// Negative sampling.
// ---------------------------------------------------------------------------

// The corpus-wide pool of positive responses, fixed once per dataset build.
struct ResponsePool {
  std::vector<const TokenizedMessage*> responses;

  static ResponsePool of(const std::vector<Example>& positives) {
    ResponsePool pool;
    pool.responses.reserve(positives.size());
    for (const auto& ex : positives) pool.responses.push_back(&ex.response);
    return pool;
  }
};

// For each positive, neg_per_pos copies with the response replaced by a
// uniform draw from the pool; draws token-identical to the true response are
// rejected and retried. Randomness is keyed by (seed, post, ordinal within
// post), so extraction over disjoint tree partitions cannot change it.
inline std::vector<Example> sample_negatives(const std::vector<Example>& positives,
                                             const ResponsePool& pool,
                                             const ExtractConfig& config) {
  std::vector<Example> negatives;
  negatives.reserve(positives.size() * std::size_t(config.neg_per_pos));
  std::unordered_map<std::string, std::uint64_t> post_ordinal;
  for (const auto& pos : positives) {
    std::uint64_t ordinal = post_ordinal[pos.post_id]++;
    Rng rng(mix64(config.seed, mix64(fnv1a64(pos.post_id), ordinal)));
    for (int k = 0; k < config.neg_per_pos; ++k) {
      const TokenizedMessage* draw = nullptr;
      for (int attempt = 0;; ++attempt) {
        const TokenizedMessage* candidate = pool.responses[rng.below(pool.responses.size())];
        if (*candidate != pos.response) {
          draw = candidate;
          break;
        }
        if (attempt == 64) {
          bool any_distinct = std::any_of(
              pool.responses.begin(), pool.responses.end(),
              [&](const TokenizedMessage* r) { return *r != pos.response; });
          if (!any_distinct)
            throw DataError("response pool has no distractor distinct from the true response");
        }
      }
      Example neg = pos;
      neg.response = *draw;
      neg.positive = false;
      negatives.push_back(std::move(neg));
    }
  }
  return negatives;
}

// ---------------------------------------------------------------------------
// Splitting.
// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.90;
  double dev = 0.05;
  double test = 0.05;

  void validate() const {
    double sum = train + dev + test;
    if (train < 0 || dev < 0 || test < 0 || sum < 1.0 - 1e-9 || sum > 1.0 + 1e-9)
      throw ConfigError("split ratios must be non-negative and sum to 1");
  }
};

enum class Split { train = 0, dev = 1, test = 2 };

// Assignment is a pure function of the post id, so every example of a post
// (positives and their negatives alike) lands in one partition and responses
// cannot leak across splits. The extra mixing step avalanches FNV's weak low
// bits, which otherwise skew the fractions on sequential ids.
inline Split split_of(const std::string& post_id, const SplitRatios& ratios) {
  std::uint64_t state = fnv1a64(post_id);
  double u = double(splitmix64(state) >> 11) * 0x1.0p-53;
  if (u < ratios.train) return Split::train;
  if (u < ratios.train + ratios.dev) return Split::dev;
  return Split::test;
}

struct SplitExamples {
  std::vector<Example> train, dev, test;

  std::vector<Example>& of(Split s) {
    switch (s) {
      case Split::train: return train;
      case Split::dev: return dev;
      default: return test;
    }
  }
};

inline SplitExamples split_examples(std::vector<Example> examples, const SplitRatios& ratios) {
  ratios.validate();
  SplitExamples out;
  for (auto& ex : examples) out.of(split_of(ex.post_id, ratios)).push_back(std::move(ex));
  return out;
}

// ---------------------------------------------------------------------------
// Example file (kind 2).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_message(BinWriter& w, const TokenizedMessage& msg) {
  w.u32(std::uint32_t(msg.size()));
  for (const auto& t : msg) w.str(t);
}

inline TokenizedMessage read_message(BinReader& r) {
  std::uint32_t n = r.u32();
  TokenizedMessage msg;
  msg.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) msg.push_back(r.str());
  return msg;
}

}  // namespace detail

inline void save_examples(std::ostream& out, const std::vector<Example>& examples) {
  BinWriter w(out);
  w.header(FileKind::examples);
  w.u64(examples.size());
  for (const auto& ex : examples) {
    w.str(ex.post_id);
    w.u32(ex.author_id);
    w.u8(ex.positive ? 1 : 0);
    w.u16(std::uint16_t(ex.context.size()));
    for (const auto& msg : ex.context) detail::write_message(w, msg);
    detail::write_message(w, ex.input);
    detail::write_message(w, ex.response);
  }
}

inline std::vector<Example> load_examples(std::istream& in) {
  BinReader r(in);
  r.expect_header(FileKind::examples);
  std::uint64_t n = r.u64();
  std::vector<Example> examples;
  examples.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    Example ex;
    ex.post_id = r.str();
    ex.author_id = r.u32();
    ex.positive = r.u8() != 0;
    std::uint16_t n_ctx = r.u16();
    ex.context.reserve(n_ctx);
    for (std::uint16_t k = 0; k < n_ctx; ++k) ex.context.push_back(detail::read_message(r));
    ex.input = detail::read_message(r);
    ex.response = detail::read_message(r);
    examples.push_back(std::move(ex));
  }
  return examples;
}

// Interleaves each positive with its negatives, per post in extraction
// order; this is the on-disk order training consumes.
inline std::vector<Example> interleave_with_negatives(const std::vector<Example>& positives,
                                                      const std::vector<Example>& negatives,
                                                      int neg_per_pos) {
  if (negatives.size() != positives.size() * std::size_t(neg_per_pos))
    throw DataError("negative count does not match positives * neg_per_pos");
  std::vector<Example> out;
  out.reserve(positives.size() + negatives.size());
  for (std::size_t i = 0; i < positives.size(); ++i) {
    out.push_back(positives[i]);
    for (int k = 0; k < neg_per_pos; ++k)
      out.push_back(negatives[i * std::size_t(neg_per_pos) + std::size_t(k)]);
  }
  return out;
}

}  // namespace convrank
