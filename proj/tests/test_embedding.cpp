#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "convrank/embedding.hpp"
#include "convrank/vocab.hpp"

using namespace convrank;

namespace {

Vocabulary tiny_vocab() {
  Vocabulary vocab;
  vocab.set_ngrams({{"a", 9}, {"b", 8}, {"c", 7}, {"d", 6}},
                   {{"a b", 5}, {"b a", 4}, {"b c", 3}});
  vocab.set_users({{"u0", 3}, {"u1", 2}});
  return vocab;
}

// Independent reference: direct token loops, no extract_ngrams, same
// occurrence order (per message: unigrams left-to-right, then bigrams).
template <typename T>
std::vector<T> oracle_bag(const std::vector<TokenizedMessage>& msgs, const EmbeddingTable<T>& table,
                          const Vocabulary& vocab) {
  std::vector<double> acc(table.dim(), 0.0);
  std::uint64_t total = 0;
  auto add = [&](const std::string& key) {
    auto id = vocab.ngram_id(key);
    if (!id) return;
    auto row = table.row(*id);
    for (std::size_t k = 0; k < row.size(); ++k) acc[k] += double(row[k]);
    ++total;
  };
  for (const auto& msg : msgs) {
    for (const auto& tok : msg) add(tok);
    for (std::size_t i = 0; i + 1 < msg.size(); ++i) add(msg[i] + " " + msg[i + 1]);
  }
  std::vector<T> out(table.dim(), T(0));
  if (total) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = T(acc[k] / double(total));
  }
  return out;
}

}  // namespace

TEST_CASE("bag embedding basics") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(3);
  auto table = init_table<double>(vocab.ngram_size(), 4, rng);

  SECTION("single in-vocab ngram returns its row exactly") {
    TokenizedMessage msg = {"c"};  // unigram c, no bigram
    auto psi = bag_embed(msg, table, vocab);
    auto row = table.row(*vocab.ngram_id("c"));
    for (std::size_t k = 0; k < 4; ++k) CHECK(psi[k] == row[k]);
  }

  SECTION("two single-token messages average their rows") {
    std::vector<TokenizedMessage> msgs = {{"a"}, {"b"}};
    auto psi = bag_embed(std::span<const TokenizedMessage>(msgs), table, vocab);
    auto ra = table.row(*vocab.ngram_id("a"));
    auto rb = table.row(*vocab.ngram_id("b"));
    for (std::size_t k = 0; k < 4; ++k) CHECK(psi[k] == (ra[k] + rb[k]) / 2.0);
  }

  SECTION("repeated tokens weight by occurrence count, L counts bigrams") {
    TokenizedMessage msg = {"a", "b", "a"};  // unigrams a b a + bigrams "a b" "b a": L = 5
    BagRef bag;
    auto psi = bag_embed(msg, table, vocab, &bag);
    CHECK(bag.total == 5);
    auto ra = table.row(*vocab.ngram_id("a"));
    auto rb = table.row(*vocab.ngram_id("b"));
    auto rab = table.row(*vocab.ngram_id("a b"));
    auto rba = table.row(*vocab.ngram_id("b a"));
    for (std::size_t k = 0; k < 4; ++k) {
      double expect = (ra[k] + rb[k] + ra[k] + rab[k] + rba[k]) / 5.0;
      CHECK(psi[k] == expect);
    }
  }

  SECTION("empty and all-OOV bags are zero vectors") {
    TokenizedMessage empty;
    TokenizedMessage oov = {"zzz", "qqq"};
    for (double v : bag_embed(empty, table, vocab)) CHECK(v == 0.0);
    for (double v : bag_embed(oov, table, vocab)) CHECK(v == 0.0);
  }
}

TEST_CASE("bag embedding matches the brute-force oracle bit for bit") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(17);
  auto table = init_table<double>(vocab.ngram_size(), 6, rng);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d", "zzz"};

  Rng gen(555);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<TokenizedMessage> msgs(gen.below(4));
    for (auto& msg : msgs) {
      msg.resize(gen.below(8));
      for (auto& tok : msg) tok = alphabet[gen.below(alphabet.size())];
    }
    auto fast = bag_embed(std::span<const TokenizedMessage>(msgs), table, vocab);
    auto slow = oracle_bag(msgs, table, vocab);
    for (std::size_t k = 0; k < fast.size(); ++k) CHECK(fast[k] == slow[k]);
  }
}

TEST_CASE("bag semantics: permutation and OOV invariance") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(29);
  auto table = init_table<double>(vocab.ngram_size(), 5, rng);

  SECTION("shuffling context message order leaves the average unchanged") {
    std::vector<TokenizedMessage> ctx = {{"a"}, {"b"}, {"c"}, {"d"}};
    auto base = bag_embed(std::span<const TokenizedMessage>(ctx), table, vocab);
    std::vector<TokenizedMessage> shuffled = {{"d"}, {"b"}, {"a"}, {"c"}};
    auto moved = bag_embed(std::span<const TokenizedMessage>(shuffled), table, vocab);
    for (std::size_t k = 0; k < base.size(); ++k)
      CHECK(moved[k] == Catch::Approx(base[k]).epsilon(1e-12));
  }

  SECTION("appending an OOV-only message never changes the embedding") {
    std::vector<TokenizedMessage> msgs = {{"a", "b"}};
    auto base = bag_embed(std::span<const TokenizedMessage>(msgs), table, vocab);
    msgs.push_back({"zzz"});
    auto extended = bag_embed(std::span<const TokenizedMessage>(msgs), table, vocab);
    for (std::size_t k = 0; k < base.size(); ++k) CHECK(extended[k] == base[k]);
  }
}

TEST_CASE("featurization") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(7);
  auto ngrams = init_table<double>(vocab.ngram_size(), 4, rng);
  auto users = init_table<double>(vocab.user_size(), 4, rng);

  Example ex;
  ex.input = {"a", "b"};
  ex.response = {"c"};
  ex.author_id = 1;

  SECTION("empty context forces a zero C") {
    auto f = featurize(ex, ngrams, users, vocab);
    for (double v : f.vectors.context) CHECK(v == 0.0);
    bool any_nonzero = std::any_of(f.vectors.input.begin(), f.vectors.input.end(),
                                   [](double v) { return v != 0.0; });
    CHECK(any_nonzero);
    auto row = users.row(1);
    for (std::size_t k = 0; k < 4; ++k) CHECK(f.vectors.author[k] == row[k]);
  }

  SECTION("context pools all its messages into one bag") {
    ex.context = {{"a"}, {"b"}, {"d"}};
    auto f = featurize(ex, ngrams, users, vocab);
    auto expected = bag_embed(std::span<const TokenizedMessage>(ex.context), ngrams, vocab);
    CHECK(f.vectors.context == expected);
    CHECK(f.bags.context.total == 3);
  }

  SECTION("out-of-range author is an error") {
    ex.author_id = 17;
    CHECK_THROWS_AS(featurize(ex, ngrams, users, vocab), DataError);
  }

  SECTION("masks zero the disabled features") {
    ex.context = {{"a"}};
    FeatureMask mask;
    mask.use_context = false;
    mask.use_author = false;
    auto f = featurize(ex, ngrams, users, vocab, mask);
    for (double v : f.vectors.context) CHECK(v == 0.0);
    for (double v : f.vectors.author) CHECK(v == 0.0);
    CHECK(f.bags.context.total == 0);
    CHECK(f.bags.author_row == kUnknownAuthor);
  }
}

TEST_CASE("table initialization is seeded and uniform") {
  Rng a(123);
  Rng b(123);
  auto t1 = init_table<float>(50, 16, a);
  auto t2 = init_table<float>(50, 16, b);
  CHECK(t1.data() == t2.data());

  Rng c(124);
  auto t3 = init_table<float>(50, 16, c);
  CHECK(t1.data() != t3.data());

  // mean of uniform[-1/4, 1/4] over n = 800 entries: within 3 sigma/sqrt(n)
  double bound = 1.0 / std::sqrt(16.0);
  double sum = 0.0;
  for (float v : t1.data()) {
    CHECK(std::fabs(v) <= bound);
    sum += v;
  }
  double mean = sum / double(t1.data().size());
  double sigma = bound / std::sqrt(3.0);
  CHECK(std::fabs(mean) <= 3.0 * sigma / std::sqrt(double(t1.data().size())));
}
