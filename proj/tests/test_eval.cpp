#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "convrank/eval.hpp"
#include "convrank/vocab.hpp"

using namespace convrank;

namespace {

Vocabulary tiny_vocab() {
  Vocabulary vocab;
  std::vector<VocabEntry> unigrams;
  for (int i = 0; i < 30; ++i) unigrams.push_back({"w" + std::to_string(i), std::uint64_t(30 - i)});
  vocab.set_ngrams(std::move(unigrams), {{"w0 w1", 2}});
  vocab.set_users({{"u0", 5}, {"u1", 4}, {"u2", 3}});
  return vocab;
}

std::vector<Example> synthetic_test_set(int n, Rng& rng) {
  std::vector<Example> out;
  for (int i = 0; i < n; ++i) {
    Example ex;
    ex.post_id = "p" + std::to_string(i / 4);
    ex.author_id = std::uint32_t(rng.below(3));
    ex.input = {"w" + std::to_string(rng.below(30))};
    ex.context = {{"w" + std::to_string(rng.below(30))}};
    ex.response = {"w" + std::to_string(rng.below(30)), "w" + std::to_string(i % 30)};
    ex.positive = true;
    out.push_back(ex);
  }
  return out;
}

}  // namespace

TEST_CASE("pool construction") {
  Rng rng(8);
  auto test_set = synthetic_test_set(60, rng);

  SECTION("N=1 pools hold only the positive") {
    auto pools = build_pools(test_set, 1, 20, 42);
    REQUIRE(pools.size() == 20);
    for (const auto& pool : pools) {
      CHECK(pool.candidates.size() == 1);
      CHECK(pool.positive_index == 0);
    }
  }

  SECTION("pools have N distinct candidates with one positive") {
    auto pools = build_pools(test_set, 10, 50, 42);
    for (const auto& pool : pools) {
      REQUIRE(pool.candidates.size() == 10);
      std::set<std::string> keys;
      for (const auto& c : pool.candidates) keys.insert(detail::join_tokens(c));
      CHECK(keys.size() == 10);  // no duplicates within the pool
      CHECK(pool.positive_index < 10);
    }
  }

  SECTION("fixed seed reproduces pools exactly") {
    auto a = build_pools(test_set, 10, 30, 7);
    auto b = build_pools(test_set, 10, 30, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].positive_index == b[i].positive_index);
      CHECK(a[i].candidates == b[i].candidates);
      CHECK(a[i].input == b[i].input);
    }
  }

  SECTION("too few distinct responses is an error") {
    std::vector<Example> few;
    for (int i = 0; i < 5; ++i) {
      Example ex;
      ex.response = {"same"};
      ex.positive = true;
      few.push_back(ex);
    }
    CHECK_THROWS_AS(build_pools(few, 10, 5, 1), DataError);
  }

  SECTION("negatives are ignored when picking positives") {
    auto with_negs = test_set;
    Example neg = test_set[0];
    neg.positive = false;
    neg.response = {"negativeresponse"};
    for (int i = 0; i < 50; ++i) with_negs.push_back(neg);
    auto pools = build_pools(with_negs, 5, 40, 3);
    for (const auto& pool : pools)
      for (const auto& c : pool.candidates) CHECK(c != neg.response);
  }
}

TEST_CASE("pool scoring rules") {
  SECTION("strict-win semantics: ties count as failures") {
    std::vector<double> tie = {0.5, 0.5, 0.1};
    CHECK_FALSE(pool_won(std::span<const double>(tie), 0));
    std::vector<double> win = {0.6, 0.5, 0.1};
    CHECK(pool_won(std::span<const double>(win), 0));
    std::vector<double> lone = {0.123};
    CHECK(pool_won(std::span<const double>(lone), 0));
  }

  SECTION("wins are invariant under distractor permutation") {
    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> scores(8);
      for (auto& s : scores) s = rng.real();
      std::size_t pos = rng.below(8);
      bool base = pool_won(std::span<const double>(scores), pos);
      // swap two distractors
      std::size_t i = rng.below(8), j = rng.below(8);
      if (i == pos || j == pos) continue;
      std::swap(scores[i], scores[j]);
      CHECK(pool_won(std::span<const double>(scores), pos) == base);
    }
  }

  SECTION("wins are invariant under strictly increasing transforms") {
    Rng rng(78);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> scores(6);
      for (auto& s : scores) s = rng.uniform(-2.0, 2.0);
      std::size_t pos = rng.below(6);
      bool base = pool_won(std::span<const double>(scores), pos);
      std::vector<double> mapped(6);
      for (std::size_t k = 0; k < 6; ++k) mapped[k] = std::tanh(scores[k]) * 3.0 + 1.0;
      CHECK(pool_won(std::span<const double>(mapped), pos) == base);
    }
  }
}

TEST_CASE("precision at 1 end to end") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(5);
  auto test_set = synthetic_test_set(80, rng);
  auto params = init_model<float>(Arch::multi, vocab.ngram_size(), vocab.user_size(), 8,
                                  {8, 4}, 31);

  SECTION("N=1 gives P@1 of exactly one") {
    auto pools = build_pools(test_set, 1, 25, 9);
    auto result = precision_at_1(params, vocab, pools);
    CHECK(result.p_at_1 == 1.0);
    CHECK(result.wins == 25);
  }

  SECTION("wins times pools is an integer count") {
    auto pools = build_pools(test_set, 5, 33, 9);
    auto result = precision_at_1(params, vocab, pools);
    CHECK(double(result.wins) == result.p_at_1 * double(result.pools));
  }

  SECTION("empty pool list is an error") {
    CHECK_THROWS_AS(precision_at_1(params, vocab, {}), DataError);
  }
}

TEST_CASE("classifier accuracy") {
  Vocabulary vocab = tiny_vocab();
  auto params = init_model<float>(Arch::single, vocab.ngram_size(), vocab.user_size(), 8,
                                  {8, 4}, 3);
  Rng rng(6);
  auto examples = synthetic_test_set(40, rng);

  SECTION("all-positive set scored by a confident model is perfect") {
    // saturate the head toward "positive"
    params.single().head.b = 30.0f;
    CHECK(classifier_accuracy(params, vocab, examples) == 1.0);
  }

  SECTION("empty set is an error") {
    CHECK_THROWS_AS(classifier_accuracy(params, vocab, {}), DataError);
  }
}

TEST_CASE("pearson correlation") {
  SECTION("perfectly linear pairs give one") {
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 6; ++i) pairs.emplace_back(i, 2.0 * i + 1.0);
    auto r = pearson_correlation(pairs);
    REQUIRE(r.has_value());
    CHECK(*r == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("anti-linear pairs give minus one") {
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 6; ++i) pairs.emplace_back(i, -3.0 * i);
    auto r = pearson_correlation(pairs);
    REQUIRE(r.has_value());
    CHECK(*r == Catch::Approx(-1.0).margin(1e-12));
  }

  SECTION("zero variance is undefined") {
    std::vector<std::pair<double, double>> flat = {{1, 2}, {1, 3}, {1, 4}, {1, 5}, {1, 6}};
    CHECK_FALSE(pearson_correlation(flat).has_value());
  }
}

TEST_CASE("ablation table formatting") {
  Vocabulary vocab = tiny_vocab();
  Rng rng(5);
  auto test_set = synthetic_test_set(50, rng);
  auto pools = build_pools(test_set, 5, 10, 2);
  auto model = init_model<float>(Arch::multi, vocab.ngram_size(), vocab.user_size(), 8, {8, 4}, 3);

  std::vector<AblationRun<float>> runs;
  runs.push_back({"message", &model, &pools, 5});
  runs.push_back({"message + context", nullptr, nullptr, 5});  // missing configuration
  auto cells = ablation_sweep(vocab, runs);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].p_at_1.has_value());
  CHECK_FALSE(cells[1].p_at_1.has_value());

  auto table = format_ablation_table(cells);
  CHECK(table.find("message + context") != std::string::npos);
  CHECK(table.find("absent") != std::string::npos);
}
