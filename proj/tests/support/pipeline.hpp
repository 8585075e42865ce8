#pragma once

// In-memory pipeline composition used by the training/eval tests and the
// acceptance suite: dump text -> trees -> vocabulary -> split example sets.

#include <sstream>
#include <string>

#include "convrank/convrank.hpp"
#include "support/synthetic.hpp"

namespace pipeline {

struct BuiltCorpus {
  convrank::BuildResult trees;
  convrank::Vocabulary vocab;
  convrank::ExtractCounts counts;
  convrank::SplitExamples splits;
  synthetic::GenResult gen;
};

inline BuiltCorpus build(const synthetic::GenConfig& gen_cfg, const convrank::ExtractConfig& ex_cfg,
                         std::uint64_t k1 = 5000, std::uint64_t k2 = 5000,
                         std::uint64_t users = 0) {
  using namespace convrank;
  BuiltCorpus out;
  out.gen = synthetic::generate_dump(gen_cfg);
  std::istringstream in(out.gen.jsonl);
  auto parsed = parse_dump(in, ParseMode::lenient);
  out.trees = build_trees(parsed.comments);

  auto counts = count_corpus(out.trees.trees);
  build_ngram_vocab(out.vocab, counts.ngrams, k1, k2);
  std::uint64_t p = users ? users : std::uint64_t(gen_cfg.authors);
  build_user_population(out.vocab, counts.user_comments, p);

  auto positives = extract_all(out.trees.trees, ex_cfg, out.vocab, &out.counts);
  auto pool = ResponsePool::of(positives);
  auto negatives = sample_negatives(positives, pool, ex_cfg);
  auto interleaved = interleave_with_negatives(positives, negatives, ex_cfg.neg_per_pos);
  out.splits = split_examples(std::move(interleaved), {});
  return out;
}

}  // namespace pipeline
