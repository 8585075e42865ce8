// convrank: end-to-end response-selection toolkit.
//
// Pipeline:  ingest -> stats/vocab -> examples -> train -> eval
// Extras:    adapt (new-user vector), rank (score ad-hoc candidates)
//
// Every subcommand accepts --config FILE (key=value, flags win over file
// values). Exit codes: 0 ok, 1 usage/config, 2 data error, 3 numeric
// failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "convrank/convrank.hpp"

namespace fs = std::filesystem;
using namespace convrank;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

Vocabulary load_vocab_file(const std::string& path) {
  auto in = open_in(path);
  return load_vocabulary(in);
}

ModelParams<float> load_model_file(const std::string& path, const Vocabulary& vocab) {
  auto in = open_in(path);
  return load_checkpoint(in, vocab);
}

std::vector<Example> load_examples_file(const std::string& path) {
  auto in = open_in(path);
  return load_examples(in);
}

std::vector<std::size_t> parse_hidden(const std::string& spec) {
  std::vector<std::size_t> dims;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    dims.push_back(std::size_t(std::stoul(part)));
  }
  if (dims.empty()) throw ConfigError("hidden layer spec '" + spec + "' is empty");
  return dims;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestOpts {
  std::string dump, out;
  bool strict = false;
};

int cmd_ingest(const IngestOpts& opt) {
  auto in = open_in(opt.dump);
  auto parsed = parse_dump(in, opt.strict ? ParseMode::strict : ParseMode::lenient);
  auto built = build_trees(parsed.comments);

  TreeStore store;
  store.trees = std::move(built.trees);
  store.orphans = built.orphans;
  store.skipped_lines = parsed.skipped;
  auto out = open_out(opt.out);
  save_trees(out, store);

  std::uint64_t comments = 0;
  for (const auto& t : store.trees) comments += t.comment_count();
  std::cout << "lines\t" << parsed.lines << "\nskipped\t" << parsed.skipped << "\nposts\t"
            << store.trees.size() << "\ncomments\t" << comments << "\norphans\t" << store.orphans
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

struct StatsOpts {
  std::string trees, out_dir;
};

int cmd_stats(const StatsOpts& opt) {
  auto in = open_in(opt.trees);
  auto store = load_trees(in);
  auto stats = dataset_stats(store.trees);
  fs::create_directories(opt.out_dir);
  auto write = [&](const std::string& name, const CdfTable& table) {
    auto out = open_out((fs::path(opt.out_dir) / name).string());
    write_cdf_tsv(out, table);
  };
  write("comments_per_user.tsv", stats.comments_per_user);
  write("comments_per_post.tsv", stats.comments_per_post);
  write("replies_per_comment.tsv", stats.replies_per_comment);
  write("comment_depth.tsv", stats.comment_depth);
  std::cout << "wrote 4 tables to " << opt.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// vocab
// ---------------------------------------------------------------------------

struct VocabOpts {
  std::string trees, out, tsv;
  std::uint64_t unigrams = 5000, bigrams = 5000, users = 1000;
};

int cmd_vocab(const VocabOpts& opt) {
  auto in = open_in(opt.trees);
  auto store = load_trees(in);
  auto counts = count_corpus(store.trees);

  Vocabulary vocab;
  VocabBuildInfo info;
  build_ngram_vocab(vocab, counts.ngrams, opt.unigrams, opt.bigrams, &info);
  build_user_population(vocab, counts.user_comments, opt.users, &info);

  auto out = open_out(opt.out);
  save_vocabulary(out, vocab);
  if (!opt.tsv.empty()) {
    auto tsv = open_out(opt.tsv);
    write_vocabulary_tsv(tsv, vocab);
  }

  std::cout << "unigrams\t" << vocab.unigram_size() << (info.unigrams_exhausted ? " (all)" : "")
            << "\nbigrams\t" << vocab.bigram_size() << (info.bigrams_exhausted ? " (all)" : "")
            << "\nusers\t" << vocab.user_size() << (info.users_exhausted ? " (all)" : "")
            << "\nmin_unigram_count\t" << vocab.min_unigram_count() << "\nmin_bigram_count\t"
            << vocab.min_bigram_count() << "\nngram_fingerprint\t" << vocab.ngram_fingerprint()
            << "\nuser_fingerprint\t" << vocab.user_fingerprint() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// examples
// ---------------------------------------------------------------------------

struct ExamplesOpts {
  std::string trees, vocab, out_prefix;
  ExtractConfig extract;
  SplitRatios ratios;
};

int cmd_examples(const ExamplesOpts& opt) {
  auto tin = open_in(opt.trees);
  auto store = load_trees(tin);
  auto vocab = load_vocab_file(opt.vocab);

  ExtractCounts counts;
  auto positives = extract_all(store.trees, opt.extract, vocab, &counts);
  if (positives.empty()) throw DataError("no examples could be extracted");
  auto pool = ResponsePool::of(positives);
  auto negatives = sample_negatives(positives, pool, opt.extract);
  auto interleaved = interleave_with_negatives(positives, negatives, opt.extract.neg_per_pos);
  auto splits = split_examples(std::move(interleaved), opt.ratios);

  auto write = [&](const std::string& suffix, const std::vector<Example>& examples) {
    auto out = open_out(opt.out_prefix + suffix);
    save_examples(out, examples);
  };
  write(".train.cvrk", splits.train);
  write(".dev.cvrk", splits.dev);
  write(".test.cvrk", splits.test);

  std::cout << "positives\t" << counts.positives << "\nnegatives\t" << negatives.size()
            << "\nmega_threads\t" << counts.mega_threads << "\nskipped_empty_input\t"
            << counts.skipped_empty_input << "\nskipped_author\t" << counts.skipped_author
            << "\ntrain\t" << splits.train.size() << "\ndev\t" << splits.dev.size() << "\ntest\t"
            << splits.test.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string train_file, dev_file, vocab, out, report;
  std::string arch = "multi";
  std::string hidden = "32,16,8";
  TrainConfig config;
  bool no_context = false, no_author = false;
};

int cmd_train(const TrainOpts& opt) {
  auto vocab = load_vocab_file(opt.vocab);
  auto train_set = load_examples_file(opt.train_file);
  auto dev_set = load_examples_file(opt.dev_file);

  TrainConfig cfg = opt.config;
  cfg.arch = arch_from_name(opt.arch);
  cfg.hidden = parse_hidden(opt.hidden);
  cfg.mask.use_context = !opt.no_context;
  cfg.mask.use_author = !opt.no_author;

  auto result = train<float>(train_set, dev_set, vocab, cfg);

  auto out = open_out(opt.out);
  save_checkpoint(out, result.best, vocab);
  if (!opt.report.empty()) {
    auto rep = open_out(opt.report);
    write_train_report_tsv(rep, result.report);
  }

  double best = 0;
  for (const auto& r : result.report.checkpoints) best = std::max(best, r.dev_accuracy);
  std::cout << "examples\t" << result.report.examples_processed << "\ncheckpoints\t"
            << result.report.checkpoints.size() << "\nbest_dev_accuracy\t" << best
            << "\nplateau_stopped\t" << (result.report.plateau_stopped ? 1 : 0) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOpts {
  std::string model, vocab, examples, out;
  int n = 10;
  int pools = 2000;
  std::uint64_t seed = 1;
};

int cmd_eval(const EvalOpts& opt) {
  auto vocab = load_vocab_file(opt.vocab);
  auto model = load_model_file(opt.model, vocab);
  auto test_set = load_examples_file(opt.examples);

  auto pools = build_pools(test_set, opt.n, opt.pools, opt.seed);
  auto precision = precision_at_1(model, vocab, pools);
  double accuracy = classifier_accuracy(model, vocab, test_set);

  EvalReport report;
  report.p_at_1 = precision.p_at_1;
  report.pools = precision.pools;
  report.n = opt.n;
  report.classifier_accuracy = accuracy;
  if (!opt.out.empty()) {
    auto out = open_out(opt.out);
    write_eval_report_tsv(out, report);
  }
  std::cout << "P@1\t" << report.p_at_1 << "\npools\t" << report.pools << "\nN\t" << report.n
            << "\nclassifier_accuracy\t" << report.classifier_accuracy << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// adapt
// ---------------------------------------------------------------------------

struct AdaptOpts {
  std::string model, vocab, trees, author, out;
  int steps = 200;
  double lr = 0.03;
  std::uint64_t seed = 1;
  int max_context = 25;
};

int cmd_adapt(const AdaptOpts& opt) {
  auto vocab = load_vocab_file(opt.vocab);
  auto model = load_model_file(opt.model, vocab);
  auto tin = open_in(opt.trees);
  auto store = load_trees(tin);

  ExtractConfig ex_cfg;
  ex_cfg.max_context = opt.max_context;
  ex_cfg.seed = opt.seed;
  auto positives = extract_user_history(store.trees, ex_cfg, opt.author);

  // Distractor pool: every other author's messages in the same trees.
  std::vector<TokenizedMessage> other_responses;
  for (const auto& tree : store.trees) {
    for (const Comment* c : tree.preorder()) {
      if (c->author == opt.author || c->author == kDeletedMarker) continue;
      if (c->body == kDeletedMarker) continue;
      auto tokens = tokenize(strip_markdown(c->body));
      if (!tokens.empty()) other_responses.push_back(std::move(tokens));
    }
  }
  std::vector<Example> history = positives;
  if (!positives.empty() && !other_responses.empty()) {
    ResponsePool pool;
    for (const auto& r : other_responses) pool.responses.push_back(&r);
    auto negatives = sample_negatives(positives, pool, ex_cfg);
    history = interleave_with_negatives(positives, negatives, ex_cfg.neg_per_pos);
  }

  auto result = adapt_new_user(model, vocab, history, opt.steps, opt.lr, opt.seed);
  auto out = open_out(opt.out);
  save_user_vector(out, std::span<const float>(result.vector));
  std::cout << "history_examples\t" << history.size() << "\nadapted\t" << (result.adapted ? 1 : 0)
            << "\n";
  if (!result.adapted)
    std::cerr << "warning: empty history for '" << opt.author
              << "'; wrote the random initialization\n";
  return 0;
}

// ---------------------------------------------------------------------------
// rank
// ---------------------------------------------------------------------------

struct RankOpts {
  std::string model, vocab, input, context_file, author, author_vec, candidates;
};

int cmd_rank(const RankOpts& opt) {
  auto vocab = load_vocab_file(opt.vocab);
  auto model = load_model_file(opt.model, vocab);

  Example probe;
  probe.input = tokenize(strip_markdown(opt.input));
  if (probe.input.empty()) throw DataError("input message tokenizes to nothing");
  if (!opt.context_file.empty()) {
    auto in = open_in(opt.context_file);
    std::string line;
    while (std::getline(in, line)) probe.context.push_back(tokenize(strip_markdown(line)));
  }

  std::vector<float> author_vec;
  if (!opt.author_vec.empty()) {
    auto in = open_in(opt.author_vec);
    author_vec = load_user_vector(in);
  } else if (!opt.author.empty()) {
    auto id = vocab.user_id(opt.author);
    if (!id) throw DataError("author '" + opt.author + "' is not in the user population");
    probe.author_id = *id;
  } else {
    author_vec.assign(model.d, 0.0f);  // unknown author scores neutrally
  }

  auto cin_file = open_in(opt.candidates);
  std::string line;
  std::vector<std::pair<double, std::string>> scored;
  while (std::getline(cin_file, line)) {
    if (line.empty()) continue;
    probe.response = tokenize(strip_markdown(line));
    double score = score_example(model, vocab, probe, std::span<const float>(author_vec));
    scored.emplace_back(score, line);
  }
  if (scored.empty()) throw DataError("no candidates to rank");

  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  char buf[32];
  for (const auto& [score, text] : scored) {
    std::snprintf(buf, sizeof(buf), "%.2f", score * 100.0);
    std::cout << buf << "\t" << text << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"conversational response selection toolkit"};
  app.require_subcommand(1);

  IngestOpts ingest;
  auto* s_ingest = app.add_subcommand("ingest", "parse a comment dump into post trees");
  s_ingest->set_config("--config");
  s_ingest->add_option("--dump", ingest.dump, "line-delimited JSON comment dump")->required();
  s_ingest->add_option("--out", ingest.out, "tree store output file")->required();
  s_ingest->add_flag("--strict", ingest.strict, "abort on the first malformed line");

  StatsOpts stats;
  auto* s_stats = app.add_subcommand("stats", "dataset CDF tables from a tree store");
  s_stats->set_config("--config");
  s_stats->add_option("--trees", stats.trees)->required();
  s_stats->add_option("--out-dir", stats.out_dir)->required();

  VocabOpts vocab;
  auto* s_vocab = app.add_subcommand("vocab", "build the ngram and user dictionaries");
  s_vocab->set_config("--config");
  s_vocab->add_option("--trees", vocab.trees)->required();
  s_vocab->add_option("--out", vocab.out)->required();
  s_vocab->add_option("--unigrams", vocab.unigrams, "top unigram count (paper scale: 200000)");
  s_vocab->add_option("--bigrams", vocab.bigrams, "top bigram count (paper scale: 200000)");
  s_vocab->add_option("--users", vocab.users, "user population size (paper scale: 400000)");
  s_vocab->add_option("--tsv", vocab.tsv, "optional TSV export");

  ExamplesOpts examples;
  auto* s_examples = app.add_subcommand("examples", "extract train/dev/test example files");
  s_examples->set_config("--config");
  s_examples->add_option("--trees", examples.trees)->required();
  s_examples->add_option("--vocab", examples.vocab)->required();
  s_examples->add_option("--out-prefix", examples.out_prefix)->required();
  s_examples->add_option("--max-context", examples.extract.max_context, "context cap m");
  s_examples->add_option("--max-post-size", examples.extract.max_post_size);
  s_examples->add_option("--neg-per-pos", examples.extract.neg_per_pos);
  s_examples->add_option("--seed", examples.extract.seed);
  s_examples->add_option("--train-ratio", examples.ratios.train);
  s_examples->add_option("--dev-ratio", examples.ratios.dev);
  s_examples->add_option("--test-ratio", examples.ratios.test);

  TrainOpts train_opts;
  auto* s_train = app.add_subcommand("train", "SGD training with plateau stopping");
  s_train->set_config("--config");
  s_train->add_option("--train", train_opts.train_file)->required();
  s_train->add_option("--dev", train_opts.dev_file)->required();
  s_train->add_option("--vocab", train_opts.vocab)->required();
  s_train->add_option("--out", train_opts.out, "checkpoint output")->required();
  s_train->add_option("--report", train_opts.report, "training report TSV");
  s_train->add_option("--arch", train_opts.arch, "single | multi");
  s_train->add_option("--dim", train_opts.config.d, "embedding dimension (paper scale: 300)");
  s_train->add_option("--hidden", train_opts.hidden,
                      "hidden layer sizes (paper scale: 500,300,100)");
  s_train->add_option("--lr", train_opts.config.lr, "SGD learning rate");
  s_train->add_option("--threads", train_opts.config.workers, "async worker count");
  s_train->add_option("--seed", train_opts.config.seed);
  s_train->add_option("--eval-every", train_opts.config.eval_every);
  s_train->add_option("--plateau-window", train_opts.config.plateau.window);
  s_train->add_option("--plateau-delta", train_opts.config.plateau.min_delta);
  s_train->add_flag("--no-context", train_opts.no_context, "mask the context feature");
  s_train->add_flag("--no-author", train_opts.no_author, "mask the author feature");

  EvalOpts eval_opts;
  auto* s_eval = app.add_subcommand("eval", "ranking evaluation over candidate pools");
  s_eval->set_config("--config");
  s_eval->add_option("--model", eval_opts.model)->required();
  s_eval->add_option("--vocab", eval_opts.vocab)->required();
  s_eval->add_option("--examples", eval_opts.examples, "test example file")->required();
  s_eval->add_option("--N", eval_opts.n, "candidates per pool");
  s_eval->add_option("--pools", eval_opts.pools, "pool count (paper scale: 10000)");
  s_eval->add_option("--seed", eval_opts.seed);
  s_eval->add_option("--out", eval_opts.out, "report TSV");

  AdaptOpts adapt_opts;
  auto* s_adapt = app.add_subcommand("adapt", "fit a vector for a user outside the population");
  s_adapt->set_config("--config");
  s_adapt->add_option("--model", adapt_opts.model)->required();
  s_adapt->add_option("--vocab", adapt_opts.vocab)->required();
  s_adapt->add_option("--trees", adapt_opts.trees, "tree store holding the user's threads")
      ->required();
  s_adapt->add_option("--author", adapt_opts.author)->required();
  s_adapt->add_option("--out", adapt_opts.out, "user vector output")->required();
  s_adapt->add_option("--steps", adapt_opts.steps);
  s_adapt->add_option("--lr", adapt_opts.lr);
  s_adapt->add_option("--seed", adapt_opts.seed);
  s_adapt->add_option("--max-context", adapt_opts.max_context);

  RankOpts rank_opts;
  auto* s_rank = app.add_subcommand("rank", "score candidate responses for one conversation");
  s_rank->set_config("--config");
  s_rank->add_option("--model", rank_opts.model)->required();
  s_rank->add_option("--vocab", rank_opts.vocab)->required();
  s_rank->add_option("--input", rank_opts.input, "the message being replied to")->required();
  s_rank->add_option("--context", rank_opts.context_file, "earlier messages, one per line");
  s_rank->add_option("--author", rank_opts.author, "responder username");
  s_rank->add_option("--author-vec", rank_opts.author_vec, "adapted user vector file");
  s_rank->add_option("--candidates", rank_opts.candidates, "candidate responses, one per line")
      ->required();

  try {
    app.parse(argc, argv);
    if (*s_ingest) return cmd_ingest(ingest);
    if (*s_stats) return cmd_stats(stats);
    if (*s_vocab) return cmd_vocab(vocab);
    if (*s_examples) return cmd_examples(examples);
    if (*s_train) return cmd_train(train_opts);
    if (*s_eval) return cmd_eval(eval_opts);
    if (*s_adapt) return cmd_adapt(adapt_opts);
    if (*s_rank) return cmd_rank(rank_opts);
    return 1;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;  // usage problems are exit 1, --help is 0
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
