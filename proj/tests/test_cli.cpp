#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "support/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const std::string& stdout_to = "/dev/null") {
  std::string cmd = std::string(CONVRANK_BIN) + " " + args + " > " + stdout_to + " 2>/dev/null";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// train reports carry wall-clock seconds in the last column; drop it before
// byte comparison
std::string without_last_column(const std::string& tsv) {
  std::string out;
  std::istringstream in(tsv);
  std::string line;
  while (std::getline(in, line)) {
    auto cut = line.rfind('\t');
    out += line.substr(0, cut);
    out += '\n';
  }
  return out;
}

struct Workspace {
  fs::path dir;
  fs::path dump;

  explicit Workspace(const std::string& name) {
    dir = fs::temp_directory_path() / ("convrank_" + name + "_" + std::to_string(getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    synthetic::GenConfig gen;
    gen.posts = 400;
    gen.target_comments_per_post = 25;
    gen.authors = 24;
    gen.seed = 71;
    gen.malformed_lines = 2;
    auto result = synthetic::generate_dump(gen);
    dump = dir / "dump.jsonl";
    std::ofstream out(dump, std::ios::binary);
    out << result.jsonl;
  }

  std::string p(const std::string& name) const { return (dir / name).string(); }
};

// one shared pipeline run most cases inspect
const Workspace& pipeline() {
  static Workspace ws("pipeline");
  static bool built = [] {
    REQUIRE(run("ingest --dump " + ws.dump.string() + " --out " + ws.p("trees.cvrk")) == 0);
    REQUIRE(run("vocab --trees " + ws.p("trees.cvrk") + " --out " + ws.p("vocab.cvrk") +
                " --unigrams 4000 --bigrams 4000 --users 24") == 0);
    REQUIRE(run("examples --trees " + ws.p("trees.cvrk") + " --vocab " + ws.p("vocab.cvrk") +
                " --out-prefix " + ws.p("ds") + " --max-context 2 --seed 5") == 0);
    REQUIRE(run("train --train " + ws.p("ds.train.cvrk") + " --dev " + ws.p("ds.dev.cvrk") +
                " --vocab " + ws.p("vocab.cvrk") + " --out " + ws.p("model.cvrk") + " --report " +
                ws.p("train_report.tsv") + " --dim 16 --hidden 32,16,8 --seed 9 --eval-every 4000") ==
            0);
    return true;
  }();
  (void)built;
  return ws;
}

}  // namespace

TEST_CASE("pipeline commands produce their artifacts") {
  const auto& ws = pipeline();
  CHECK(fs::exists(ws.p("trees.cvrk")));
  CHECK(fs::exists(ws.p("vocab.cvrk")));
  CHECK(fs::exists(ws.p("ds.train.cvrk")));
  CHECK(fs::exists(ws.p("ds.dev.cvrk")));
  CHECK(fs::exists(ws.p("ds.test.cvrk")));
  CHECK(fs::exists(ws.p("model.cvrk")));
  CHECK(fs::exists(ws.p("train_report.tsv")));

  CHECK(run("stats --trees " + ws.p("trees.cvrk") + " --out-dir " + ws.p("stats")) == 0);
  CHECK(fs::exists(ws.p("stats/comments_per_user.tsv")));
  CHECK(fs::exists(ws.p("stats/comments_per_post.tsv")));
  CHECK(fs::exists(ws.p("stats/replies_per_comment.tsv")));
  CHECK(fs::exists(ws.p("stats/comment_depth.tsv")));
}

TEST_CASE("eval prints P@1 of one for single-candidate pools") {
  const auto& ws = pipeline();
  REQUIRE(run("eval --model " + ws.p("model.cvrk") + " --vocab " + ws.p("vocab.cvrk") +
                  " --examples " + ws.p("ds.test.cvrk") + " --N 1 --pools 50 --seed 3 --out " +
                  ws.p("eval1.tsv"),
              ws.p("eval1.out")) == 0);
  auto out = slurp(ws.p("eval1.out"));
  CHECK(out.find("P@1\t1") != std::string::npos);
  auto tsv = slurp(ws.p("eval1.tsv"));
  CHECK(tsv.find("p_at_1\t1") != std::string::npos);
}

TEST_CASE("reruns with identical seeds are byte-identical") {
  const auto& ws = pipeline();
  Workspace rerun("rerun");
  fs::copy_file(ws.dump, rerun.dump, fs::copy_options::overwrite_existing);

  REQUIRE(run("ingest --dump " + rerun.dump.string() + " --out " + rerun.p("trees.cvrk")) == 0);
  REQUIRE(run("vocab --trees " + rerun.p("trees.cvrk") + " --out " + rerun.p("vocab.cvrk") +
              " --unigrams 4000 --bigrams 4000 --users 24") == 0);
  REQUIRE(run("examples --trees " + rerun.p("trees.cvrk") + " --vocab " + rerun.p("vocab.cvrk") +
              " --out-prefix " + rerun.p("ds") + " --max-context 2 --seed 5") == 0);
  REQUIRE(run("train --train " + rerun.p("ds.train.cvrk") + " --dev " + rerun.p("ds.dev.cvrk") +
              " --vocab " + rerun.p("vocab.cvrk") + " --out " + rerun.p("model.cvrk") +
              " --report " + rerun.p("train_report.tsv") +
              " --dim 16 --hidden 32,16,8 --seed 9 --eval-every 4000") == 0);

  CHECK(slurp(ws.p("trees.cvrk")) == slurp(rerun.p("trees.cvrk")));
  CHECK(slurp(ws.p("vocab.cvrk")) == slurp(rerun.p("vocab.cvrk")));
  CHECK(slurp(ws.p("ds.train.cvrk")) == slurp(rerun.p("ds.train.cvrk")));
  CHECK(slurp(ws.p("ds.dev.cvrk")) == slurp(rerun.p("ds.dev.cvrk")));
  CHECK(slurp(ws.p("ds.test.cvrk")) == slurp(rerun.p("ds.test.cvrk")));
  CHECK(slurp(ws.p("model.cvrk")) == slurp(rerun.p("model.cvrk")));
  CHECK(without_last_column(slurp(ws.p("train_report.tsv"))) ==
        without_last_column(slurp(rerun.p("train_report.tsv"))));
}

TEST_CASE("context flips the ranking of matched candidates") {
  const auto& ws = pipeline();
  {
    std::ofstream ctx_a(ws.p("ctx_a.txt"));
    ctx_a << "gtok3 ptok1 fill9\n";
    std::ofstream ctx_b(ws.p("ctx_b.txt"));
    ctx_b << "gtok7 ptok1 fill9\n";
    std::ofstream cands(ws.p("cands.txt"));
    cands << "sig1 gecho3 pecho1 gtok5 ptok2 fill3\n";
    cands << "sig2 gecho7 pecho1 gtok6 ptok3 fill4\n";
  }
  std::string base = "rank --model " + ws.p("model.cvrk") + " --vocab " + ws.p("vocab.cvrk") +
                     " --input \"pecho0 gtok9 ptok1 fill2\" --candidates " + ws.p("cands.txt");
  REQUIRE(run(base + " --context " + ws.p("ctx_a.txt"), ws.p("rank_a.out")) == 0);
  REQUIRE(run(base + " --context " + ws.p("ctx_b.txt"), ws.p("rank_b.out")) == 0);

  auto top_line = [&](const std::string& path) {
    std::string text = slurp(path);
    return text.substr(0, text.find('\n'));
  };
  std::string top_a = top_line(ws.p("rank_a.out"));
  std::string top_b = top_line(ws.p("rank_b.out"));
  CHECK(top_a.find("gecho3") != std::string::npos);
  CHECK(top_b.find("gecho7") != std::string::npos);
  CHECK(top_a != top_b);
}

TEST_CASE("adapt writes a user vector") {
  const auto& ws = pipeline();
  REQUIRE(run("adapt --model " + ws.p("model.cvrk") + " --vocab " + ws.p("vocab.cvrk") +
                  " --trees " + ws.p("trees.cvrk") + " --author user3 --steps 50 --out " +
                  ws.p("user3.vec"),
              ws.p("adapt.out")) == 0);
  CHECK(fs::exists(ws.p("user3.vec")));
  CHECK(slurp(ws.p("adapt.out")).find("adapted\t1") != std::string::npos);
}

TEST_CASE("failure modes map to the documented exit codes") {
  const auto& ws = pipeline();

  SECTION("unknown flag is usage (1)") {
    CHECK(run("eval --definitely-not-a-flag") == 1);
  }

  SECTION("missing file is a data error (2)") {
    CHECK(run("stats --trees " + ws.p("no_such_file.cvrk") + " --out-dir " + ws.p("x")) == 2);
  }

  SECTION("strict ingest aborts on malformed lines (2)") {
    CHECK(run("ingest --dump " + ws.dump.string() + " --out " + ws.p("strict_trees.cvrk") +
              " --strict") == 2);
  }

  SECTION("checkpoint under a foreign vocabulary is a data error (2)") {
    REQUIRE(run("vocab --trees " + ws.p("trees.cvrk") + " --out " + ws.p("vocab_small.cvrk") +
                " --unigrams 100 --bigrams 100 --users 5") == 0);
    CHECK(run("eval --model " + ws.p("model.cvrk") + " --vocab " + ws.p("vocab_small.cvrk") +
              " --examples " + ws.p("ds.test.cvrk") + " --N 2 --pools 10") == 2);
  }

  SECTION("wrong file kind is a data error (2)") {
    CHECK(run("stats --trees " + ws.p("vocab.cvrk") + " --out-dir " + ws.p("y")) == 2);
  }
}

TEST_CASE("config files supply defaults and flags win") {
  const auto& ws = pipeline();
  {
    std::ofstream cfg(ws.p("stats.cfg"));
    cfg << "trees=" << ws.p("trees.cvrk") << "\n";
    cfg << "out-dir=" << ws.p("stats_cfg") << "\n";
  }
  CHECK(run("stats --config " + ws.p("stats.cfg")) == 0);
  CHECK(fs::exists(ws.p("stats_cfg/comment_depth.tsv")));

  // flag overrides the config value
  CHECK(run("stats --config " + ws.p("stats.cfg") + " --out-dir " + ws.p("stats_cfg2")) == 0);
  CHECK(fs::exists(ws.p("stats_cfg2/comment_depth.tsv")));

  // unknown keys are rejected
  {
    std::ofstream cfg(ws.p("bad.cfg"));
    cfg << "no-such-key=1\n";
  }
  CHECK(run("stats --config " + ws.p("bad.cfg") + " --trees " + ws.p("trees.cvrk") +
            " --out-dir " + ws.p("stats_cfg3")) == 1);
}
