#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "khan/text.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = KHAN_FIXTURE_DIR;

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("khan_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Run run_cli(const std::string& args, const fs::path& work) {
  const auto out = work / "stdout.txt", err = work / "stderr.txt";
  const std::string cmd = std::string("\"") + KHAN_CLI_PATH + "\" " + args + " >\"" + out.string() +
                          "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

/// Small knowledge corpus written by gen-synthetic, used by train/eval/sweep.
fs::path knowledge_dataset(const fs::path& work) {
  const auto dir = work / "kc";
  const auto r = run_cli("gen-synthetic --knowledge-corpus --num-articles 16 --validation-articles 8 "
                      "--d 8 --sentences-per-article 2 --words-per-sentence 3 --output-dir \"" +
                          dir.string() + "\"",
                      work);
  REQUIRE(r.code == 0);
  return dir;
}

std::string knowledge_flags(const fs::path& kc) {
  return " --kg-common \"" + (kc / "kg_common.txt").string() + "\" --kg-lib \"" +
         (kc / "kg_lib.txt").string() + "\" --kg-con \"" + (kc / "kg_con.txt").string() + "\"";
}

const std::string kTiny = " --d 8 --heads 2 --epochs 2 --batch-size 8 ";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("preprocess reports the class histogram and is deterministic") {
  const auto work = scratch("preprocess");
  const auto fixture = (kFixtures / "semeval_shaped.jsonl").string();
  const auto a = run_cli("preprocess --dataset \"" + fixture + "\" --n 16 --l 8 --output-dir \"" +
                          (work / "a").string() + "\"",
                      work);
  REQUIRE(a.code == 0);
  CHECK(a.out.find("645 articles, classes 407/238") != std::string::npos);
  const auto b = run_cli("preprocess --dataset \"" + fixture + "\" --n 16 --l 8 --output-dir \"" +
                          (work / "b").string() + "\"",
                      work);
  REQUIRE(b.code == 0);
  CHECK(slurp(work / "a" / "encoded.jsonl") == slurp(work / "b" / "encoded.jsonl"));
  CHECK(slurp(work / "a" / "vocab.txt") == slurp(work / "b" / "vocab.txt"));
  const auto enc = khan::load_encoded(work / "a" / "encoded.jsonl");
  CHECK(enc.articles.size() == 645);
}

TEST_CASE("preprocess of an empty file is a user error") {
  const auto work = scratch("empty");
  std::ofstream(work / "empty.jsonl").close();
  const auto r = run_cli("preprocess --dataset \"" + (work / "empty.jsonl").string() +
                          "\" --output-dir \"" + (work / "o").string() + "\"",
                      work);
  CHECK(r.code == 2);
  CHECK(r.err.find("error") != std::string::npos);
}

TEST_CASE("config file values are overridden by flags; bad keys fail") {
  const auto work = scratch("config");
  const auto fixture = (kFixtures / "semeval_shaped.jsonl").string();
  {
    std::ofstream cfg(work / "run.cfg");
    cfg << "# comment\n" << "dataset = " << fixture << "\n" << "n = 4\nl = 2\n";
  }
  const auto r = run_cli("preprocess --config \"" + (work / "run.cfg").string() + "\" --n 5 "
                      "--output-dir \"" + (work / "o").string() + "\"",
                      work);
  REQUIRE(r.code == 0);
  const auto enc = khan::load_encoded(work / "o" / "encoded.jsonl");
  CHECK(enc.max_words == 5);
  CHECK(enc.max_sentences == 2);
  {
    std::ofstream cfg(work / "bad.cfg");
    cfg << "n = 4\nbogus = 1\n";
  }
  const auto bad = run_cli("preprocess --config \"" + (work / "bad.cfg").string() + "\"", work);
  CHECK(bad.code == 2);
  CHECK(bad.err.find(":2:") != std::string::npos);
  CHECK(run_cli("preprocess --no-such-flag 1", work).code == 2);
  CHECK(run_cli("", work).code == 2);
}

TEST_CASE("train-kge writes metrics and a table") {
  const auto work = scratch("kge");
  {
    std::ofstream vocab(work / "vocab.txt");
    vocab << "<pad>\n<unk>\nalice\nbob\nzed\n";
  }
  const auto r = run_cli("train-kge --triples \"" + (kFixtures / "toy_kg.tsv").string() +
                          "\" --kge-dim 8 --kge-epochs 20 --holdout-ratio 0.34 --d 4"
                          " --entity-links \"" + (kFixtures / "toy_links.tsv").string() +
                          "\" --vocab \"" + (work / "vocab.txt").string() + "\" --output-dir \"" +
                          (work / "o").string() + "\"",
                      work);
  REQUIRE(r.code == 0);
  const auto metrics = slurp(work / "o" / "common_metrics.csv");
  CHECK(metrics.rfind("MR,MRR,HITS@1,HITS@3,HITS@10\n", 0) == 0);
  CHECK(count_lines(metrics) == 2);
  CHECK(fs::exists(work / "o" / "common.kge"));
  CHECK(fs::exists(work / "o" / "common_table.txt"));
  CHECK(r.out.find("2 of 5 words covered") != std::string::npos);
}

TEST_CASE("train-kge on a single triple skips evaluation") {
  const auto work = scratch("kge1");
  {
    std::ofstream kg(work / "one.tsv");
    kg << "a\tr\tb\n";
  }
  const auto r = run_cli("train-kge --triples \"" + (work / "one.tsv").string() +
                          "\" --kge-dim 4 --kge-epochs 3 --output-dir \"" + (work / "o").string() +
                          "\"",
                      work);
  CHECK(r.code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  CHECK(!fs::exists(work / "o" / "common_metrics.csv"));
}

TEST_CASE("train without knowledge in word-only mode streams epoch reports") {
  const auto work = scratch("trainW");
  const auto fixture = (kFixtures / "semeval_shaped.jsonl").string();
  const auto r = run_cli("train --mode W --no-knowledge --dataset \"" + fixture +
                          "\" --n 4 --l 2 --epochs 2 --d 8 --heads 2 --batch-size 64 --output-dir \"" +
                          (work / "o").string() + "\"",
                      work);
  REQUIRE(r.code == 0);
  CHECK(count_lines(slurp(work / "o" / "epochs.jsonl")) == 2);
  CHECK(r.out.find("\"val_acc\"") != std::string::npos);
  CHECK(fs::exists(work / "o" / "model.ckpt"));
}

TEST_CASE("train requires knowledge tables unless disabled") {
  const auto work = scratch("trainMissing");
  const auto fixture = (kFixtures / "semeval_shaped.jsonl").string();
  const auto r = run_cli("train --dataset \"" + fixture + "\" --output-dir \"" +
                          (work / "o").string() + "\"",
                      work);
  CHECK(r.code == 2);
  CHECK(r.err.find("kg_common") != std::string::npos);
  CHECK(!fs::exists(work / "o"));
}

TEST_CASE("alpha outside [0, 1] is rejected by name") {
  const auto work = scratch("alpha");
  const auto fixture = (kFixtures / "semeval_shaped.jsonl").string();
  const auto r = run_cli("train --no-knowledge --alpha 1.5 --dataset \"" + fixture +
                          "\" --output-dir \"" + (work / "o").string() + "\"",
                      work);
  CHECK(r.code == 2);
  CHECK(r.err.find("alpha") != std::string::npos);
}

TEST_CASE("ten-fold cross-validation writes one row per fold") {
  const auto work = scratch("cv");
  const auto kc = knowledge_dataset(work);
  const auto r = run_cli("train --folds 10 --jobs 2 --dataset \"" + kc.string() + "\"" +
                          knowledge_flags(kc) + kTiny + "--output-dir \"" + (work / "o").string() +
                          "\"",
                      work);
  REQUIRE(r.code == 0);
  const auto csv = slurp(work / "o" / "cv.csv");
  CHECK(csv.rfind("fold,accuracy\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + 10 + 2);
}

TEST_CASE("train then eval on a preprocessed knowledge corpus") {
  const auto work = scratch("eval");
  const auto kc = knowledge_dataset(work);
  const auto out = work / "o";
  REQUIRE(run_cli("train --validation-fraction 0.25 --dataset \"" + kc.string() + "\"" +
                   knowledge_flags(kc) + kTiny + "--output-dir \"" + out.string() + "\"",
               work)
              .code == 0);
  const auto r = run_cli("eval --checkpoint \"" + (out / "model.ckpt").string() + "\" --dataset \"" +
                          kc.string() + "\"" + knowledge_flags(kc) + " --output-dir \"" +
                          out.string() + "\"",
                      work);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("accuracy ") == 0);
  CHECK(fs::exists(out / "eval.json"));
}

TEST_CASE("sweep covers the default 5x5 grid or a single cell") {
  const auto work = scratch("sweep");
  const auto kc = knowledge_dataset(work);
  const auto base = "sweep --dataset \"" + kc.string() + "\"" + knowledge_flags(kc) +
                    " --d 8 --heads 2 --epochs 1 --batch-size 16 ";
  const auto full = run_cli(base + "--output-dir \"" + (work / "full").string() + "\"", work);
  REQUIRE(full.code == 0);
  CHECK(count_lines(slurp(work / "full" / "sweep.csv")) == 1 + 25);
  CHECK(full.out.find("best alpha=") != std::string::npos);
  const auto one = run_cli(base + "--sweep-alphas 0.4 --sweep-betas 0.6 --output-dir \"" +
                            (work / "one").string() + "\"",
                        work);
  REQUIRE(one.code == 0);
  const auto csv = slurp(work / "one" / "sweep.csv");
  CHECK(count_lines(csv) == 2);
  CHECK(csv.find("\n0.4,0.6,") != std::string::npos);
}

TEST_CASE("gen-synthetic writes a balanced corpus") {
  const auto work = scratch("gen");
  const auto r = run_cli("gen-synthetic --num-articles 20 --output-dir \"" + (work / "o").string() + "\"",
                      work);
  REQUIRE(r.code == 0);
  const auto ds = khan::load_articles(work / "o" / "synthetic.jsonl");
  CHECK(ds.articles.size() == 20);
  CHECK(ds.class_histogram() == std::vector<std::size_t>{10, 10});
  const auto again = run_cli("gen-synthetic --num-articles 20 --output-dir \"" +
                              (work / "p").string() + "\"",
                          work);
  REQUIRE(again.code == 0);
  CHECK(slurp(work / "o" / "synthetic.jsonl") == slurp(work / "p" / "synthetic.jsonl"));
}

}  // TEST_SUITE
