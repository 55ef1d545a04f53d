#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "khan/errors.hpp"
#include "khan/rng.hpp"
#include "khan/text.hpp"

using namespace khan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "khan_unit_text";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

}  // namespace

TEST_SUITE("text") {

TEST_CASE("split_sentences") {
  using S = std::vector<TokenList>;
  CHECK(split_sentences("a b <sep> c") == S{{"a", "b"}, {"c"}});
  CHECK(split_sentences("<sep> <sep>").empty());
  CHECK(split_sentences("x <sep> y z <sep> w") == S{{"x"}, {"y", "z"}, {"w"}});
  CHECK(split_sentences("").empty());
}

TEST_CASE("build_vocab is sorted, reserved ids first") {
  const std::vector<RawArticle> corpus{{"b", "a", 0}};
  const auto v = build_vocab(corpus);
  CHECK(v.size() == 4);
  CHECK(v.id("a") == 2);
  CHECK(v.id("b") == 3);
  CHECK(v.token(0) == "<pad>");
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  CHECK(build_vocab(corpus) == v);

  const std::vector<RawArticle> toy{{"the cat", "the cat sat <sep> on a mat", 0},
                                    {"dog", "a dog ran", 1},
                                    {"cat dog", "mat <sep> ran sat", 0}};
  // Distinct: the cat sat on a mat dog ran -> 8.
  CHECK(build_vocab(toy).size() == 8 + 2);
}

TEST_CASE("vocabulary save/load round trip") {
  const std::vector<RawArticle> toy{{"t", "x y <sep> z", 0}};
  const auto v = build_vocab(toy);
  const auto p = scratch("vocab.txt");
  v.save(p);
  CHECK(Vocabulary::load(p) == v);
}

TEST_CASE("encode_article padding, truncation and UNK") {
  const std::vector<RawArticle> corpus{{"t", "p q <sep> r s <sep> u", 0}};
  const auto v = build_vocab(corpus);
  const auto one = encode_article({"t", "p q", 1}, v, 4, 2);
  CHECK(std::vector<std::int32_t>(one.sentence(0).begin(), one.sentence(0).end()) ==
        std::vector<std::int32_t>{v.id("p"), v.id("q"), 0, 0});
  CHECK(std::vector<std::uint8_t>(one.word_mask(0).begin(), one.word_mask(0).end()) ==
        std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(one.sentence_mask == std::vector<std::uint8_t>{1, 0});
  for (auto id : one.sentence(1)) CHECK(id == Vocabulary::kPad);

  const auto unk = encode_article({"t", "p never_seen", 0}, v, 4, 1);
  CHECK(unk.sentence(0)[1] == Vocabulary::kUnk);

  const auto three = encode_article(corpus[0], v, 4, 2);
  CHECK(three.active_sentences() == 2);
  CHECK(three.sentence(0)[0] == v.id("p"));
  CHECK(three.sentence(1)[0] == v.id("r"));

  const auto words = encode_article({"t", "p q r s u", 0}, v, 3, 1);
  CHECK(words.active_words(0) == 3);
  CHECK(words.sentence(0)[2] == v.id("r"));

  CHECK_THROWS_AS(encode_article({"t", "<sep>", 0}, v, 4, 2), UserError);
}

TEST_CASE("encoding round trip maps ids back to source tokens") {
  SyntheticSpec spec;
  spec.num_articles = 30;
  const auto raw = gen_synthetic(spec);
  const auto v = build_vocab(raw);
  for (const auto& a : raw) {
    const auto e = encode_article(a, v, 5, 3);
    const auto sents = split_sentences(a.body);
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t w = 0; w < 5; ++w) {
        const auto id = e.sentence(s)[w];
        if (id == Vocabulary::kPad) {
          CHECK(e.word_mask(s)[w] == 0);
          continue;
        }
        REQUIRE(s < sents.size());
        CHECK(v.token(id) == sents[s][w]);
      }
    const auto rebuilt = EncodedArticle::from_ids(5, 3, e.sentences, e.title, e.label);
    CHECK(rebuilt.word_masks == e.word_masks);
    CHECK(rebuilt.sentence_mask == e.sentence_mask);
    CHECK(rebuilt.title_mask == e.title_mask);
  }
}

TEST_CASE("make_folds partitions") {
  const auto f = make_folds(645, 10, 0);
  std::vector<std::size_t> sizes;
  for (const auto& fold : f) sizes.push_back(fold.size());
  CHECK(std::count(sizes.begin(), sizes.end(), 65) == 5);
  CHECK(std::count(sizes.begin(), sizes.end(), 64) == 5);
  for (const auto& fold : make_folds(6, 3, 1)) CHECK(fold.size() == 2);
  CHECK(make_folds(100, 4, 7) == make_folds(100, 4, 7));
  CHECK_THROWS(make_folds(3, 4, 0));
  CHECK_THROWS(make_folds(10, 1, 0));

  std::mt19937_64 gen(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t size = 2 + gen() % 9999;
    const std::size_t k = 2 + gen() % std::min<std::size_t>(size - 1, 40);
    const auto folds = make_folds(size, k, trial);
    REQUIRE(folds.size() == k);
    std::vector<std::size_t> all;
    std::size_t lo = size, hi = 0;
    for (const auto& fold : folds) {
      all.insert(all.end(), fold.begin(), fold.end());
      lo = std::min(lo, fold.size());
      hi = std::max(hi, fold.size());
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(size);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("gen_synthetic balance, determinism and separability") {
  SyntheticSpec spec;
  spec.num_articles = 20;
  spec.classes = 2;
  spec.planted_tokens_per_class = 3;
  spec.seed = 5;
  const auto a = gen_synthetic(spec);
  CHECK(a.size() == 20);
  CHECK(std::count_if(a.begin(), a.end(), [](auto& x) { return x.label == 0; }) == 10);
  const auto b = gen_synthetic(spec);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].title == b[i].title);
    CHECK(a[i].body == b[i].body);
    CHECK(a[i].label == b[i].label);
  }
  // Bag-of-words majority vote over planted tokens.
  spec.classes = 3;
  spec.num_articles = 31;
  for (const auto& art : gen_synthetic(spec)) {
    std::vector<int> votes(spec.classes, 0);
    bool title_planted = false;
    for (const auto& tok : tokenize(art.title + " " + art.body))
      for (std::size_t c = 0; c < spec.classes; ++c)
        for (std::size_t i = 0; i < spec.planted_tokens_per_class; ++i)
          if (tok == planted_token(c, i)) ++votes[c];
    for (const auto& tok : tokenize(art.title))
      if (tok.rfind("c", 0) == 0 && tok.find("_t") != std::string::npos) title_planted = true;
    CHECK(title_planted);
    const auto best = std::max_element(votes.begin(), votes.end()) - votes.begin();
    CHECK(best == art.label);
  }
}

TEST_CASE("article file loading and diagnostics") {
  const fs::path fixture = fs::path(KHAN_FIXTURE_DIR) / "semeval_shaped.jsonl";
  const auto ds = load_articles(fixture);
  CHECK(ds.articles.size() == 645);
  CHECK(ds.classes == 2);
  CHECK(ds.class_histogram() == std::vector<std::size_t>{407, 238});

  const auto inferred = scratch("inferred.jsonl");
  write_file(inferred, R"({"title":"a","body":"b","label":2})" "\n");
  CHECK(load_articles(inferred).classes == 3);

  const auto empty = scratch("empty.jsonl");
  write_file(empty, "");
  CHECK_THROWS_AS(load_articles(empty), UserError);

  const auto bad = scratch("bad.jsonl");
  write_file(bad, R"({"title":"a","body":"b","label":0})" "\n{not json\n");
  try {
    load_articles(bad);
    FAIL("no throw");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  const auto extra = scratch("extra.jsonl");
  write_file(extra, R"({"title":"a","body":"b","label":0,"x":1})" "\n");
  CHECK_THROWS_AS(load_articles(extra), ParseError);
  const auto range = scratch("range.jsonl");
  write_file(range, "classes=2\n" R"({"title":"a","body":"b","label":2})" "\n");
  CHECK_THROWS_AS(load_articles(range), ParseError);
}

TEST_CASE("article and encoded corpus files round trip") {
  SyntheticSpec spec;
  spec.num_articles = 12;
  const auto raw = gen_synthetic(spec);
  const auto p = scratch("roundtrip.jsonl");
  save_articles(p, raw, 2);
  const auto back = load_articles(p);
  REQUIRE(back.articles.size() == raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(back.articles[i].body == raw[i].body);

  const auto v = build_vocab(raw);
  EncodedCorpus enc{6, 3, 2, encode_corpus(raw, v, 6, 3)};
  const auto q = scratch("encoded.jsonl");
  save_encoded(q, enc);
  const auto loaded = load_encoded(q);
  CHECK(loaded.max_words == 6);
  CHECK(loaded.classes == 2);
  REQUIRE(loaded.articles.size() == enc.articles.size());
  for (std::size_t i = 0; i < enc.articles.size(); ++i) {
    CHECK(loaded.articles[i].sentences == enc.articles[i].sentences);
    CHECK(loaded.articles[i].title == enc.articles[i].title);
    CHECK(loaded.articles[i].word_masks == enc.articles[i].word_masks);
  }
}

}  // TEST_SUITE
