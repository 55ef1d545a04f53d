#include "khan/text.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "khan/errors.hpp"
#include "khan/rng.hpp"

namespace khan {

using nlohmann::json;

std::vector<std::size_t> Dataset::class_histogram() const {
  std::vector<std::size_t> hist(classes, 0);
  for (const auto& a : articles) ++hist.at(static_cast<std::size_t>(a.label));
  return hist;
}

TokenList tokenize(std::string_view text) {
  TokenList out;
  std::size_t i = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<TokenList> split_sentences(std::string_view body, std::string_view separator) {
  std::vector<TokenList> out;
  TokenList current;
  for (auto& tok : tokenize(body)) {
    if (tok == separator) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(std::move(tok));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

// ---- vocabulary ------------------------------------------------------------------

Vocabulary::Vocabulary() : id_to_token_{"<pad>", "<unk>"} {}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  for (auto& t : tokens) {
    auto id = static_cast<std::int32_t>(v.id_to_token_.size());
    if (!v.token_to_id_.emplace(t, id).second)
      throw std::invalid_argument("vocabulary: duplicate token '" + t + "'");
    v.id_to_token_.push_back(std::move(t));
  }
  return v;
}

std::int32_t Vocabulary::id(std::string_view token) const {
  return find(token).value_or(kUnk);
}

std::optional<std::int32_t> Vocabulary::find(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw UserError("cannot write " + path.string());
  for (const auto& t : id_to_token_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno <= 2) continue;  // reserved entries
    if (line.empty() || line.find_first_of(" \t") != std::string::npos)
      throw ParseError(path.string(), lineno, "vocabulary entries must be single tokens");
    tokens.push_back(line);
  }
  if (lineno < 2) throw ParseError(path.string(), lineno, "missing reserved entries");
  return from_tokens(std::move(tokens));
}

Vocabulary build_vocab(const std::vector<RawArticle>& corpus) {
  std::set<std::string> distinct;
  for (const auto& a : corpus) {
    for (auto& t : tokenize(a.title)) distinct.insert(std::move(t));
    for (auto& t : tokenize(a.body))
      if (t != kSentenceSeparator) distinct.insert(std::move(t));
  }
  return Vocabulary::from_tokens({distinct.begin(), distinct.end()});
}

// ---- encoding --------------------------------------------------------------------

std::size_t EncodedArticle::active_sentences() const {
  return static_cast<std::size_t>(std::count(sentence_mask.begin(), sentence_mask.end(), 1));
}

std::size_t EncodedArticle::active_words(std::size_t row) const {
  auto m = word_mask(row);
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
}

std::size_t EncodedArticle::title_words() const {
  return static_cast<std::size_t>(std::count(title_mask.begin(), title_mask.end(), 1));
}

EncodedArticle EncodedArticle::from_ids(std::size_t n, std::size_t l,
                                        std::vector<std::int32_t> sentences,
                                        std::vector<std::int32_t> title, int label) {
  if (sentences.size() != n * l || title.size() != n)
    throw std::invalid_argument("encoded article does not match n=" + std::to_string(n) +
                                ", l=" + std::to_string(l));
  EncodedArticle e;
  e.max_words = n;
  e.max_sentences = l;
  e.sentences = std::move(sentences);
  e.title = std::move(title);
  e.label = label;
  e.word_masks.resize(n * l);
  e.sentence_mask.assign(l, 0);
  for (std::size_t i = 0; i < n * l; ++i) {
    e.word_masks[i] = e.sentences[i] != Vocabulary::kPad;
    if (e.word_masks[i]) e.sentence_mask[i / n] = 1;
  }
  e.title_mask.resize(n);
  for (std::size_t i = 0; i < n; ++i) e.title_mask[i] = e.title[i] != Vocabulary::kPad;
  return e;
}

EncodedArticle encode_article(const RawArticle& article, const Vocabulary& vocab, std::size_t n,
                              std::size_t l) {
  if (n == 0 || l == 0) throw std::invalid_argument("encode_article: n and l must be >= 1");
  auto sents = split_sentences(article.body);
  if (sents.empty())
    throw UserError("article has no sentences after splitting (title: '" + article.title + "')");
  std::vector<std::int32_t> grid(n * l, Vocabulary::kPad);
  for (std::size_t s = 0; s < std::min(l, sents.size()); ++s)
    for (std::size_t w = 0; w < std::min(n, sents[s].size()); ++w)
      grid[s * n + w] = vocab.id(sents[s][w]);
  std::vector<std::int32_t> title(n, Vocabulary::kPad);
  auto title_tokens = tokenize(article.title);
  for (std::size_t w = 0; w < std::min(n, title_tokens.size()); ++w)
    title[w] = vocab.id(title_tokens[w]);
  return EncodedArticle::from_ids(n, l, std::move(grid), std::move(title), article.label);
}

std::vector<EncodedArticle> encode_corpus(const std::vector<RawArticle>& corpus,
                                          const Vocabulary& vocab, std::size_t n, std::size_t l) {
  std::vector<EncodedArticle> out;
  out.reserve(corpus.size());
  for (const auto& a : corpus) out.push_back(encode_article(a, vocab, n, l));
  return out;
}

// ---- folds ------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> make_folds(std::size_t size, std::size_t k,
                                                 std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("make_folds: k must be >= 2");
  if (k > size)
    throw std::invalid_argument("make_folds: k=" + std::to_string(k) + " exceeds dataset size " +
                                std::to_string(size));
  std::vector<std::size_t> order(size);
  for (std::size_t i = 0; i < size; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> folds(k);
  const std::size_t base = size / k, extra = size % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return folds;
}

// ---- synthetic corpus ---------------------------------------------------------------

std::string planted_token(std::size_t cls, std::size_t index) {
  return "c" + std::to_string(cls) + "_t" + std::to_string(index);
}

std::vector<RawArticle> gen_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw std::invalid_argument("gen_synthetic: need at least 2 classes");
  if (spec.planted_tokens_per_class == 0 || spec.filler_vocabulary == 0 ||
      spec.sentences_per_article == 0 || spec.words_per_sentence < 2)
    throw std::invalid_argument("gen_synthetic: degenerate corpus shape");
  Rng rng(spec.seed);
  std::vector<int> labels(spec.num_articles);
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels[i] = static_cast<int>(i % spec.classes);
  rng.shuffle(labels);

  auto filler = [&] { return "w" + std::to_string(rng.below(spec.filler_vocabulary)); };
  auto planted = [&](int cls) {
    return planted_token(static_cast<std::size_t>(cls),
                         rng.below(spec.planted_tokens_per_class));
  };

  std::vector<RawArticle> out;
  out.reserve(labels.size());
  for (int label : labels) {
    RawArticle a;
    a.label = label;
    a.title = planted(label) + " " + filler() + " " + filler();
    std::string body;
    const std::size_t min_words = std::max<std::size_t>(2, spec.words_per_sentence / 2);
    for (std::size_t s = 0; s < spec.sentences_per_article; ++s) {
      if (s) body += " <sep> ";
      const std::size_t len =
          min_words + rng.below(spec.words_per_sentence - min_words + 1);
      const std::size_t forced = rng.below(len);
      for (std::size_t w = 0; w < len; ++w) {
        if (w) body += ' ';
        body += (w == forced || rng.uniform() < 0.2) ? planted(label) : filler();
      }
    }
    a.body = std::move(body);
    out.push_back(std::move(a));
  }
  return out;
}

// ---- files ------------------------------------------------------------------------

Dataset load_articles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read " + path.string());
  const std::string src = path.string();
  Dataset ds;
  std::optional<std::size_t> declared;
  std::string line;
  std::size_t lineno = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (lineno == 1 && line.rfind("classes=", 0) == 0) {
      try {
        std::size_t used = 0;
        const long c = std::stol(line.substr(8), &used);
        if (used != line.size() - 8 || c < 2) throw std::invalid_argument("bad");
        declared = static_cast<std::size_t>(c);
      } catch (const std::exception&) {
        throw ParseError(src, lineno, "malformed header '" + line + "'");
      }
      continue;
    }
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(src, lineno, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object() || obj.size() != 3 || !obj.contains("title") || !obj.contains("body") ||
        !obj.contains("label"))
      throw ParseError(src, lineno, "expected exactly the keys title, body, label");
    if (!obj["title"].is_string() || !obj["body"].is_string())
      throw ParseError(src, lineno, "title and body must be strings");
    if (!obj["label"].is_number_integer() || obj["label"].get<long long>() < 0)
      throw ParseError(src, lineno, "label must be a non-negative integer");
    RawArticle a{obj["title"].get<std::string>(), obj["body"].get<std::string>(),
                 obj["label"].get<int>()};
    if (declared && static_cast<std::size_t>(a.label) >= *declared)
      throw ParseError(src, lineno,
                       "label " + std::to_string(a.label) + " >= classes=" +
                           std::to_string(*declared));
    if (split_sentences(a.body).empty())
      throw ParseError(src, lineno, "body has no sentences");
    max_label = std::max(max_label, a.label);
    ds.articles.push_back(std::move(a));
  }
  if (ds.articles.empty()) throw ParseError(src, lineno, "no articles");
  ds.classes = declared ? *declared : static_cast<std::size_t>(max_label + 1);
  return ds;
}

void save_articles(const std::filesystem::path& path, const std::vector<RawArticle>& articles,
                   std::optional<std::size_t> classes) {
  std::ofstream out(path);
  if (!out) throw UserError("cannot write " + path.string());
  if (classes) out << "classes=" << *classes << '\n';
  for (const auto& a : articles)
    out << json{{"title", a.title}, {"body", a.body}, {"label", a.label}}.dump() << '\n';
}

void save_encoded(const std::filesystem::path& path, const EncodedCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw UserError("cannot write " + path.string());
  out << json{{"n", corpus.max_words}, {"l", corpus.max_sentences}, {"classes", corpus.classes}}
             .dump()
      << '\n';
  for (const auto& a : corpus.articles) {
    json rows = json::array();
    for (std::size_t s = 0; s < a.max_sentences; ++s) {
      auto row = a.sentence(s);
      rows.push_back(std::vector<std::int32_t>(row.begin(), row.end()));
    }
    out << json{{"sentences", rows}, {"title", a.title}, {"label", a.label}}.dump() << '\n';
  }
}

EncodedCorpus load_encoded(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read " + path.string());
  const std::string src = path.string();
  EncodedCorpus corpus;
  std::string line;
  std::size_t lineno = 0;
  try {
    if (!std::getline(in, line)) throw ParseError(src, 1, "empty encoded corpus");
    ++lineno;
    auto header = json::parse(line);
    corpus.max_words = header.at("n").get<std::size_t>();
    corpus.max_sentences = header.at("l").get<std::size_t>();
    corpus.classes = header.at("classes").get<std::size_t>();
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto obj = json::parse(line);
      std::vector<std::int32_t> grid;
      for (const auto& row : obj.at("sentences")) {
        auto ids = row.get<std::vector<std::int32_t>>();
        if (ids.size() != corpus.max_words) throw ParseError(src, lineno, "row width != n");
        grid.insert(grid.end(), ids.begin(), ids.end());
      }
      corpus.articles.push_back(EncodedArticle::from_ids(
          corpus.max_words, corpus.max_sentences, std::move(grid),
          obj.at("title").get<std::vector<std::int32_t>>(), obj.at("label").get<int>()));
    }
  } catch (const json::exception& e) {
    throw ParseError(src, lineno, e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(src, lineno, e.what());
  }
  return corpus;
}

}  // namespace khan
