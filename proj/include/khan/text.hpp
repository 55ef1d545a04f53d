// Article preprocessing: sentence splitting, vocabulary, fixed-shape encoding,
// fold generation and the planted-token synthetic corpus.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace khan {

inline constexpr std::string_view kSentenceSeparator = "<sep>";

struct RawArticle {
  std::string title;
  std::string body;  // whitespace-tokenized, sentences delimited by <sep>
  int label = 0;
};

struct Dataset {
  std::vector<RawArticle> articles;
  std::size_t classes = 0;

  std::vector<std::size_t> class_histogram() const;
};

using TokenList = std::vector<std::string>;

TokenList tokenize(std::string_view text);

std::vector<TokenList> split_sentences(std::string_view body,
                                       std::string_view separator = kSentenceSeparator);

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;

  Vocabulary();
  /// Corpus tokens in id order, starting at id 2.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return id_to_token_.size(); }
  std::int32_t id(std::string_view token) const;
  std::optional<std::int32_t> find(std::string_view token) const;
  const std::string& token(std::int32_t id) const { return id_to_token_.at(id); }

  /// One token per line in id order; the two reserved ids come first.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::int32_t> token_to_id_;
};

/// Sorted distinct tokens of all titles and bodies, numbered from 2.
Vocabulary build_vocab(const std::vector<RawArticle>& corpus);

/// An article as an l×n id grid. PAD never appears inside a sentence, so the
/// masks are recoverable from the ids alone.
struct EncodedArticle {
  std::size_t max_words = 0;      // n
  std::size_t max_sentences = 0;  // l
  std::vector<std::int32_t> sentences;    // l*n, row-major
  std::vector<std::uint8_t> sentence_mask;  // l
  std::vector<std::uint8_t> word_masks;     // l*n
  std::vector<std::int32_t> title;          // n
  std::vector<std::uint8_t> title_mask;     // n
  int label = 0;

  std::span<const std::int32_t> sentence(std::size_t row) const {
    return {sentences.data() + row * max_words, max_words};
  }
  std::span<const std::uint8_t> word_mask(std::size_t row) const {
    return {word_masks.data() + row * max_words, max_words};
  }
  std::size_t active_sentences() const;
  std::size_t active_words(std::size_t row) const;
  std::size_t title_words() const;

  /// Rebuilds masks from ids; used after loading.
  static EncodedArticle from_ids(std::size_t n, std::size_t l, std::vector<std::int32_t> sentences,
                                 std::vector<std::int32_t> title, int label);
};

/// Keep-first truncation to l sentences of n words; the title shares the n budget.
EncodedArticle encode_article(const RawArticle& article, const Vocabulary& vocab,
                              std::size_t n, std::size_t l);

std::vector<EncodedArticle> encode_corpus(const std::vector<RawArticle>& corpus,
                                          const Vocabulary& vocab, std::size_t n, std::size_t l);

/// Shuffle-then-slice partition of [0, size) into k folds; the first size%k
/// folds get one extra element.
std::vector<std::vector<std::size_t>> make_folds(std::size_t size, std::size_t k,
                                                 std::uint64_t seed);

struct SyntheticSpec {
  std::size_t num_articles = 64;
  std::size_t classes = 2;
  std::size_t planted_tokens_per_class = 3;
  std::size_t filler_vocabulary = 40;
  std::size_t sentences_per_article = 4;
  std::size_t words_per_sentence = 6;
  std::uint64_t seed = 0;
};

/// Token naming scheme of the planted vocabulary: "c<class>_t<index>".
std::string planted_token(std::size_t cls, std::size_t index);

/// Balanced corpus whose labels are decided by class-specific planted tokens
/// scattered among shared filler tokens.
std::vector<RawArticle> gen_synthetic(const SyntheticSpec& spec);

// ---- files ---------------------------------------------------------------------

/// JSON-lines article file with an optional leading "classes=<C>" line.
Dataset load_articles(const std::filesystem::path& path);
void save_articles(const std::filesystem::path& path, const std::vector<RawArticle>& articles,
                   std::optional<std::size_t> classes = std::nullopt);

struct EncodedCorpus {
  std::size_t max_words = 0;
  std::size_t max_sentences = 0;
  std::size_t classes = 0;
  std::vector<EncodedArticle> articles;
};

/// Header line {"n","l","classes"} followed by one {"sentences","title","label"} per line.
void save_encoded(const std::filesystem::path& path, const EncodedCorpus& corpus);
EncodedCorpus load_encoded(const std::filesystem::path& path);

}  // namespace khan
