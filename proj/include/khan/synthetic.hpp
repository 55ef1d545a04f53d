// A corpus whose class signal lives only in the knowledge tables: every
// article mentions entity words that occur nowhere else, and each entity's
// knowledge rows sit near a per-class prototype. Bodies and titles are
// otherwise built from class-independent filler.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "khan/model.hpp"
#include "khan/text.hpp"

namespace khan {

struct KnowledgeCorpusSpec {
  std::size_t train_articles = 100;
  std::size_t validation_articles = 100;
  std::size_t classes = 2;
  std::size_t sentences_per_article = 3;
  std::size_t words_per_sentence = 5;  // one entity word plus fillers
  std::size_t filler_vocabulary = 30;
  std::size_t d = 16;
  double prototype_scale = 1.0;  // entries of each class prototype are ±scale
  double noise = 0.1;            // stddev of per-entity deviation
  std::uint64_t seed = 0;
};

struct KnowledgeCorpus {
  Vocabulary vocab;
  std::vector<RawArticle> train_raw, validation_raw;
  std::vector<EncodedArticle> train, validation;
  KnowledgeBundle bundle;
};

/// Entity word naming scheme: "e<article>_<sentence>", article indices running
/// over the training articles first.
KnowledgeCorpus gen_knowledge_corpus(const KnowledgeCorpusSpec& spec, std::size_t n,
                                     std::size_t l);

}  // namespace khan
