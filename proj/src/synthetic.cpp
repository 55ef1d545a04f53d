#include "khan/synthetic.hpp"

#include <stdexcept>
#include <string>

#include "khan/rng.hpp"

namespace khan {

KnowledgeCorpus gen_knowledge_corpus(const KnowledgeCorpusSpec& spec, std::size_t n,
                                     std::size_t l) {
  if (spec.classes < 2 || spec.words_per_sentence < 1 || spec.sentences_per_article == 0 ||
      spec.filler_vocabulary == 0 || spec.d == 0 || spec.train_articles == 0 ||
      spec.validation_articles == 0)
    throw std::invalid_argument("gen_knowledge_corpus: degenerate corpus shape");
  Rng rng(spec.seed);
  const std::size_t total = spec.train_articles + spec.validation_articles;

  // Balanced labels within each split.
  std::vector<int> train_labels(spec.train_articles), val_labels(spec.validation_articles);
  for (std::size_t i = 0; i < train_labels.size(); ++i) train_labels[i] = int(i % spec.classes);
  for (std::size_t i = 0; i < val_labels.size(); ++i) val_labels[i] = int(i % spec.classes);
  rng.shuffle(train_labels);
  rng.shuffle(val_labels);

  KnowledgeCorpus out;
  auto filler = [&] { return "w" + std::to_string(rng.below(spec.filler_vocabulary)); };
  std::vector<std::pair<std::string, int>> entities;  // word, class
  for (std::size_t a = 0; a < total; ++a) {
    const bool is_train = a < spec.train_articles;
    RawArticle art;
    art.label = is_train ? train_labels[a] : val_labels[a - spec.train_articles];
    art.title = filler() + " " + filler();
    for (std::size_t s = 0; s < spec.sentences_per_article; ++s) {
      if (s) art.body += " <sep> ";
      const std::string entity = "e" + std::to_string(a) + "_" + std::to_string(s);
      entities.emplace_back(entity, art.label);
      const std::size_t slot = rng.below(spec.words_per_sentence);
      for (std::size_t w = 0; w < spec.words_per_sentence; ++w) {
        if (w) art.body += ' ';
        art.body += w == slot ? entity : filler();
      }
    }
    (is_train ? out.train_raw : out.validation_raw).push_back(std::move(art));
  }

  std::vector<RawArticle> all = out.train_raw;
  all.insert(all.end(), out.validation_raw.begin(), out.validation_raw.end());
  out.vocab = build_vocab(all);
  out.train = encode_corpus(out.train_raw, out.vocab, n, l);
  out.validation = encode_corpus(out.validation_raw, out.vocab, n, l);

  out.bundle = KnowledgeBundle::zeros(out.vocab.size(), spec.d);
  for (auto* table : {&out.bundle.common, &out.bundle.liberal, &out.bundle.conservative}) {
    std::vector<std::vector<double>> prototypes(spec.classes, std::vector<double>(spec.d));
    for (auto& p : prototypes)
      for (auto& v : p) v = rng.uniform() < 0.5 ? -spec.prototype_scale : spec.prototype_scale;
    for (const auto& [word, cls] : entities) {
      const auto id = static_cast<std::size_t>(*out.vocab.find(word));
      auto row = table->row(id);
      for (std::size_t j = 0; j < spec.d; ++j)
        row[j] = prototypes[static_cast<std::size_t>(cls)][j] + spec.noise * rng.normal();
      table->coverage[id] = 1;
    }
  }
  return out;
}

}  // namespace khan
