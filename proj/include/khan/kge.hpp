// Knowledge-graph embedding: triple stores, RotatE / ModE / HAKE scoring,
// self-adversarial negative-sampling training, filtered link-prediction
// metrics, and export of word-aligned knowledge tables.
#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "khan/text.hpp"

namespace khan {

enum class Stance { Common, Liberal, Conservative };
std::string to_string(Stance stance);
Stance parse_stance(const std::string& text);

enum class KgeMethod { RotatE, ModE, HAKE };
std::string to_string(KgeMethod method);
KgeMethod parse_kge_method(const std::string& text);

struct Triple {
  std::int32_t head = 0;
  std::int32_t relation = 0;
  std::int32_t tail = 0;
  auto operator<=>(const Triple&) const = default;
};

class TripleStore {
 public:
  explicit TripleStore(Stance stance = Stance::Common) : stance_(stance) {}

  std::int32_t intern_entity(const std::string& name);
  std::int32_t intern_relation(const std::string& name);
  /// Returns false (and counts a duplicate) when the triple is already present.
  bool add(const std::string& head, const std::string& relation, const std::string& tail);
  bool add(Triple t);

  Stance stance() const { return stance_; }
  std::size_t num_entities() const { return entity_names_.size(); }
  std::size_t num_relations() const { return relation_names_.size(); }
  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t duplicates_dropped() const { return duplicates_; }
  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }
  bool contains(const Triple& t) const;

 private:
  Stance stance_;
  std::vector<std::string> entity_names_, relation_names_;
  std::unordered_map<std::string, std::int32_t> entity_ids_, relation_ids_;
  std::vector<Triple> triples_;
  std::unordered_set<std::uint64_t> keys_;
  std::size_t duplicates_ = 0;
};

/// Tab-separated head/relation/tail lines; '#' comments and blank lines skipped.
TripleStore load_triples(const std::filesystem::path& path, Stance stance);

struct KgeModel {
  KgeMethod method = KgeMethod::RotatE;
  std::size_t dim = 0;  // real width of an entity vector
  double gamma = 6.0;
  double modulus_weight = 1.0;  // HAKE only
  double phase_weight = 0.5;    // HAKE only
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;
  std::vector<double> entity;    // num_entities × dim
  std::vector<double> relation;  // num_relations × relation_width()

  std::size_t num_entities() const { return entity_names.size(); }
  std::size_t num_relations() const { return relation_names.size(); }
  /// RotatE stores one phase per complex pair; ModE and HAKE use the full width.
  std::size_t relation_width() const;
  std::span<const double> entity_row(std::size_t e) const {
    return {entity.data() + e * dim, dim};
  }
  std::span<const double> relation_row(std::size_t r) const {
    return {relation.data() + r * relation_width(), relation_width()};
  }

  /// Wraps every phase component into [-pi, pi).
  void wrap_phases();

  void save(const std::filesystem::path& path) const;
  static KgeModel load(const std::filesystem::path& path);
};

/// Randomly initialized model sized for `store`; rejects odd dims for the
/// methods that pair components.
KgeModel init_kge_model(const TripleStore& store, KgeMethod method, std::size_t dim,
                        double gamma, std::uint64_t seed);

/// gamma minus the method's distance; higher means more plausible.
double score_triple(const KgeModel& m, std::int32_t h, std::int32_t r, std::int32_t t);

/// Adds coeff * d(score)/d(param) for the entity and relation rows involved.
void accumulate_score_gradient(const KgeModel& m, std::int32_t h, std::int32_t r,
                               std::int32_t t, double coeff, std::span<double> entity_grad,
                               std::span<double> relation_grad);

struct KgeConfig {
  KgeMethod method = KgeMethod::RotatE;
  std::size_t dim = 32;
  double gamma = 6.0;
  std::size_t negatives = 8;
  double adversarial_temperature = 1.0;
  double lr = 0.01;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
};

struct KgeTrainResult {
  KgeModel model;
  std::vector<double> epoch_loss;
};

KgeTrainResult train_kge(const TripleStore& store, const KgeConfig& config);

struct CompletionMetrics {
  double mean_rank = 0.0;
  double mean_reciprocal_rank = 0.0;
  std::vector<std::pair<std::size_t, double>> hits;  // (k, HITS@k)
  std::size_t rankings = 0;  // two per test triple

  double hits_at(std::size_t k) const;
};

inline constexpr std::size_t kDefaultHits[] = {1, 3, 10};

using TripleScorer = std::function<double(std::int32_t, std::int32_t, std::int32_t)>;

/// Filtered head and tail ranking of every test triple. Corruptions that form
/// a triple in `known` are skipped; equal scores rank lower entity ids first.
CompletionMetrics evaluate_completion(const TripleScorer& score, std::size_t num_entities,
                                      const TripleStore& known, std::span<const Triple> test,
                                      std::span<const std::size_t> k_list = kDefaultHits);
CompletionMetrics evaluate_completion(const KgeModel& m, const TripleStore& known,
                                      std::span<const Triple> test,
                                      std::span<const std::size_t> k_list = kDefaultHits);

/// Deterministic split of the store into (training store, held-out triples).
std::pair<TripleStore, std::vector<Triple>> split_holdout(const TripleStore& store,
                                                          double ratio, std::uint64_t seed);

// ---- word-aligned tables ------------------------------------------------------------

struct KnowledgeEmbeddingTable {
  Stance stance = Stance::Common;
  std::size_t dim = 0;
  std::size_t rows = 0;
  std::vector<double> values;          // rows × dim
  std::vector<std::uint8_t> coverage;  // rows

  static KnowledgeEmbeddingTable zeros(Stance stance, std::size_t rows, std::size_t dim);
  std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * dim, dim}; }
  std::size_t covered() const;

  /// "stance=<tag>", "dim=<d>", then per vocabulary id: coverage flag and d values.
  void save(const std::filesystem::path& path) const;
  static KnowledgeEmbeddingTable load(const std::filesystem::path& path);
};

using EntityLinks = std::vector<std::pair<std::string, std::string>>;  // (word, entity)

EntityLinks load_entity_links(const std::filesystem::path& path);

/// Linked vocabulary words receive their entity's real vector; when the model
/// width differs from d a seeded Gaussian projection maps it to d. Words not in
/// the vocabulary are skipped.
KnowledgeEmbeddingTable export_aligned_table(const KgeModel& m, const EntityLinks& links,
                                             const Vocabulary& vocab, std::size_t d,
                                             Stance stance, std::uint64_t seed = 0);

}  // namespace khan
