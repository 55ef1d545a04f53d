#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "khan/errors.hpp"
#include "khan/kge.hpp"
#include "khan/rng.hpp"

using namespace khan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "khan_unit_kge";
  fs::create_directories(dir);
  return dir / name;
}

TripleStore random_store(Rng& rng, std::size_t entities, std::size_t relations,
                         std::size_t triples) {
  TripleStore s;
  for (std::size_t e = 0; e < entities; ++e) s.intern_entity("e" + std::to_string(e));
  for (std::size_t r = 0; r < relations; ++r) s.intern_relation("r" + std::to_string(r));
  while (s.triples().size() < triples)
    s.add(Triple{static_cast<std::int32_t>(rng.below(entities)),
                 static_cast<std::int32_t>(rng.below(relations)),
                 static_cast<std::int32_t>(rng.below(entities))});
  return s;
}

// Direct formula evaluations, written independently of the library kernels.
double rotate_reference(const KgeModel& m, int h, int r, int t) {
  const std::size_t half = m.dim / 2;
  double dist = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    const std::complex<double> hc(m.entity_row(h)[i], m.entity_row(h)[half + i]);
    const std::complex<double> tc(m.entity_row(t)[i], m.entity_row(t)[half + i]);
    const std::complex<double> rot = std::polar(1.0, m.relation_row(r)[i]);
    dist += std::abs(hc * rot - tc);
  }
  return m.gamma - dist;
}

double mode_reference(const KgeModel& m, int h, int r, int t) {
  double dist = 0.0;
  for (std::size_t i = 0; i < m.dim; ++i)
    dist += std::fabs(m.entity_row(h)[i] * m.relation_row(r)[i] - m.entity_row(t)[i]);
  return m.gamma - dist;
}

double hake_reference(const KgeModel& m, int h, int r, int t) {
  const std::size_t half = m.dim / 2;
  std::vector<double> mod(half);
  double phase = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    mod[i] = m.entity_row(h)[i] * m.relation_row(r)[i] - m.entity_row(t)[i];
    phase += std::fabs(std::sin(
        0.5 * (m.entity_row(h)[half + i] + m.relation_row(r)[half + i] - m.entity_row(t)[half + i])));
  }
  double sq = 0.0;
  for (double v : mod) sq += v * v;
  return m.gamma - 1.0 * std::sqrt(sq) - 0.5 * phase;
}

}  // namespace

TEST_SUITE("kge") {

TEST_CASE("load_triples counts, duplicates and diagnostics") {
  const auto fixture = TripleStore(load_triples(fs::path(KHAN_FIXTURE_DIR) / "toy_kg.tsv",
                                                Stance::Liberal));
  CHECK(fixture.num_entities() == 5);
  CHECK(fixture.num_relations() == 2);
  CHECK(fixture.triples().size() == 6);
  CHECK(fixture.stance() == Stance::Liberal);

  const auto dup = scratch("dup.tsv");
  std::ofstream(dup) << "a\tr\tb\na\tr\tb\n";
  const auto d = load_triples(dup, Stance::Common);
  CHECK(d.triples().size() == 1);
  CHECK(d.duplicates_dropped() == 1);

  const auto three = scratch("three.tsv");
  std::ofstream(three) << "a\tr\tb\nb\tr\tc\n# note\n\nc\tr\ta\n";
  CHECK(load_triples(three, Stance::Common).triples().size() == 3);

  const auto bad = scratch("bad.tsv");
  std::ofstream(bad) << "a\tr\tb\na\tr\n";
  try {
    load_triples(bad, Stance::Common);
    FAIL("no throw");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("score identities") {
  TripleStore s;
  s.add("a", "r", "b");
  auto rot = init_kge_model(s, KgeMethod::RotatE, 8, 6.0, 1);
  std::fill(rot.relation.begin(), rot.relation.end(), 0.0);
  CHECK(score_triple(rot, 0, 0, 0) == 6.0);
  auto mode = init_kge_model(s, KgeMethod::ModE, 6, 6.0, 1);
  std::fill(mode.relation.begin(), mode.relation.end(), 1.0);
  CHECK(score_triple(mode, 1, 0, 1) == 6.0);
  CHECK_THROWS(init_kge_model(s, KgeMethod::RotatE, 7, 6.0, 0));
  CHECK_THROWS(init_kge_model(s, KgeMethod::HAKE, 5, 6.0, 0));
}

TEST_CASE("scores match direct formula evaluation") {
  Rng rng(17);
  for (auto method : {KgeMethod::RotatE, KgeMethod::ModE, KgeMethod::HAKE}) {
    const auto store = random_store(rng, 6, 3, 10);
    const auto m = init_kge_model(store, method, 8, 6.0, 3);
    for (int h = 0; h < 6; ++h)
      for (int r = 0; r < 3; ++r)
        for (int t = 0; t < 6; ++t) {
          const double ref = method == KgeMethod::RotatE ? rotate_reference(m, h, r, t)
                             : method == KgeMethod::ModE ? mode_reference(m, h, r, t)
                                                         : hake_reference(m, h, r, t);
          CHECK(std::abs(score_triple(m, h, r, t) - ref) < 1e-10);
        }
  }
}

TEST_CASE("score gradients match finite differences") {
  Rng rng(23);
  for (auto method : {KgeMethod::RotatE, KgeMethod::ModE, KgeMethod::HAKE}) {
    CAPTURE(to_string(method));
    const auto store = random_store(rng, 4, 2, 5);
    auto m = init_kge_model(store, method, 6, 6.0, 5);
    const int h = 0, r = 1, t = 2;
    std::vector<double> ge(m.entity.size(), 0.0), gr(m.relation.size(), 0.0);
    accumulate_score_gradient(m, h, r, t, 1.0, ge, gr);
    const double eps = 1e-6;
    for (auto* pair : {&m.entity, &m.relation}) {
      auto& grad = pair == &m.entity ? ge : gr;
      for (std::size_t i = 0; i < pair->size(); ++i) {
        const double saved = (*pair)[i];
        (*pair)[i] = saved + eps;
        const double up = score_triple(m, h, r, t);
        (*pair)[i] = saved - eps;
        const double down = score_triple(m, h, r, t);
        (*pair)[i] = saved;
        CHECK(std::abs(grad[i] - (up - down) / (2 * eps)) < 1e-6);
      }
    }
  }
}

TEST_CASE("phase wrap preserves RotatE scores") {
  Rng rng(29);
  const auto store = random_store(rng, 5, 2, 6);
  auto m = init_kge_model(store, KgeMethod::RotatE, 8, 6.0, 7);
  const auto base = m;
  for (auto& p : m.relation) p += 2.0 * std::numbers::pi;
  for (int h = 0; h < 5; ++h)
    for (int t = 0; t < 5; ++t)
      CHECK(std::abs(score_triple(m, h, 1, t) - score_triple(base, h, 1, t)) < 1e-10);
  m.wrap_phases();
  for (double p : m.relation) {
    CHECK(p >= -std::numbers::pi);
    CHECK(p < std::numbers::pi);
  }
}

TEST_CASE("completion metrics: perfect, hand-ranked and tied scorers") {
  TripleStore s;
  s.add("a", "r", "b");
  s.add("b", "r", "c");
  // Perfect scorer: only known triples score high.
  const auto perfect = [&](int h, int r, int t) {
    return s.contains(Triple{h, r, t}) ? 1.0 : 0.0;
  };
  const auto m1 = evaluate_completion(perfect, 3, s, s.triples());
  CHECK(m1.mean_rank == 1.0);
  CHECK(m1.mean_reciprocal_rank == 1.0);
  for (auto [k, v] : m1.hits) CHECK(v == 1.0);

  // Hand-set scores on 3 entities, test triple (0,0,1) with an empty known set.
  TripleStore none;
  none.intern_entity("a");
  none.intern_entity("b");
  none.intern_entity("c");
  none.intern_relation("r");
  const auto hand = [](int h, int, int t) { return static_cast<double>(10 * h + t); };
  const std::vector<Triple> one{{0, 0, 1}};
  // Head side: scores h=0:1, h=1:11, h=2:21 -> truth rank 3.
  // Tail side: scores t=0:0, t=1:1, t=2:2 -> truth rank 2.
  const auto m2 = evaluate_completion(hand, 3, none, one);
  CHECK(m2.mean_rank == 2.5);
  CHECK(m2.mean_reciprocal_rank == doctest::Approx((1.0 / 3 + 0.5) / 2).epsilon(1e-15));
  CHECK(m2.hits_at(1) == 0.0);
  CHECK(m2.hits_at(3) == 1.0);

  // All-tied scorer: truth ranks 1 + (number of unfiltered candidates below its id).
  const auto flat = [](int, int, int) { return 0.0; };
  const auto m3 = evaluate_completion(flat, 3, none, std::vector<Triple>{{2, 0, 1}});
  CHECK(m3.mean_rank == (3.0 + 2.0) / 2.0);

  CHECK_THROWS_AS(evaluate_completion(flat, 3, none, std::vector<Triple>{}), UserError);
}

TEST_CASE("hits monotone and MRR bounded by 1/MR") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const auto store = random_store(rng, 10, 2, 15);
    const auto m = init_kge_model(store, KgeMethod::ModE, 4, 6.0, trial);
    const auto met = evaluate_completion(m, store, store.triples());
    CHECK(met.hits_at(1) <= met.hits_at(3));
    CHECK(met.hits_at(3) <= met.hits_at(10));
    CHECK(met.mean_reciprocal_rank > 0.0);
    CHECK(met.mean_reciprocal_rank <= 1.0);
    CHECK(met.mean_reciprocal_rank >= 1.0 / met.mean_rank - 1e-15);
  }
}

TEST_CASE("train_kge: single triple separates from its corruptions") {
  TripleStore s;
  for (auto e : {"a", "b", "c", "d"}) s.intern_entity(e);
  s.add("a", "r", "b");
  for (auto method : {KgeMethod::RotatE, KgeMethod::ModE, KgeMethod::HAKE}) {
    CAPTURE(to_string(method));
    KgeConfig cfg;
    cfg.method = method;
    cfg.dim = 8;
    cfg.epochs = 200;  // one Adam step per epoch on a single triple
    const auto res = train_kge(s, cfg);
    const double pos = score_triple(res.model, 0, 0, 1);
    for (int e = 0; e < 4; ++e) {
      if (e != 1) CHECK(pos > score_triple(res.model, 0, 0, e));
      if (e != 0) CHECK(pos > score_triple(res.model, e, 0, 1));
    }
    CHECK(res.epoch_loss.back() <= res.epoch_loss.front());
    const auto again = train_kge(s, cfg);
    CHECK(again.model.entity == res.model.entity);
    CHECK(again.model.relation == res.model.relation);
  }
}

TEST_CASE("train_kge improves filtered MRR on a chain") {
  TripleStore s;
  for (int i = 0; i + 1 < 10; ++i) s.add("n" + std::to_string(i), "next", "n" + std::to_string(i + 1));
  KgeConfig cfg;
  cfg.method = KgeMethod::RotatE;
  cfg.dim = 16;
  cfg.epochs = 200;
  cfg.seed = 3;
  const auto trained = train_kge(s, cfg);
  const auto random = init_kge_model(s, cfg.method, cfg.dim, cfg.gamma, cfg.seed);
  CHECK(evaluate_completion(trained.model, s, s.triples()).mean_reciprocal_rank >
        evaluate_completion(random, s, s.triples()).mean_reciprocal_rank);
}

TEST_CASE("split_holdout keeps vocabularies and partitions triples") {
  Rng rng(37);
  const auto store = random_store(rng, 8, 2, 20);
  const auto [train, test] = split_holdout(store, 0.1, 4);
  CHECK(test.size() == 2);
  CHECK(train.triples().size() == 18);
  CHECK(train.num_entities() == 8);
  for (const auto& t : test) CHECK_FALSE(train.contains(t));
  const auto [t1, none] = split_holdout(TripleStore(), 0.1, 0);
  CHECK(none.empty());
}

TEST_CASE("model save/load round trip") {
  Rng rng(41);
  const auto store = random_store(rng, 5, 2, 6);
  const auto m = init_kge_model(store, KgeMethod::HAKE, 6, 4.0, 9);
  const auto p = scratch("model.kge");
  m.save(p);
  const auto back = KgeModel::load(p);
  CHECK(back.method == KgeMethod::HAKE);
  CHECK(back.entity == m.entity);
  CHECK(back.relation == m.relation);
  CHECK(back.entity_names == m.entity_names);
}

TEST_CASE("export_aligned_table") {
  const auto store = load_triples(fs::path(KHAN_FIXTURE_DIR) / "toy_kg.tsv", Stance::Common);
  const auto m = init_kge_model(store, KgeMethod::ModE, 8, 6.0, 2);
  const std::vector<RawArticle> corpus{{"alice bob", "carol went home <sep> dave", 0}};
  const auto vocab = build_vocab(corpus);

  const auto empty = export_aligned_table(m, {}, vocab, 8, Stance::Common);
  CHECK(empty.covered() == 0);
  for (double v : empty.values) CHECK(v == 0.0);

  const auto one = export_aligned_table(m, {{"alice", "alice"}}, vocab, 8, Stance::Common);
  CHECK(one.covered() == 1);
  std::size_t nonzero_rows = 0;
  for (std::size_t r = 0; r < one.rows; ++r) {
    bool nz = false;
    for (double v : one.row(r)) nz |= v != 0.0;
    nonzero_rows += nz;
  }
  CHECK(nonzero_rows == 1);
  const auto alice = static_cast<std::size_t>(vocab.id("alice"));
  for (std::size_t j = 0; j < 8; ++j) CHECK(one.row(alice)[j] == m.entity_row(0)[j]);

  const auto links = load_entity_links(fs::path(KHAN_FIXTURE_DIR) / "toy_links.tsv");
  const auto three = export_aligned_table(m, links, vocab, 8, Stance::Liberal);
  CHECK(three.covered() == 3);
  for (std::size_t r = 0; r < three.rows; ++r)
    if (!three.coverage[r])
      for (double v : three.row(r)) CHECK(v == 0.0);

  // Width alignment through the seeded projection.
  const auto projected = export_aligned_table(m, links, vocab, 4, Stance::Liberal, 5);
  CHECK(projected.dim == 4);
  CHECK(projected.covered() == 3);

  try {
    export_aligned_table(m, {{"alice", "zed"}}, vocab, 8, Stance::Common);
    FAIL("no throw");
  } catch (const UserError& e) {
    CHECK(std::string(e.what()).find("alice") != std::string::npos);
  }

  const auto p = scratch("table.txt");
  three.save(p);
  const auto back = KnowledgeEmbeddingTable::load(p);
  CHECK(back.stance == Stance::Liberal);
  CHECK(back.values == three.values);
  CHECK(back.coverage == three.coverage);
}

}  // TEST_SUITE
