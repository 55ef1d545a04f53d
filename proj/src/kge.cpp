#include "khan/kge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "khan/errors.hpp"
#include "khan/optim.hpp"
#include "khan/rng.hpp"

namespace khan {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t triple_key(const Triple& t) {
  return (static_cast<std::uint64_t>(t.head) << 42) |
         (static_cast<std::uint64_t>(t.relation) << 21) | static_cast<std::uint64_t>(t.tail);
}

double wrap_angle(double x) {
  double y = x - 2.0 * kPi * std::floor((x + kPi) / (2.0 * kPi));
  if (y >= kPi) y -= 2.0 * kPi;
  if (y < -kPi) y += 2.0 * kPi;
  return y;
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::string to_string(Stance stance) {
  switch (stance) {
    case Stance::Common: return "common";
    case Stance::Liberal: return "liberal";
    case Stance::Conservative: return "conservative";
  }
  return "?";
}

Stance parse_stance(const std::string& text) {
  if (text == "common") return Stance::Common;
  if (text == "liberal") return Stance::Liberal;
  if (text == "conservative") return Stance::Conservative;
  throw UserError("unknown stance '" + text + "' (expected common, liberal or conservative)");
}

std::string to_string(KgeMethod method) {
  switch (method) {
    case KgeMethod::RotatE: return "RotatE";
    case KgeMethod::ModE: return "ModE";
    case KgeMethod::HAKE: return "HAKE";
  }
  return "?";
}

KgeMethod parse_kge_method(const std::string& text) {
  std::string lower;
  for (char c : text) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "rotate") return KgeMethod::RotatE;
  if (lower == "mode") return KgeMethod::ModE;
  if (lower == "hake") return KgeMethod::HAKE;
  throw UserError("unknown KGE method '" + text + "' (expected RotatE, ModE or HAKE)");
}

// ---- triple store ---------------------------------------------------------------

std::int32_t TripleStore::intern_entity(const std::string& name) {
  auto [it, fresh] = entity_ids_.emplace(name, static_cast<std::int32_t>(entity_names_.size()));
  if (fresh) entity_names_.push_back(name);
  return it->second;
}

std::int32_t TripleStore::intern_relation(const std::string& name) {
  auto [it, fresh] =
      relation_ids_.emplace(name, static_cast<std::int32_t>(relation_names_.size()));
  if (fresh) relation_names_.push_back(name);
  return it->second;
}

bool TripleStore::add(const std::string& head, const std::string& relation,
                      const std::string& tail) {
  const auto h = intern_entity(head);
  const auto r = intern_relation(relation);
  const auto t = intern_entity(tail);
  return add(Triple{h, r, t});
}

bool TripleStore::add(Triple t) {
  auto in_range = [](std::int32_t id, std::size_t n) {
    return id >= 0 && static_cast<std::size_t>(id) < n;
  };
  if (!in_range(t.head, num_entities()) || !in_range(t.tail, num_entities()) ||
      !in_range(t.relation, num_relations()))
    throw std::out_of_range("triple references an id outside the store vocabulary");
  if (!keys_.insert(triple_key(t)).second) {
    ++duplicates_;
    return false;
  }
  triples_.push_back(t);
  return true;
}

bool TripleStore::contains(const Triple& t) const { return keys_.count(triple_key(t)) != 0; }

TripleStore load_triples(const std::filesystem::path& path, Stance stance) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read " + path.string());
  TripleStore store(stance);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(std::move(line));
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw ParseError(path.string(), lineno,
                       "expected 3 tab-separated fields, found " + std::to_string(fields.size()));
    for (const auto& f : fields)
      if (f.empty()) throw ParseError(path.string(), lineno, "empty field");
    store.add(fields[0], fields[1], fields[2]);
  }
  return store;
}

// ---- model ----------------------------------------------------------------------------

std::size_t KgeModel::relation_width() const {
  return method == KgeMethod::RotatE ? dim / 2 : dim;
}

void KgeModel::wrap_phases() {
  const std::size_t half = dim / 2;
  switch (method) {
    case KgeMethod::RotatE:
      for (auto& v : relation) v = wrap_angle(v);
      break;
    case KgeMethod::HAKE:
      for (std::size_t e = 0; e < num_entities(); ++e)
        for (std::size_t i = half; i < dim; ++i) entity[e * dim + i] = wrap_angle(entity[e * dim + i]);
      for (std::size_t r = 0; r < num_relations(); ++r)
        for (std::size_t i = half; i < dim; ++i)
          relation[r * dim + i] = wrap_angle(relation[r * dim + i]);
      break;
    case KgeMethod::ModE:
      break;
  }
}

KgeModel init_kge_model(const TripleStore& store, KgeMethod method, std::size_t dim,
                        double gamma, std::uint64_t seed) {
  if (dim == 0) throw UserError("KGE dim must be positive");
  if (method != KgeMethod::ModE && dim % 2 != 0)
    throw UserError(to_string(method) + " needs an even dim (paired components), got " +
                    std::to_string(dim));
  KgeModel m;
  m.method = method;
  m.dim = dim;
  m.gamma = gamma;
  m.entity_names = store.entity_names();
  m.relation_names = store.relation_names();
  const double range = (gamma + 2.0) / static_cast<double>(dim);
  const std::size_t half = dim / 2;
  Rng rng(seed);
  m.entity.resize(m.num_entities() * dim);
  for (std::size_t e = 0; e < m.num_entities(); ++e)
    for (std::size_t i = 0; i < dim; ++i)
      m.entity[e * dim + i] = (method == KgeMethod::HAKE && i >= half)
                                  ? rng.uniform(-kPi, kPi)
                                  : rng.uniform(-range, range);
  const std::size_t rw = m.relation_width();
  m.relation.resize(m.num_relations() * rw);
  for (std::size_t r = 0; r < m.num_relations(); ++r)
    for (std::size_t i = 0; i < rw; ++i) {
      double v;
      if (method == KgeMethod::RotatE || (method == KgeMethod::HAKE && i >= half))
        v = rng.uniform(-kPi, kPi);
      else
        v = rng.uniform(-range, range);
      m.relation[r * rw + i] = v;
    }
  m.wrap_phases();
  return m;
}

double score_triple(const KgeModel& m, std::int32_t h, std::int32_t r, std::int32_t t) {
  const auto H = m.entity_row(h), T = m.entity_row(t);
  const auto R = m.relation_row(r);
  const std::size_t half = m.dim / 2;
  double dist = 0.0;
  switch (m.method) {
    case KgeMethod::RotatE:
      for (std::size_t i = 0; i < half; ++i) {
        const double c = std::cos(R[i]), s = std::sin(R[i]);
        const double re = H[i] * c - H[half + i] * s - T[i];
        const double im = H[i] * s + H[half + i] * c - T[half + i];
        dist += std::sqrt(re * re + im * im);
      }
      break;
    case KgeMethod::ModE:
      for (std::size_t i = 0; i < m.dim; ++i) dist += std::abs(H[i] * R[i] - T[i]);
      break;
    case KgeMethod::HAKE: {
      double mod = 0.0, phase = 0.0;
      for (std::size_t i = 0; i < half; ++i) {
        const double d = H[i] * R[i] - T[i];
        mod += d * d;
        phase += std::abs(std::sin((H[half + i] + R[half + i] - T[half + i]) / 2.0));
      }
      dist = m.modulus_weight * std::sqrt(mod) + m.phase_weight * phase;
      break;
    }
  }
  return m.gamma - dist;
}

void accumulate_score_gradient(const KgeModel& m, std::int32_t h, std::int32_t r,
                               std::int32_t t, double coeff, std::span<double> entity_grad,
                               std::span<double> relation_grad) {
  const auto H = m.entity_row(h), T = m.entity_row(t);
  const auto R = m.relation_row(r);
  const std::size_t dim = m.dim, half = dim / 2, rw = m.relation_width();
  double* gH = entity_grad.data() + static_cast<std::size_t>(h) * dim;
  double* gT = entity_grad.data() + static_cast<std::size_t>(t) * dim;
  double* gR = relation_grad.data() + static_cast<std::size_t>(r) * rw;
  // score = gamma - dist, so every distance derivative enters with -coeff.
  const double c0 = -coeff;
  switch (m.method) {
    case KgeMethod::RotatE:
      for (std::size_t i = 0; i < half; ++i) {
        const double c = std::cos(R[i]), s = std::sin(R[i]);
        const double hr = H[i], hi = H[half + i];
        const double re = hr * c - hi * s - T[i];
        const double im = hr * s + hi * c - T[half + i];
        const double mag = std::sqrt(re * re + im * im);
        if (mag < 1e-300) continue;
        const double ur = re / mag, ui = im / mag;
        gH[i] += c0 * (ur * c + ui * s);
        gH[half + i] += c0 * (-ur * s + ui * c);
        gT[i] += c0 * -ur;
        gT[half + i] += c0 * -ui;
        gR[i] += c0 * (ur * (-hr * s - hi * c) + ui * (hr * c - hi * s));
      }
      break;
    case KgeMethod::ModE:
      for (std::size_t i = 0; i < dim; ++i) {
        const double sg = sign(H[i] * R[i] - T[i]);
        gH[i] += c0 * sg * R[i];
        gR[i] += c0 * sg * H[i];
        gT[i] += c0 * -sg;
      }
      break;
    case KgeMethod::HAKE: {
      double mod = 0.0;
      for (std::size_t i = 0; i < half; ++i) {
        const double d = H[i] * R[i] - T[i];
        mod += d * d;
      }
      mod = std::sqrt(mod);
      const double wm = c0 * m.modulus_weight, wp = c0 * m.phase_weight;
      for (std::size_t i = 0; i < half; ++i) {
        if (mod > 1e-300) {
          const double u = (H[i] * R[i] - T[i]) / mod;
          gH[i] += wm * u * R[i];
          gR[i] += wm * u * H[i];
          gT[i] += wm * -u;
        }
        const double phi = (H[half + i] + R[half + i] - T[half + i]) / 2.0;
        const double dp = sign(std::sin(phi)) * std::cos(phi) / 2.0;
        gH[half + i] += wp * dp;
        gR[half + i] += wp * dp;
        gT[half + i] += wp * -dp;
      }
      break;
    }
  }
}

void KgeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw UserError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "method=" << to_string(method) << "\ndim=" << dim << "\ngamma=" << gamma
      << "\nmodulus_weight=" << modulus_weight << "\nphase_weight=" << phase_weight << '\n';
  auto rows = [&](const char* tag, const std::vector<std::string>& names,
                  const std::vector<double>& values, std::size_t width) {
    out << tag << '=' << names.size() << '\n';
    for (std::size_t i = 0; i < names.size(); ++i) {
      out << names[i] << '\t';
      for (std::size_t j = 0; j < width; ++j) out << (j ? " " : "") << values[i * width + j];
      out << '\n';
    }
  };
  rows("entities", entity_names, entity, dim);
  rows("relations", relation_names, relation, relation_width());
}

KgeModel KgeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read " + path.string());
  const std::string src = path.string();
  std::size_t lineno = 0;
  std::string line;
  auto next_line = [&] {
    if (!std::getline(in, line)) throw ParseError(src, lineno + 1, "unexpected end of file");
    ++lineno;
    line = strip_cr(line);
  };
  auto header = [&](const std::string& key) {
    next_line();
    if (line.rfind(key + "=", 0) != 0) throw ParseError(src, lineno, "expected " + key + "=");
    return line.substr(key.size() + 1);
  };
  KgeModel m;
  try {
    m.method = parse_kge_method(header("method"));
    m.dim = std::stoul(header("dim"));
    m.gamma = std::stod(header("gamma"));
    m.modulus_weight = std::stod(header("modulus_weight"));
    m.phase_weight = std::stod(header("phase_weight"));
  } catch (const std::logic_error& e) {
    throw ParseError(src, lineno, e.what());
  }
  auto rows = [&](const std::string& tag, std::vector<std::string>& names,
                  std::vector<double>& values, std::size_t width) {
    const std::size_t count = std::stoul(header(tag));
    for (std::size_t i = 0; i < count; ++i) {
      next_line();
      auto tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError(src, lineno, "missing name column");
      names.push_back(line.substr(0, tab));
      std::istringstream vs(line.substr(tab + 1));
      double v;
      std::size_t got = 0;
      while (vs >> v) {
        values.push_back(v);
        ++got;
      }
      if (got != width) throw ParseError(src, lineno, "row width differs from header");
    }
  };
  rows("entities", m.entity_names, m.entity, m.dim);
  rows("relations", m.relation_names, m.relation, m.relation_width());
  return m;
}

// ---- training ---------------------------------------------------------------------------

KgeTrainResult train_kge(const TripleStore& store, const KgeConfig& config) {
  if (store.triples().empty()) throw UserError("train_kge: the triple store is empty");
  if (config.batch_size == 0) throw UserError("train_kge: batch_size must be positive");
  KgeTrainResult result{init_kge_model(store, config.method, config.dim, config.gamma,
                                       config.seed),
                        {}};
  KgeModel& m = result.model;
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t ne = m.num_entities();
  std::vector<double> entity_grad(m.entity.size()), relation_grad(m.relation.size());
  AdamState entity_state, relation_state;
  const AdamOptions adam{};

  std::vector<std::size_t> order(store.triples().size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<Triple> negs;
  std::vector<double> neg_scores, weights;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      std::fill(entity_grad.begin(), entity_grad.end(), 0.0);
      std::fill(relation_grad.begin(), relation_grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const Triple pos = store.triples()[order[b]];
        negs.clear();
        if (ne > 1) {
          for (std::size_t k = 0; k < config.negatives; ++k) {
            const bool corrupt_head = rng.below(2) == 0;
            Triple cand = pos;
            for (int attempt = 0; attempt < 16; ++attempt) {
              const auto e = static_cast<std::int32_t>(rng.below(ne));
              cand = pos;
              (corrupt_head ? cand.head : cand.tail) = e;
              if (!store.contains(cand)) break;
            }
            if (!store.contains(cand)) negs.push_back(cand);
          }
        }
        const double sp = score_triple(m, pos.head, pos.relation, pos.tail);
        double loss = softplus(-sp);
        neg_scores.resize(negs.size());
        weights.resize(negs.size());
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < negs.size(); ++k) {
          neg_scores[k] = score_triple(m, negs[k].head, negs[k].relation, negs[k].tail);
          mx = std::max(mx, config.adversarial_temperature * neg_scores[k]);
        }
        double z = 0.0;
        for (std::size_t k = 0; k < negs.size(); ++k)
          z += (weights[k] = std::exp(config.adversarial_temperature * neg_scores[k] - mx));
        double neg_loss = 0.0;
        for (std::size_t k = 0; k < negs.size(); ++k) {
          weights[k] /= z;
          neg_loss += weights[k] * softplus(neg_scores[k]);
        }
        // Positive and negative parts averaged; adversarial weights are constants.
        epoch_loss += 0.5 * (loss + neg_loss);
        accumulate_score_gradient(m, pos.head, pos.relation, pos.tail,
                                  -0.5 * sigmoid(-sp) * inv_batch, entity_grad, relation_grad);
        for (std::size_t k = 0; k < negs.size(); ++k)
          accumulate_score_gradient(m, negs[k].head, negs[k].relation, negs[k].tail,
                                    0.5 * weights[k] * sigmoid(neg_scores[k]) * inv_batch,
                                    entity_grad, relation_grad);
      }
      adam_step(m.entity, entity_grad, entity_state, config.lr, adam, "entity embeddings");
      adam_step(m.relation, relation_grad, relation_state, config.lr, adam,
                "relation embeddings");
      m.wrap_phases();
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return result;
}

// ---- evaluation --------------------------------------------------------------------------

double CompletionMetrics::hits_at(std::size_t k) const {
  for (const auto& [kk, v] : hits)
    if (kk == k) return v;
  throw std::out_of_range("HITS@" + std::to_string(k) + " was not computed");
}

CompletionMetrics evaluate_completion(const TripleScorer& score, std::size_t num_entities,
                                      const TripleStore& known, std::span<const Triple> test,
                                      std::span<const std::size_t> k_list) {
  if (test.empty()) throw UserError("evaluate_completion: empty test set");
  std::vector<std::size_t> ranks;
  ranks.reserve(test.size() * 2);
  for (const auto& tr : test) {
    for (const bool corrupt_head : {true, false}) {
      const std::int32_t truth = corrupt_head ? tr.head : tr.tail;
      const double true_score = score(tr.head, tr.relation, tr.tail);
      std::size_t rank = 1;
      for (std::size_t e = 0; e < num_entities; ++e) {
        const auto cand = static_cast<std::int32_t>(e);
        if (cand == truth) continue;
        Triple c = tr;
        (corrupt_head ? c.head : c.tail) = cand;
        if (known.contains(c)) continue;
        const double s = score(c.head, c.relation, c.tail);
        if (s > true_score || (s == true_score && cand < truth)) ++rank;
      }
      ranks.push_back(rank);
    }
  }
  CompletionMetrics out;
  out.rankings = ranks.size();
  for (std::size_t k : k_list) out.hits.emplace_back(k, 0.0);
  for (std::size_t r : ranks) {
    out.mean_rank += static_cast<double>(r);
    out.mean_reciprocal_rank += 1.0 / static_cast<double>(r);
    for (auto& [k, v] : out.hits)
      if (r <= k) v += 1.0;
  }
  const double n = static_cast<double>(ranks.size());
  out.mean_rank /= n;
  out.mean_reciprocal_rank /= n;
  for (auto& [k, v] : out.hits) v /= n;
  return out;
}

CompletionMetrics evaluate_completion(const KgeModel& m, const TripleStore& known,
                                      std::span<const Triple> test,
                                      std::span<const std::size_t> k_list) {
  for (const auto& t : test)
    if (t.head < 0 || t.tail < 0 || t.relation < 0 ||
        static_cast<std::size_t>(std::max(t.head, t.tail)) >= m.num_entities() ||
        static_cast<std::size_t>(t.relation) >= m.num_relations())
      throw UserError("evaluate_completion: test triple references an unknown id");
  return evaluate_completion(
      [&m](std::int32_t h, std::int32_t r, std::int32_t t) { return score_triple(m, h, r, t); },
      m.num_entities(), known, test, k_list);
}

std::pair<TripleStore, std::vector<Triple>> split_holdout(const TripleStore& store,
                                                          double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw UserError("holdout ratio must lie in [0, 1)");
  std::vector<std::size_t> order(store.triples().size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto held = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(order.size())));
  TripleStore train(store.stance());
  for (const auto& e : store.entity_names()) train.intern_entity(e);
  for (const auto& r : store.relation_names()) train.intern_relation(r);
  std::vector<Triple> test;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& t = store.triples()[order[i]];
    if (i < held)
      test.push_back(t);
    else
      train.add(t);
  }
  return {std::move(train), std::move(test)};
}

// ---- aligned tables --------------------------------------------------------------------------

KnowledgeEmbeddingTable KnowledgeEmbeddingTable::zeros(Stance stance, std::size_t rows,
                                                       std::size_t dim) {
  KnowledgeEmbeddingTable t;
  t.stance = stance;
  t.rows = rows;
  t.dim = dim;
  t.values.assign(rows * dim, 0.0);
  t.coverage.assign(rows, 0);
  return t;
}

std::size_t KnowledgeEmbeddingTable::covered() const {
  return static_cast<std::size_t>(std::count(coverage.begin(), coverage.end(), 1));
}

void KnowledgeEmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw UserError("cannot write " + path.string());
  out << "stance=" << to_string(stance) << "\ndim=" << dim << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < rows; ++i) {
    out << static_cast<int>(coverage[i]);
    for (double v : row(i)) out << ' ' << v;
    out << '\n';
  }
}

KnowledgeEmbeddingTable KnowledgeEmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read " + path.string());
  const std::string src = path.string();
  std::string line;
  KnowledgeEmbeddingTable t;
  if (!std::getline(in, line) || strip_cr(line).rfind("stance=", 0) != 0)
    throw ParseError(src, 1, "expected stance=<tag>");
  t.stance = parse_stance(strip_cr(line).substr(7));
  if (!std::getline(in, line) || strip_cr(line).rfind("dim=", 0) != 0)
    throw ParseError(src, 2, "expected dim=<d>");
  try {
    t.dim = std::stoul(strip_cr(line).substr(4));
  } catch (const std::logic_error&) {
    throw ParseError(src, 2, "malformed dim");
  }
  std::size_t lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    std::istringstream is(line);
    int cov = -1;
    if (!(is >> cov) || (cov != 0 && cov != 1))
      throw ParseError(src, lineno, "coverage flag must be 0 or 1");
    std::size_t got = 0;
    double v;
    while (is >> v) {
      t.values.push_back(v);
      ++got;
    }
    if (got != t.dim) throw ParseError(src, lineno, "row width differs from dim");
    t.coverage.push_back(static_cast<std::uint8_t>(cov));
    ++t.rows;
  }
  return t;
}

EntityLinks load_entity_links(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read " + path.string());
  EntityLinks links;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = strip_cr(std::move(line));
    if (line.empty() || line[0] == '#') continue;
    auto f = split_tabs(line);
    if (f.size() != 2 || f[0].empty() || f[1].empty())
      throw ParseError(path.string(), lineno, "expected word<TAB>entity");
    links.emplace_back(f[0], f[1]);
  }
  return links;
}

KnowledgeEmbeddingTable export_aligned_table(const KgeModel& m, const EntityLinks& links,
                                             const Vocabulary& vocab, std::size_t d,
                                             Stance stance, std::uint64_t seed) {
  if (d == 0) throw UserError("export: target width must be positive");
  std::unordered_map<std::string, std::size_t> entity_index;
  for (std::size_t i = 0; i < m.num_entities(); ++i) entity_index.emplace(m.entity_names[i], i);

  std::vector<double> projection;
  if (m.dim != d) {
    Rng rng(seed);
    projection.resize(m.dim * d);
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& v : projection) v = rng.normal() * s;
  }

  auto table = KnowledgeEmbeddingTable::zeros(stance, vocab.size(), d);
  for (const auto& [word, entity] : links) {
    auto it = entity_index.find(entity);
    if (it == entity_index.end())
      throw UserError("entity link for word '" + word + "' names unknown entity '" + entity + "'");
    auto id = vocab.find(word);
    if (!id) continue;
    auto src = m.entity_row(it->second);
    auto dst = table.row(static_cast<std::size_t>(*id));
    if (projection.empty()) {
      std::copy(src.begin(), src.end(), dst.begin());
    } else {
      std::fill(dst.begin(), dst.end(), 0.0);
      for (std::size_t i = 0; i < m.dim; ++i)
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[i] * projection[i * d + j];
    }
    table.coverage[static_cast<std::size_t>(*id)] = 1;
  }
  return table;
}

}  // namespace khan
