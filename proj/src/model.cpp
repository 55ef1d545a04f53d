#include "khan/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "khan/errors.hpp"
#include "khan/rng.hpp"

namespace khan {

namespace {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  auto t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.mutable_data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor zero_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }

// Whitespace-free shape for checkpoint headers, e.g. "9x8".
std::string shape_token(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out;
}

Tensor mask_tensor(std::span<const std::uint8_t> mask) {
  std::vector<double> v(mask.begin(), mask.end());
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

std::vector<std::uint8_t> all_active(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

Tensor clone_tensor(const Tensor& t) {
  if (!t.defined()) return t;
  return Tensor(t.shape(), std::vector<double>(t.data().begin(), t.data().end()),
                t.requires_grad());
}

// One mixing step: rows with coverage become keep*x + mix*K[row], others pass.
Tensor mix_step(const Tensor& x, std::span<const std::int32_t> ids,
                const KnowledgeEmbeddingTable& table, double keep, double mix) {
  const std::size_t m = ids.size(), d = table.dim;
  bool any = false;
  std::vector<double> keep_w(m, 1.0);
  std::vector<double> addend(m * d, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto id = static_cast<std::size_t>(ids[i]);
    if (!table.coverage[id]) continue;
    keep_w[i] = keep;
    if (keep != 1.0) any = true;
    if (mix != 0.0) {
      any = true;
      auto k = table.row(id);
      for (std::size_t j = 0; j < d; ++j) addend[i * d + j] = mix * k[j];
    }
  }
  if (!any) return x;
  return add(scale_rows(x, Tensor({m}, std::move(keep_w))), Tensor({m, d}, std::move(addend)));
}

Tensor sinusoidal_positions(std::size_t rows, std::size_t d) {
  std::vector<double> pe(rows * d);
  for (std::size_t p = 0; p < rows; ++p)
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe[p * d + i] = (i % 2 == 0) ? std::sin(p * rate) : std::cos(p * rate);
    }
  return Tensor({rows, d}, std::move(pe));
}

bool uses_knowledge(const HyperParams& hp, const KnowledgeBundle* bundle) {
  return hp.mode == AblationMode::All && bundle != nullptr;
}

// Embeddings of a PAD-free id prefix, with knowledge when the mode allows it.
Tensor embed(std::span<const std::int32_t> ids, const ModelParams& params,
             const KnowledgeBundle* bundle, const HyperParams& hp, bool positions) {
  Tensor x = uses_knowledge(hp, bundle)
                 ? inject_knowledge(ids, params, *bundle, hp.alpha, hp.beta, hp.orientation)
                 : gather_rows(params.word_table, ids);
  if (positions && hp.positional_encoding) x = add(x, sinusoidal_positions(ids.size(), hp.d));
  return x;
}

// Non-PAD ids in order; agrees with the masks built by EncodedArticle.
std::vector<std::int32_t> active_ids(std::span<const std::int32_t> ids) {
  std::vector<std::int32_t> out;
  for (auto id : ids)
    if (id != Vocabulary::kPad) out.push_back(id);
  return out;
}

}  // namespace

// ---- enums / hyperparameters ---------------------------------------------------------

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::W: return "W";
    case AblationMode::WS: return "WS";
    case AblationMode::WST: return "WST";
    case AblationMode::All: return "All";
  }
  return "?";
}

AblationMode parse_mode(const std::string& text) {
  if (text == "W") return AblationMode::W;
  if (text == "WS") return AblationMode::WS;
  if (text == "WST") return AblationMode::WST;
  if (text == "All" || text == "all") return AblationMode::All;
  throw UserError("mode: unknown ablation '" + text + "' (expected W, WS, WST or All)");
}

std::string to_string(InjectionOrientation o) {
  return o == InjectionOrientation::Algorithm1 ? "algorithm1" : "factor_weighs_embedding";
}

InjectionOrientation parse_orientation(const std::string& text) {
  if (text == "algorithm1") return InjectionOrientation::Algorithm1;
  if (text == "factor_weighs_embedding" || text == "default")
    return InjectionOrientation::FactorWeighsEmbedding;
  throw UserError("injection_orientation: expected factor_weighs_embedding or algorithm1, got '" +
                  text + "'");
}

void HyperParams::validate() const {
  if (d == 0) throw UserError("d must be positive");
  if (heads == 0 || d % heads != 0)
    throw UserError("heads must divide d (d=" + std::to_string(d) +
                    ", heads=" + std::to_string(heads) + ")");
  if (n == 0) throw UserError("n must be >= 1");
  if (l == 0) throw UserError("l must be >= 1");
  if (classes < 2) throw UserError("classes must be >= 2");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw UserError("alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (!(beta >= 0.0 && beta <= 1.0))
    throw UserError("beta must lie in [0, 1], got " + std::to_string(beta));
  if (!(l2_coeff >= 0.0)) throw UserError("l2_coeff must be non-negative");
}

// ---- parameters ---------------------------------------------------------------------------

ModelParams ModelParams::init(const HyperParams& hp, std::size_t vocab_size, std::uint64_t seed) {
  hp.validate();
  const std::size_t d = hp.d, inner = 4 * d;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng(seed);
  ModelParams p;
  p.word_table = uniform_param({vocab_size, d}, bound, rng);
  for (auto* a : {&p.word_attention, &p.sentence_attention, &p.title_attention}) {
    a->heads = hp.heads;
    a->wq = uniform_param({d, d}, bound, rng);
    a->wk = uniform_param({d, d}, bound, rng);
    a->wv = uniform_param({d, d}, bound, rng);
    a->wo = uniform_param({d, d}, bound, rng);
  }
  for (auto* f : {&p.word_ff, &p.sentence_ff}) {
    f->w1 = uniform_param({d, inner}, bound, rng);
    f->b1 = zero_param({inner});
    f->w2 = uniform_param({inner, d}, bound, rng);
    f->b2 = zero_param({d});
  }
  p.fuse_w = uniform_param({2 * d, d}, bound, rng);
  p.fuse_b = zero_param({d});
  p.out_w = uniform_param({d, hp.classes}, bound, rng);
  p.out_b = zero_param({hp.classes});
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out{{"word_table", word_table}};
  auto attn = [&](const std::string& prefix, const AttentionParams& a) {
    out.emplace_back(prefix + ".wq", a.wq);
    out.emplace_back(prefix + ".wk", a.wk);
    out.emplace_back(prefix + ".wv", a.wv);
    out.emplace_back(prefix + ".wo", a.wo);
  };
  auto ff = [&](const std::string& prefix, const FeedForwardParams& f) {
    out.emplace_back(prefix + ".w1", f.w1);
    out.emplace_back(prefix + ".b1", f.b1);
    out.emplace_back(prefix + ".w2", f.w2);
    out.emplace_back(prefix + ".b2", f.b2);
  };
  attn("word_attention", word_attention);
  ff("word_ff", word_ff);
  attn("sentence_attention", sentence_attention);
  ff("sentence_ff", sentence_ff);
  attn("title_attention", title_attention);
  out.emplace_back("fuse_w", fuse_w);
  out.emplace_back("fuse_b", fuse_b);
  out.emplace_back("out_w", out_w);
  out.emplace_back("out_b", out_b);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams c = *this;
  c.word_table = clone_tensor(word_table);
  for (auto* a : {&c.word_attention, &c.sentence_attention, &c.title_attention}) {
    a->wq = clone_tensor(a->wq);
    a->wk = clone_tensor(a->wk);
    a->wv = clone_tensor(a->wv);
    a->wo = clone_tensor(a->wo);
  }
  for (auto* f : {&c.word_ff, &c.sentence_ff}) {
    f->w1 = clone_tensor(f->w1);
    f->b1 = clone_tensor(f->b1);
    f->w2 = clone_tensor(f->w2);
    f->b2 = clone_tensor(f->b2);
  }
  c.fuse_w = clone_tensor(fuse_w);
  c.fuse_b = clone_tensor(fuse_b);
  c.out_w = clone_tensor(out_w);
  c.out_b = clone_tensor(out_b);
  return c;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named()) t.zero_grad();
}

KnowledgeBundle KnowledgeBundle::zeros(std::size_t rows, std::size_t d) {
  return {KnowledgeEmbeddingTable::zeros(Stance::Common, rows, d),
          KnowledgeEmbeddingTable::zeros(Stance::Liberal, rows, d),
          KnowledgeEmbeddingTable::zeros(Stance::Conservative, rows, d)};
}

void KnowledgeBundle::validate(std::size_t rows, std::size_t d) const {
  for (const auto* t : {&common, &liberal, &conservative})
    if (t->rows != rows || t->dim != d || t->coverage.size() != rows ||
        t->values.size() != rows * d)
      throw UserError("knowledge table '" + to_string(t->stance) + "' is " +
                      std::to_string(t->rows) + "x" + std::to_string(t->dim) + ", expected " +
                      std::to_string(rows) + "x" + std::to_string(d));
}

// ---- layers -----------------------------------------------------------------------------------

Tensor inject_knowledge(std::span<const std::int32_t> word_ids, const ModelParams& params,
                        const KnowledgeBundle& bundle, double alpha, double beta,
                        InjectionOrientation orientation) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UserError("alpha must lie in [0, 1]");
  if (!(beta >= 0.0 && beta <= 1.0)) throw UserError("beta must lie in [0, 1]");
  const std::size_t d = params.word_table.cols();
  bundle.validate(params.vocab_size(), d);
  const Tensor e = gather_rows(params.word_table, word_ids);

  const bool literal = orientation == InjectionOrientation::Algorithm1;
  const double keep_a = literal ? 1.0 - alpha : alpha, mix_a = literal ? alpha : 1.0 - alpha;
  const double keep_b = literal ? 1.0 - beta : beta, mix_b = literal ? beta : 1.0 - beta;

  const Tensor e_com = mix_step(e, word_ids, bundle.common, keep_a, mix_a);
  const Tensor e_lib = mix_step(e_com, word_ids, bundle.liberal, keep_b, mix_b);
  const Tensor e_con = mix_step(e_com, word_ids, bundle.conservative, keep_b, mix_b);
  return add(linear(concat_cols({e_lib, e_con}), params.fuse_w, params.fuse_b), e);
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::span<const std::uint8_t> key_mask, const AttentionParams& p) {
  const std::size_t d = p.wq.cols(), heads = p.heads;
  if (heads == 0 || d % heads != 0) throw ShapeError("attention: heads must divide d");
  if (k.rows() != v.rows()) throw ShapeError("attention: key and value row counts differ");
  if (key_mask.size() != k.rows()) throw ShapeError("attention: key mask length mismatch");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor Q = matmul(q, p.wq), K = matmul(k, p.wk), V = matmul(v, p.wv);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(Q, h * dh, dh);
    const Tensor kh = slice_cols(K, h * dh, dh);
    const Tensor vh = slice_cols(V, h * dh, dh);
    const Tensor weights =
        masked_softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt), key_mask);
    outs.push_back(matmul(weights, vh));
  }
  return matmul(heads == 1 ? outs.front() : concat_cols(outs), p.wo);
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p) {
  return add(x, linear(relu(linear(x, p.w1, p.b1)), p.w2, p.b2));
}

namespace {

Tensor self_attention_block(const Tensor& x, std::span<const std::uint8_t> mask,
                            const AttentionParams& attention, const FeedForwardParams& ff,
                            const char* what) {
  if (mask.size() != x.rows())
    throw ShapeError(std::string(what) + ": mask length does not match rows");
  if (std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; }))
    throw DegenerateInputError(std::string(what) + ": no active positions");
  const Tensor attended = multi_head_attention(x, x, x, mask, attention);
  const Tensor out = feed_forward(attended, ff);
  if (std::all_of(mask.begin(), mask.end(), [](auto m) { return m != 0; })) return out;
  return scale_rows(out, mask_tensor(mask));
}

}  // namespace

Tensor word_level(const Tensor& words, std::span<const std::uint8_t> word_mask,
                  const AttentionParams& attention, const FeedForwardParams& ff) {
  return self_attention_block(words, word_mask, attention, ff, "word_level");
}

Tensor sentence_level(const Tensor& sentences, std::span<const std::uint8_t> sentence_mask,
                      const AttentionParams& attention, const FeedForwardParams& ff) {
  return self_attention_block(sentences, sentence_mask, attention, ff, "sentence_level");
}

Tensor title_level(const Tensor& title, const Tensor& sentences,
                   std::span<const std::uint8_t> sentence_mask, const AttentionParams& p) {
  const std::size_t d = p.wq.cols(), heads = p.heads;
  if (title.numel() != d) throw ShapeError("title_level: title must be 1×d");
  if (sentence_mask.size() != sentences.rows())
    throw ShapeError("title_level: mask length does not match rows");
  if (std::none_of(sentence_mask.begin(), sentence_mask.end(), [](auto m) { return m != 0; }))
    throw DegenerateInputError("title_level: no active sentences");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor t = title.rank() == 2 ? title : reshape(title, {1, d});
  const Tensor Q = matmul(t, p.wq), K = matmul(sentences, p.wk), V = matmul(sentences, p.wv);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor weights = masked_softmax_rows(
        scale(matmul(slice_cols(Q, h * dh, dh), transpose(slice_cols(K, h * dh, dh))), inv_sqrt),
        sentence_mask);
    outs.push_back(scale_rows(slice_cols(V, h * dh, dh), weights));
  }
  const Tensor reweighted = matmul(heads == 1 ? outs.front() : concat_cols(outs), p.wo);
  const Tensor out = add(reweighted, sentences);
  if (std::all_of(sentence_mask.begin(), sentence_mask.end(), [](auto m) { return m != 0; }))
    return out;
  return scale_rows(out, mask_tensor(sentence_mask));
}

// ---- full model ---------------------------------------------------------------------------------

std::vector<Tensor> pooled_sentence_vectors(const EncodedArticle& article,
                                            const ModelParams& params, const HyperParams& hp,
                                            const KnowledgeBundle* bundle) {
  std::vector<Tensor> out;
  for (std::size_t s = 0; s < article.max_sentences; ++s) {
    if (!article.sentence_mask[s]) continue;
    const auto ids = active_ids(article.sentence(s));
    const Tensor words = embed(ids, params, bundle, hp, true);
    const auto mask = all_active(ids.size());
    const Tensor encoded = word_level(words, mask, params.word_attention, params.word_ff);
    out.push_back(mean_rows(encoded, mask));
  }
  if (out.empty()) throw DegenerateInputError("article has no active sentences");
  return out;
}

Tensor encode_article_vector(const EncodedArticle& article, const ModelParams& params,
                             const KnowledgeBundle* bundle, const HyperParams& hp) {
  const auto sentence_vecs = pooled_sentence_vectors(article, params, hp, bundle);
  const Tensor stacked = stack_rows(sentence_vecs);
  const auto mask = all_active(sentence_vecs.size());
  if (hp.mode == AblationMode::W) return mean_rows(stacked, mask);

  const Tensor contextual =
      sentence_level(stacked, mask, params.sentence_attention, params.sentence_ff);
  if (hp.mode == AblationMode::WS) return mean_rows(contextual, mask);

  Tensor title = Tensor::zeros({1, hp.d});
  const auto title_ids = active_ids(article.title);
  if (!title_ids.empty()) {
    const Tensor words = embed(title_ids, params, bundle, hp, false);
    title = reshape(mean_rows(words, all_active(title_ids.size())), {1, hp.d});
  }
  const Tensor final_rows = title_level(title, contextual, mask, params.title_attention);
  return mean_rows(final_rows, mask);
}

Tensor predict(const EncodedArticle& article, const ModelParams& params,
               const KnowledgeBundle* bundle, const HyperParams& hp) {
  const Tensor pooled = reshape(encode_article_vector(article, params, bundle, hp), {1, hp.d});
  const Tensor probs = softmax_rows(linear(pooled, params.out_w, params.out_b));
  return reshape(probs, {hp.classes});
}

Tensor loss(const Tensor& probs, int label, const ModelParams& params, double l2_coeff) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.numel())
    throw std::invalid_argument("loss: label " + std::to_string(label) + " outside [0, " +
                                std::to_string(probs.numel()) + ")");
  Tensor out = neg_log_pick(probs, static_cast<std::size_t>(label));
  if (l2_coeff != 0.0)
    for (const auto& [name, t] : params.named())
      out = add(out, scale(sum_squares(t), l2_coeff));
  return out;
}

// ---- checkpoints --------------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const HyperParams& hp,
                     const ModelParams& params) {
  std::ofstream out(path);
  if (!out) throw UserError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "khan-checkpoint=1\n"
      << "d=" << hp.d << "\nheads=" << hp.heads << "\nn=" << hp.n << "\nl=" << hp.l
      << "\nclasses=" << hp.classes << "\nmode=" << to_string(hp.mode) << "\nalpha=" << hp.alpha
      << "\nbeta=" << hp.beta << "\ninjection_orientation=" << to_string(hp.orientation)
      << "\nseed=" << hp.seed << "\nl2_coeff=" << hp.l2_coeff
      << "\npositional_encoding=" << (hp.positional_encoding ? 1 : 0)
      << "\nvocab_size=" << params.vocab_size() << '\n';
  for (const auto& [name, t] : params.named()) {
    out << "param " << name << ' ' << shape_token(t.shape()) << '\n';
    for (std::size_t i = 0; i < t.numel(); ++i) out << (i ? " " : "") << t.data()[i];
    out << '\n';
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::size_t expected_vocab_size) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read " + path.string());
  const std::string src = path.string();
  std::map<std::string, std::string> manifest;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.rfind("param ", 0) == 0) break;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(src, lineno, "expected key=value");
    manifest[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (manifest["khan-checkpoint"] != "1") throw ParseError(src, 1, "not a KHAN checkpoint");
  Checkpoint ck;
  try {
    auto& hp = ck.hp;
    hp.d = std::stoul(manifest.at("d"));
    hp.heads = std::stoul(manifest.at("heads"));
    hp.n = std::stoul(manifest.at("n"));
    hp.l = std::stoul(manifest.at("l"));
    hp.classes = std::stoul(manifest.at("classes"));
    hp.mode = parse_mode(manifest.at("mode"));
    hp.alpha = std::stod(manifest.at("alpha"));
    hp.beta = std::stod(manifest.at("beta"));
    hp.orientation = parse_orientation(manifest.at("injection_orientation"));
    hp.seed = std::stoull(manifest.at("seed"));
    hp.l2_coeff = std::stod(manifest.at("l2_coeff"));
    hp.positional_encoding = manifest.at("positional_encoding") == "1";
  } catch (const std::out_of_range& e) {
    throw ParseError(src, lineno, std::string("checkpoint manifest incomplete: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(src, lineno, std::string("checkpoint manifest malformed: ") + e.what());
  }
  const std::size_t stored_vocab = std::stoul(manifest.at("vocab_size"));
  if (stored_vocab != expected_vocab_size)
    throw UserError("checkpoint " + src + " was trained with vocabulary size " +
                    std::to_string(stored_vocab) + " but the corpus has " +
                    std::to_string(expected_vocab_size));

  ck.params = ModelParams::init(ck.hp, stored_vocab, 0);
  auto named = ck.params.named();
  std::size_t index = 0;
  while (in && line.rfind("param ", 0) == 0) {
    std::istringstream hdr(line.substr(6));
    std::string name, shape;
    hdr >> name >> shape;
    if (index >= named.size() || named[index].first != name)
      throw ParseError(src, lineno, "unexpected parameter '" + name + "'");
    Tensor t = named[index].second;
    if (shape != shape_token(t.shape()))
      throw ParseError(src, lineno, "parameter '" + name + "' has shape " + shape + ", expected " +
                                        shape_str(t.shape()));
    if (!std::getline(in, line)) throw ParseError(src, lineno + 1, "missing values for " + name);
    ++lineno;
    std::istringstream vs(line);
    auto data = t.mutable_data();
    for (auto& v : data)
      if (!(vs >> v)) throw ParseError(src, lineno, "too few values for " + name);
    ++index;
    if (!std::getline(in, line)) break;
    ++lineno;
  }
  if (index != named.size()) throw ParseError(src, lineno, "checkpoint is missing parameters");
  return ck;
}

}  // namespace khan
