// The KHAN classifier: knowledge injection, word-, sentence- and title-level
// multi-head attention, and the softmax prediction head.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "khan/kge.hpp"
#include "khan/tensor.hpp"
#include "khan/text.hpp"

namespace khan {

/// Ablations: W = word level only, WS adds sentence level, WST adds title
/// level, All is WST with knowledge injection.
enum class AblationMode { W, WS, WST, All };
std::string to_string(AblationMode mode);
AblationMode parse_mode(const std::string& text);

/// Which side of each mixing step a factor of 1 keeps.
enum class InjectionOrientation {
  /// e_com = a*e + (1-a)*K: a factor of 1 switches that knowledge off.
  FactorWeighsEmbedding,
  /// e_com = (1-a)*e + a*K, the literal weighting of the injection listing.
  Algorithm1,
};
std::string to_string(InjectionOrientation o);
InjectionOrientation parse_orientation(const std::string& text);

struct HyperParams {
  std::size_t d = 32;
  std::size_t heads = 4;
  std::size_t n = 64;  // max words per sentence
  std::size_t l = 32;  // max sentences per article
  std::size_t classes = 2;
  double alpha = 0.5;  // common-knowledge factor
  double beta = 0.5;   // political-knowledge factor
  AblationMode mode = AblationMode::All;
  double l2_coeff = 0.0;
  InjectionOrientation orientation = InjectionOrientation::FactorWeighsEmbedding;
  bool positional_encoding = false;
  std::uint64_t seed = 0;

  /// Throws UserError naming the offending key.
  void validate() const;
};

/// Q/K/V projections are d×d with head h owning columns [h*d/heads, (h+1)*d/heads);
/// `wo` maps the concatenated heads back to d.
struct AttentionParams {
  std::size_t heads = 1;
  Tensor wq, wk, wv, wo;
};

/// x + relu(x·w1 + b1)·w2 + b2, inner width 4d.
struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

struct ModelParams {
  Tensor word_table;  // N×d
  AttentionParams word_attention, sentence_attention, title_attention;
  FeedForwardParams word_ff, sentence_ff;
  Tensor fuse_w, fuse_b;  // 2d×d, d
  Tensor out_w, out_b;    // d×C, C

  /// Uniform(-1/sqrt(d), 1/sqrt(d)) weights, zero biases.
  static ModelParams init(const HyperParams& hp, std::size_t vocab_size, std::uint64_t seed);

  std::vector<std::pair<std::string, Tensor>> named() const;
  std::size_t vocab_size() const { return word_table.rows(); }
  /// Independent copy of every parameter value.
  ModelParams clone() const;
  void zero_grad();
};

struct KnowledgeBundle {
  KnowledgeEmbeddingTable common, liberal, conservative;

  static KnowledgeBundle zeros(std::size_t rows, std::size_t d);
  /// Every table must have `rows` rows of width `d`.
  void validate(std::size_t rows, std::size_t d) const;
};

/// Injected embeddings for one id sequence. Per table, words without coverage
/// skip that mixing step; the result is Fuse([e_lib || e_con]) + e.
Tensor inject_knowledge(std::span<const std::int32_t> word_ids, const ModelParams& params,
                        const KnowledgeBundle& bundle, double alpha, double beta,
                        InjectionOrientation orientation =
                            InjectionOrientation::FactorWeighsEmbedding);

/// Scaled dot-product attention per head over the unmasked keys, heads
/// concatenated and output-projected.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::span<const std::uint8_t> key_mask, const AttentionParams& p);

Tensor feed_forward(const Tensor& x, const FeedForwardParams& p);

/// Self-attention over one sentence's words followed by the feed-forward
/// block; PAD rows of the output are zero.
Tensor word_level(const Tensor& words, std::span<const std::uint8_t> word_mask,
                  const AttentionParams& attention, const FeedForwardParams& ff);

/// Self-attention over an article's sentence vectors followed by the
/// feed-forward block; masked rows of the output are zero.
Tensor sentence_level(const Tensor& sentences, std::span<const std::uint8_t> sentence_mask,
                      const AttentionParams& attention, const FeedForwardParams& ff);

/// Title-query attention over the sentences. Each sentence row becomes its
/// per-head attention weight times its value projection (output-projected),
/// plus the sentence itself as a residual. Masked rows are zero.
Tensor title_level(const Tensor& title, const Tensor& sentences,
                   std::span<const std::uint8_t> sentence_mask, const AttentionParams& attention);

/// Pooled article representation [d] (before the output layer).
Tensor encode_article_vector(const EncodedArticle& article, const ModelParams& params,
                             const KnowledgeBundle* bundle, const HyperParams& hp);

/// Class probabilities [C].
Tensor predict(const EncodedArticle& article, const ModelParams& params,
               const KnowledgeBundle* bundle, const HyperParams& hp);

/// -log(probs[label]) + l2_coeff * sum of squared parameters.
Tensor loss(const Tensor& probs, int label, const ModelParams& params, double l2_coeff);

/// Mean sentence vector after word-level attention, one per active sentence
/// (no knowledge, no positional encoding). Exposed for invariance checks.
std::vector<Tensor> pooled_sentence_vectors(const EncodedArticle& article,
                                            const ModelParams& params, const HyperParams& hp,
                                            const KnowledgeBundle* bundle = nullptr);

// ---- checkpoints -------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const HyperParams& hp,
                     const ModelParams& params);

struct Checkpoint {
  HyperParams hp;
  ModelParams params;
};

/// Fails with UserError when the stored vocabulary size differs from
/// `expected_vocab_size`.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::size_t expected_vocab_size);

}  // namespace khan
