// Training and evaluation harness: mini-batch Adam with plateau scheduling,
// accuracy, k-fold cross-validation, the alpha/beta sweep and Welch's t-test.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "khan/model.hpp"
#include "khan/optim.hpp"

namespace khan {

/// Which of the two L2 paths is live. Only one is ever applied.
enum class Regularization {
  OptimizerDecay,  // Adam weight_decay, loss l2 term off
  LossPenalty,     // loss carries hp.l2_coeff, optimizer decay off
};

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 5e-2;
  std::size_t batch_size = 16;
  std::size_t epochs = 50;
  std::size_t patience = 5;
  double lr_factor = 0.5;
  std::uint64_t seed = 0;
  Regularization regularization = Regularization::OptimizerDecay;
  HyperParams hp;

  void validate() const;
  double effective_weight_decay() const {
    return regularization == Regularization::OptimizerDecay ? weight_decay : 0.0;
  }
  double effective_l2() const {
    return regularization == Regularization::LossPenalty ? hp.l2_coeff : 0.0;
  }
};

struct EpochReport {
  std::size_t epoch = 0;
  double loss = 0.0;     // mean pre-update training loss over the epoch
  double val_acc = 0.0;  // on the validation set, or the training set if none given
  double lr = 0.0;       // rate used during the epoch
  double secs = 0.0;

  /// {"epoch":…,"loss":…,"val_acc":…,"lr":…,"secs":…}
  std::string to_json() const;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochReport> reports;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Mean cross-entropy of a batch plus the configured L2 term, on the tape.
Tensor batch_loss(std::span<const EncodedArticle* const> batch, const ModelParams& params,
                  const KnowledgeBundle* bundle, const HyperParams& hp, double l2_coeff);

TrainResult train(std::span<const EncodedArticle> train_set, std::size_t vocab_size,
                  const KnowledgeBundle* bundle, const TrainConfig& cfg,
                  std::span<const EncodedArticle> validation = {},
                  const EpochCallback& on_epoch = {});

/// Predicted class: argmax with ties going to the lowest class id.
int predict_class(const EncodedArticle& article, const ModelParams& params,
                  const KnowledgeBundle* bundle, const HyperParams& hp);

double evaluate_accuracy(const ModelParams& params, const KnowledgeBundle* bundle,
                         std::span<const EncodedArticle> dataset, const HyperParams& hp);

struct CvReport {
  std::vector<std::vector<std::size_t>> folds;
  std::vector<double> fold_accuracy;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation

  std::string to_csv() const;
};

/// Arithmetic mean and sample standard deviation.
std::pair<double, double> mean_and_stddev(std::span<const double> values);

CvReport cross_validate(std::span<const EncodedArticle> corpus, std::size_t vocab_size,
                        const KnowledgeBundle* bundle, std::size_t k, const TrainConfig& cfg,
                        std::size_t jobs = 1);

/// Deterministic (train, validation) index split with round(fraction*size) held out.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_indices(
    std::size_t size, double fraction, std::uint64_t seed);

struct SweepProtocol {
  std::size_t folds = 0;            // >= 2 runs cross-validation per cell
  double validation_fraction = 0.2; // used when folds < 2
  std::size_t jobs = 1;
};

struct SweepResult {
  std::vector<double> alphas, betas;
  std::vector<std::vector<double>> accuracy;  // [alpha index][beta index]

  std::string to_csv() const;
  /// (alpha, beta, accuracy) of the best cell; the first maximum wins.
  std::tuple<double, double, double> best() const;
};

inline const std::vector<double> kDefaultSweepGrid = {0.2, 0.4, 0.6, 0.8, 1.0};

SweepResult sweep_alpha_beta(std::span<const EncodedArticle> corpus, std::size_t vocab_size,
                             const KnowledgeBundle* bundle, const TrainConfig& cfg,
                             const std::vector<double>& alphas = kDefaultSweepGrid,
                             const std::vector<double>& betas = kDefaultSweepGrid,
                             const SweepProtocol& protocol = {});

struct WelchResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
};

/// Two-sided Welch test. Both variances zero: p = 1 if the means agree, else 0.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace khan
