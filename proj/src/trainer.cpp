#include "khan/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "khan/errors.hpp"
#include "khan/rng.hpp"

namespace khan {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw UserError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw UserError("weight_decay must be non-negative");
  if (batch_size == 0) throw UserError("batch_size must be >= 1");
  if (patience == 0) throw UserError("patience must be >= 1");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw UserError("lr_factor must lie in (0, 1)");
  hp.validate();
}

std::string EpochReport::to_json() const {
  return nlohmann::json{{"epoch", epoch}, {"loss", loss}, {"val_acc", val_acc}, {"lr", lr},
                        {"secs", secs}}
      .dump();
}

Tensor batch_loss(std::span<const EncodedArticle* const> batch, const ModelParams& params,
                  const KnowledgeBundle* bundle, const HyperParams& hp, double l2_coeff) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  Tensor total;
  for (const auto* a : batch) {
    Tensor ce = neg_log_pick(predict(*a, params, bundle, hp), static_cast<std::size_t>(a->label));
    total = total.defined() ? add(total, ce) : ce;
  }
  Tensor mean = scale(total, 1.0 / static_cast<double>(batch.size()));
  if (l2_coeff != 0.0)
    for (const auto& [name, t] : params.named()) mean = add(mean, scale(sum_squares(t), l2_coeff));
  return mean;
}

TrainResult train(std::span<const EncodedArticle> train_set, std::size_t vocab_size,
                  const KnowledgeBundle* bundle, const TrainConfig& cfg,
                  std::span<const EncodedArticle> validation, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_set.empty()) throw UserError("train: empty training set");
  const HyperParams& hp = cfg.hp;
  if (bundle) bundle->validate(vocab_size, hp.d);
  for (const auto& a : train_set)
    if (a.label < 0 || static_cast<std::size_t>(a.label) >= hp.classes)
      throw UserError("train: label " + std::to_string(a.label) + " outside [0, " +
                      std::to_string(hp.classes) + ")");

  TrainResult result{ModelParams::init(hp, vocab_size, cfg.seed), {}};
  auto named = result.params.named();
  std::vector<AdamState> states(named.size());
  AdamOptions adam;
  adam.weight_decay = cfg.effective_weight_decay();
  const double l2 = cfg.effective_l2();
  PlateauScheduler scheduler(cfg.lr, cfg.patience, cfg.lr_factor);

  Rng rng(cfg.seed ^ 0xa5a5a5a5a5a5a5a5ULL);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<const EncodedArticle*> batch;
  const auto eval_set = validation.empty() ? train_set : validation;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = scheduler.lr();
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i)
        batch.push_back(&train_set[order[i]]);
      result.params.zero_grad();
      const Tensor loss_value = batch_loss(batch, result.params, bundle, hp, l2);
      total += loss_value.item() * static_cast<double>(batch.size());
      backward(loss_value);
      for (std::size_t p = 0; p < named.size(); ++p) {
        auto& t = named[p].second;
        if (!t.has_grad()) continue;  // not on this configuration's graph
        adam_step(t.mutable_data(), t.grad(), states[p], lr, adam, named[p].first);
      }
    }
    EpochReport report;
    report.epoch = epoch;
    report.loss = total / static_cast<double>(order.size());
    report.lr = lr;
    report.val_acc = evaluate_accuracy(result.params, bundle, eval_set, hp);
    report.secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    scheduler.step(report.loss);
    result.reports.push_back(report);
    if (on_epoch) on_epoch(report);
  }
  return result;
}

int predict_class(const EncodedArticle& article, const ModelParams& params,
                  const KnowledgeBundle* bundle, const HyperParams& hp) {
  NoGradGuard no_grad;
  const Tensor probs = predict(article, params, bundle, hp);
  std::size_t best = 0;
  for (std::size_t c = 1; c < probs.numel(); ++c)
    if (probs.data()[c] > probs.data()[best]) best = c;
  return static_cast<int>(best);
}

double evaluate_accuracy(const ModelParams& params, const KnowledgeBundle* bundle,
                         std::span<const EncodedArticle> dataset, const HyperParams& hp) {
  if (dataset.empty()) throw UserError("evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (const auto& a : dataset) correct += predict_class(a, params, bundle, hp) == a.label;
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

std::pair<double, double> mean_and_stddev(std::span<const double> values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::string CvReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "fold,accuracy\n";
  for (std::size_t i = 0; i < fold_accuracy.size(); ++i) os << i << ',' << fold_accuracy[i] << '\n';
  os << "mean," << mean << "\nstd," << stddev << '\n';
  return os.str();
}

namespace {

template <typename Fn>
void run_jobs(std::size_t count, std::size_t jobs, Fn&& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += jobs) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<EncodedArticle> gather(std::span<const EncodedArticle> corpus,
                                   const std::vector<std::size_t>& idx) {
  std::vector<EncodedArticle> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(corpus[i]);
  return out;
}

}  // namespace

CvReport cross_validate(std::span<const EncodedArticle> corpus, std::size_t vocab_size,
                        const KnowledgeBundle* bundle, std::size_t k, const TrainConfig& cfg,
                        std::size_t jobs) {
  if (k > corpus.size())
    throw UserError("cross_validate: k=" + std::to_string(k) + " exceeds corpus size " +
                    std::to_string(corpus.size()));
  CvReport report;
  report.folds = make_folds(corpus.size(), k, cfg.seed);
  report.fold_accuracy.assign(k, 0.0);
  run_jobs(k, jobs, [&](std::size_t f) {
    std::vector<std::uint8_t> held(corpus.size(), 0);
    for (auto i : report.folds[f]) held[i] = 1;
    std::vector<std::size_t> train_idx;
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (!held[i]) train_idx.push_back(i);
    const auto train_set = gather(corpus, train_idx);
    const auto test_set = gather(corpus, report.folds[f]);
    const auto trained = train(train_set, vocab_size, bundle, cfg, test_set);
    report.fold_accuracy[f] = evaluate_accuracy(trained.params, bundle, test_set, cfg.hp);
  });
  std::tie(report.mean, report.stddev) = mean_and_stddev(report.fold_accuracy);
  return report;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_indices(
    std::size_t size, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw UserError("validation_fraction must lie in (0, 1)");
  if (size < 2) throw UserError("holdout split needs at least 2 articles");
  std::vector<std::size_t> order(size);
  for (std::size_t i = 0; i < size; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  auto held = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(size)));
  held = std::clamp<std::size_t>(held, 1, size - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

namespace {

// Grid values print as typed: 0.4, not 0.40000000000000002.
std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

}  // namespace

std::string SweepResult::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "alpha,beta,accuracy\n";
  for (std::size_t i = 0; i < alphas.size(); ++i)
    for (std::size_t j = 0; j < betas.size(); ++j)
      os << shortest(alphas[i]) << ',' << shortest(betas[j]) << ',' << accuracy[i][j] << '\n';
  return os.str();
}

std::tuple<double, double, double> SweepResult::best() const {
  std::tuple<double, double, double> out{alphas.at(0), betas.at(0), accuracy.at(0).at(0)};
  for (std::size_t i = 0; i < alphas.size(); ++i)
    for (std::size_t j = 0; j < betas.size(); ++j)
      if (accuracy[i][j] > std::get<2>(out)) out = {alphas[i], betas[j], accuracy[i][j]};
  return out;
}

SweepResult sweep_alpha_beta(std::span<const EncodedArticle> corpus, std::size_t vocab_size,
                             const KnowledgeBundle* bundle, const TrainConfig& cfg,
                             const std::vector<double>& alphas, const std::vector<double>& betas,
                             const SweepProtocol& protocol) {
  if (alphas.empty() || betas.empty()) throw UserError("sweep: empty grid");
  for (double v : alphas)
    if (!(v >= 0.0 && v <= 1.0)) throw UserError("sweep: alpha grid value outside [0, 1]");
  for (double v : betas)
    if (!(v >= 0.0 && v <= 1.0)) throw UserError("sweep: beta grid value outside [0, 1]");
  SweepResult result{alphas, betas,
                     std::vector<std::vector<double>>(alphas.size(),
                                                      std::vector<double>(betas.size(), 0.0))};
  std::sort(result.alphas.begin(), result.alphas.end());
  std::sort(result.betas.begin(), result.betas.end());

  std::vector<EncodedArticle> train_set, val_set;
  if (protocol.folds < 2) {
    auto [tr, va] = holdout_indices(corpus.size(), protocol.validation_fraction, cfg.seed);
    train_set = gather(corpus, tr);
    val_set = gather(corpus, va);
  }
  const std::size_t cells = result.alphas.size() * result.betas.size();
  // Cells parallelize in the single-split protocol; folds do under cross-validation.
  const std::size_t cell_jobs = protocol.folds < 2 ? protocol.jobs : 1;
  run_jobs(cells, cell_jobs, [&](std::size_t c) {
    const std::size_t i = c / result.betas.size(), j = c % result.betas.size();
    TrainConfig cell = cfg;
    cell.hp.alpha = result.alphas[i];
    cell.hp.beta = result.betas[j];
    if (protocol.folds >= 2) {
      result.accuracy[i][j] =
          cross_validate(corpus, vocab_size, bundle, protocol.folds, cell, protocol.jobs).mean;
    } else {
      const auto trained = train(train_set, vocab_size, bundle, cell, val_set);
      result.accuracy[i][j] = evaluate_accuracy(trained.params, bundle, val_set, cell.hp);
    }
  });
  return result;
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("welch_t_test: each sample needs at least 2 values");
  const auto [ma, sa] = mean_and_stddev(a);
  const auto [mb, sb] = mean_and_stddev(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = sa * sa / na, vb = sb * sb / nb;
  WelchResult out;
  if (va + vb == 0.0) {
    if (ma == mb) return {0.0, 1.0, na + nb - 2.0};
    return {ma > mb ? INFINITY : -INFINITY, 0.0, na + nb - 2.0};
  }
  out.t = (ma - mb) / std::sqrt(va + vb);
  out.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  const boost::math::students_t_distribution<double> dist(out.df);
  out.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  out.p = std::min(1.0, out.p);
  return out;
}

}  // namespace khan
