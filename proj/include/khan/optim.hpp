#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace khan {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Coupled L2: the gradient becomes g + weight_decay * x.
  double weight_decay = 0.0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update of `params` in place. Throws
/// std::domain_error naming `name` if a gradient is not finite.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, const AdamOptions& options, const std::string& name = "param");

/// Halves (by `factor`) the learning rate once the monitored loss has failed
/// to strictly improve on its best value for `patience` reports in a row.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, std::size_t patience, double factor);

  /// Records one epoch loss and returns the learning rate for the next epoch.
  double step(double loss);

  double lr() const { return lr_; }
  double best() const { return best_; }
  std::size_t bad_epochs() const { return bad_epochs_; }

 private:
  double lr_;
  std::size_t patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

}  // namespace khan
