#include "khan/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace khan {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr, const AdamOptions& options, const std::string& name) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: " + name + " has " + std::to_string(params.size()) +
                                " values but " + std::to_string(grads.size()) + " gradients");
  for (double g : grads)
    if (!std::isfinite(g)) throw std::domain_error("adam_step: non-finite gradient in " + name);
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  } else if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match " + name);
  }
  ++state.step;
  const double b1 = options.beta1, b2 = options.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + options.weight_decay * params[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + options.eps);
  }
}

PlateauScheduler::PlateauScheduler(double lr, std::size_t patience, double factor)
    : lr_(lr), patience_(patience), factor_(factor) {
  if (patience == 0) throw std::invalid_argument("plateau scheduler: patience must be >= 1");
  if (!(factor > 0.0 && factor < 1.0))
    throw std::invalid_argument("plateau scheduler: factor must lie in (0, 1)");
}

double PlateauScheduler::step(double loss) {
  if (!std::isfinite(loss)) throw std::domain_error("plateau scheduler: non-finite loss");
  if (loss < best_) {
    best_ = loss;
    bad_epochs_ = 0;
  } else if (++bad_epochs_ >= patience_) {
    lr_ *= factor_;
    bad_epochs_ = 0;
  }
  return lr_;
}

}  // namespace khan
