#include <cmath>

#include "dtsda/autodiff.hpp"
#include "dtsda/error.hpp"

namespace dtsda::ad {

Optimizer::Optimizer(std::vector<Parameter*> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (Parameter* p : params_) {
    first_moment_.emplace_back(p->value.size(), 0.0);
    second_moment_.emplace_back(p->value.size(), 0.0);
  }
}

void Optimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Optimizer::step() {
  for (Parameter* p : params_) {
    if (p->requires_grad && !p->has_grad) {
      throw NumericError("optimizer step: missing gradient for " + p->name);
    }
  }
  ++step_;
  const double lr = config_.learning_rate;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));

  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (!p.requires_grad) continue;
    auto& w = p.value.data;
    const auto& g = p.grad.data;
    if (config_.plain_sgd) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
    } else {
      auto& m = first_moment_[k];
      auto& v = second_moment_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bias1;
        const double vhat = v[i] / bias2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
      }
    }
    if (!p.value.all_finite()) throw NumericError("optimizer step produced non-finite " + p.name);
  }
}

}  // namespace dtsda::ad
