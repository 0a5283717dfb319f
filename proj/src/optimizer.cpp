#include "nslmt/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace nslmt {

AdamW::AdamW(const std::vector<NamedParameter>& params, AdamWConfig config) : config_(config) {
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void AdamW::step(std::vector<NamedParameter>& params, double lr) {
  if (params.size() != m_.size()) throw std::invalid_argument("AdamW: parameter list changed since construction");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double decay = 1.0 - lr * config_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].tensor;
    if (p.numel() != m_[i].size()) throw std::invalid_argument("AdamW: moment shape mismatch for " + params[i].name);
    auto& m = m_[i];
    auto& v = v_[i];
    const bool has_grad = !p.grad.empty();
    for (std::size_t j = 0; j < p.numel(); ++j) {
      const double g = has_grad ? p.grad[j] : 0.0;
      p.data[j] *= decay;
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p.data[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

double global_grad_norm(const std::vector<NamedParameter>& params) {
  double s = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad) s += g * g;
  return std::sqrt(s);
}

double clip_gradients(std::vector<NamedParameter>& params, double clip_norm) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_gradients: clip_norm must be positive");
  const double g = global_grad_norm(params);
  if (!(g > clip_norm)) return 1.0;
  const double s = clip_norm / g;
  for (auto& p : params)
    for (auto& x : p.tensor.grad) x *= s;
  return s;
}

double lr_at(long long step, double learning_rate, long long warmup_steps) {
  if (step < 1) throw std::invalid_argument("lr_at: step must be >= 1");
  if (warmup_steps <= 0 || step >= warmup_steps) return learning_rate;
  return learning_rate * (static_cast<double>(step) / static_cast<double>(warmup_steps));
}

}  // namespace nslmt
