#pragma once

#include <vector>

#include "nslmt/model.hpp"

namespace nslmt {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled-weight-decay Adam. Moments are stored per parameter in model order.
class AdamW {
 public:
  AdamW() = default;
  AdamW(const std::vector<NamedParameter>& params, AdamWConfig config);

  /// Applies one update with learning rate lr using the gradients in params.
  void step(std::vector<NamedParameter>& params, double lr);

  const AdamWConfig& config() const { return config_; }
  long long steps() const { return t_; }
  std::vector<std::vector<double>>& first_moments() { return m_; }
  std::vector<std::vector<double>>& second_moments() { return v_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void set_steps(long long t) { t_ = t; }

 private:
  AdamWConfig config_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

double global_grad_norm(const std::vector<NamedParameter>& params);

/// Scales all gradients by clip_norm / g when the global norm g exceeds
/// clip_norm. Returns the applied factor (1 when unchanged).
double clip_gradients(std::vector<NamedParameter>& params, double clip_norm);

/// learning_rate * min(1, step / warmup_steps); constant afterwards.
double lr_at(long long step, double learning_rate, long long warmup_steps);

}  // namespace nslmt
