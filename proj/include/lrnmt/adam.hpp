#pragma once

#include <map>

#include "lrnmt/layers.hpp"

namespace lrnmt {

// Inverse-square-root schedule with linear warmup:
// base * d^-0.5 * min(step^-0.5, step * warmup^-1.5). Continuous at
// step == warmup.
inline double warmup_inv_sqrt_lr(std::int64_t step, std::int64_t model_dim, std::int64_t warmup,
                                 double base = 1.0) {
  if (step < 1) throw ContractError("lr_schedule: step must be >= 1, got " + std::to_string(step));
  if (model_dim < 1 || warmup < 1) throw ContractError("lr_schedule: bad model_dim/warmup");
  double s = static_cast<double>(step);
  double w = static_cast<double>(warmup);
  return base / std::sqrt(static_cast<double>(model_dim)) *
         std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Adam with bias correction. Moment buffers are keyed by parameter name so
// optimizer state survives checkpointing.
template <typename T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamOptions opts) : opts_(opts) {}

  const AdamOptions& options() const { return opts_; }
  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }

  void zero_grad(std::vector<ParamRef<T>>& params) {
    for (auto& p : params) {
      p.tensor->ensure_grad();
      p.tensor->zero_grad();
    }
  }

  void step(std::vector<ParamRef<T>>& params, double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (auto& p : params) {
      if (!p.tensor->has_grad()) continue;
      auto& grad = p.tensor->grad();
      auto& m = moment1_[p.name];
      auto& v = moment2_[p.name];
      if (m.size() != grad.size()) m.assign(grad.size(), 0.0);
      if (v.size() != grad.size()) v.assign(grad.size(), 0.0);
      T* w = p.tensor->data();
      for (std::size_t i = 0; i < grad.size(); ++i) {
        double g = static_cast<double>(grad[i]);
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
        v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g * g;
        double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opts_.eps);
        w[i] = static_cast<T>(static_cast<double>(w[i]) - update);
      }
    }
  }

  // Moment buffers, for checkpointing.
  std::map<std::string, std::vector<double>>& moment1() { return moment1_; }
  std::map<std::string, std::vector<double>>& moment2() { return moment2_; }

 private:
  AdamOptions opts_;
  std::int64_t t_ = 0;
  std::map<std::string, std::vector<double>> moment1_, moment2_;
};

// Scales gradients so their global L2 norm does not exceed max_norm.
// Returns the pre-clip norm.
template <typename T>
double clip_global_norm(std::vector<ParamRef<T>>& params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.tensor->has_grad()) continue;
    for (T g : p.tensor->grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (auto& p : params) {
      if (!p.tensor->has_grad()) continue;
      for (auto& g : p.tensor->grad()) g = static_cast<T>(static_cast<double>(g) * s);
    }
  }
  return norm;
}

}  // namespace lrnmt
