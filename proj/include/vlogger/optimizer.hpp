#pragma once

#include <string>
#include <vector>

#include "vlogger/denoiser.hpp"

namespace vlogger {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // Parameters whose name starts with any of these prefixes are not updated
  // (collapses the paper-style two-stage schedule into one freeze mask).
  std::vector<std::string> freeze_prefixes;
};

class AdamW {
 public:
  AdamW() = default;
  AdamW(AdamWConfig cfg, const ParamStore& store) : cfg_(std::move(cfg)) {
    for (const auto& p : store.params()) {
      m_.push_back(Tensor::zeros(p.var.value().shape));
      v_.push_back(Tensor::zeros(p.var.value().shape));
    }
  }

  const AdamWConfig& config() const { return cfg_; }
  std::int64_t steps_taken() const { return t_; }

  // Learning-rate schedules (warmup, decay) adjust this between steps;
  // moments and step count are untouched.
  void set_learning_rate(double lr) { cfg_.lr = lr; }

  bool frozen(const std::string& name) const {
    for (const auto& pre : cfg_.freeze_prefixes)
      if (name.rfind(pre, 0) == 0) return true;
    return false;
  }

  void step(ParamStore& store) {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    auto& params = store.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (frozen(params[i].name)) continue;
      Tensor& w = params[i].var.value();
      const Tensor& g = params[i].var.grad();
      if (g.size() != w.size()) continue;  // no gradient reached this param
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      m.data = cfg_.beta1 * m.data + (1.0 - cfg_.beta1) * g.data;
      v.data = cfg_.beta2 * v.data + (1.0 - cfg_.beta2) * g.data.square();
      // decoupled weight decay
      if (cfg_.weight_decay != 0.0)
        w.data -= cfg_.lr * cfg_.weight_decay * w.data;
      w.data -= cfg_.lr * (m.data / bc1) / ((v.data / bc2).sqrt() + cfg_.eps);
    }
  }

  // Moment arrays exposed for checkpointing, aligned with the store order.
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }

 private:
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace vlogger
