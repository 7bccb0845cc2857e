// pdaf/optim.hpp
//
// Adam with decoupled weight decay. Bias-corrected moments, one slot per
// registered parameter; a warmup/decay schedule enters through the per-step
// learning-rate multiplier.

// Copyright 2026  PDAF Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "pdaf/tensor.hpp"

namespace pdaf {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled: p -= lr_eff * wd * p
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.lr <= 0.0 || cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 ||
        cfg_.beta2 >= 1.0 || cfg_.eps <= 0.0 || cfg_.weight_decay < 0.0) {
      throw ValidationError("Adam: invalid hyperparameters");
    }
  }

  void add_param(const Tensor &p) {
    if (!p.requires_grad()) throw ValidationError("Adam: parameter does not require grad");
    params_.push_back(p);
    slots_.push_back(Slot{std::vector<double>(static_cast<size_t>(p.numel()), 0.0),
                          std::vector<double>(static_cast<size_t>(p.numel()), 0.0)});
  }

  size_t num_params() const { return params_.size(); }

  void zero_grad() {
    for (Tensor &p : params_) p.zero_grad();
  }

  /// One update over all registered parameters. A parameter whose grad was
  /// never touched this step counts as zero gradient (its moments still decay
  /// and weight decay still applies).
  void step(double lr_multiplier = 1.0) {
    if (!(lr_multiplier >= 0.0) || !std::isfinite(lr_multiplier)) {
      throw ValidationError("Adam::step: bad lr multiplier");
    }
    ++t_;
    const double lr_eff = cfg_.lr * lr_multiplier;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t k = 0; k < params_.size(); ++k) {
      Tensor &p = params_[k];
      Slot &s = slots_[k];
      if (s.m.size() != static_cast<size_t>(p.numel())) {
        throw DimensionError("Adam::step: parameter shape changed since registration");
      }
      const std::vector<double> *g = p.has_grad() ? &p.grad() : nullptr;
      auto &val = p.mutable_data();
      for (size_t i = 0; i < val.size(); ++i) {
        const double gi = g ? (*g)[i] : 0.0;
        if (!std::isfinite(gi)) throw NumericError("Adam::step: non-finite gradient");
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        val[i] -= lr_eff * mhat / (std::sqrt(vhat) + cfg_.eps);
        if (cfg_.weight_decay > 0.0) val[i] -= lr_eff * cfg_.weight_decay * val[i];
      }
    }
  }

  int64_t step_count() const { return t_; }
  const AdamConfig &config() const { return cfg_; }

  /// Moment vectors in registration order, for checkpointing.
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };
  const std::vector<Slot> &slots() const { return slots_; }
  std::vector<Slot> &mutable_slots() { return slots_; }
  void set_step_count(int64_t t) {
    if (t < 0) throw ValidationError("Adam: negative step count");
    t_ = t;
  }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> params_;
  std::vector<Slot> slots_;
  int64_t t_ = 0;
};

/// Learning-rate multiplier for linear warmup followed by halving every
/// `halve_every` epochs. `step` is 1-based (call after Adam::step ordering is
/// irrelevant; what matters is consistency).
inline double lr_schedule(int64_t step, int64_t warmup_steps, int64_t epoch, int64_t halve_every) {
  double warm = 1.0;
  if (warmup_steps > 0) {
    warm = std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
  }
  double decay = 1.0;
  if (halve_every > 0 && epoch > 0) {
    decay = std::pow(0.5, static_cast<double>(epoch / halve_every));
  }
  return warm * decay;
}

}  // namespace pdaf
