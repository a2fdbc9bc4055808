#pragma once

// Training machinery: Adam, joint-norm gradient clipping, step-decay learning
// rate schedule and perplexity-based early stopping.

#include <cstdint>
#include <limits>
#include <vector>

#include "s2sp/params.hpp"

namespace s2sp {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(const ParamStore& params, AdamConfig cfg = {});

  // One bias-corrected update from the parameters' current grads.
  // Increments the shared step counter exactly once.
  void step(const ParamStore& params, double lr);

  int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  // Exposed for checkpointing.
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  void set_steps(int64_t t) { t_ = t; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// Scales all grads by min(1, max_norm / ||g||_2) where the norm is joint over
// every parameter. Returns the scale. NaN grads fail fast.
double clip_global_norm(const ParamStore& params, double max_norm);

// No decay before warm_steps, then one factor multiplication per
// decay_every interval (the first one lands exactly at step == warm_steps).
struct LrSchedule {
  double base_lr = 1e-3;
  double decay_factor = 0.8;
  int64_t decay_every = 50000;
  int64_t warm_steps = 400000;
};

double lr_at(const LrSchedule& schedule, int64_t step);

// Tracks best validation perplexity; stops after `patience` consecutive
// non-improving evaluations. The caller snapshots the checkpoint whenever
// update() reports an improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  struct Decision {
    bool improved = false;
    bool stop = false;
  };

  Decision update(double valid_ppl) {
    Decision d;
    ++evals_;
    if (valid_ppl < best_) {
      best_ = valid_ppl;
      best_eval_ = evals_;
      non_improving_ = 0;
      d.improved = true;
    } else {
      ++non_improving_;
      d.stop = non_improving_ >= patience_;
    }
    return d;
  }

  double best() const { return best_; }
  int best_eval() const { return best_eval_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_eval_ = 0;
  int evals_ = 0;
  int non_improving_ = 0;
};

}  // namespace s2sp
