#include "s2sp/optim.hpp"

#include <cmath>

namespace s2sp {

Adam::Adam(const ParamStore& params, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& [name, t] : params.items()) {
    m_.emplace_back(t->data.size(), 0.0f);
    v_.emplace_back(t->data.size(), 0.0f);
  }
}

void Adam::step(const ParamStore& params, double lr) {
  if (params.size() != m_.size()) throw ContractError("Adam: parameter count changed");
  ++t_;
  const float b1 = static_cast<float>(cfg_.beta1);
  const float b2 = static_cast<float>(cfg_.beta2);
  const float corr1 = static_cast<float>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
  const float corr2 = static_cast<float>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
  const float eps = static_cast<float>(cfg_.eps);
  const float step_size = static_cast<float>(lr);

  for (size_t i = 0; i < params.items().size(); ++i) {
    auto& tensor = params.items()[i].second;
    if (tensor->data.size() != m_[i].size())
      throw ShapeError("Adam: moment shape mismatch for " + params.items()[i].first);
    if (tensor->grad.empty()) tensor->ensure_grad();
    float* m = m_[i].data();
    float* v = v_[i].data();
    float* w = tensor->data.data();
    const float* g = tensor->grad.data();
    for (size_t j = 0; j < m_[i].size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float mhat = m[j] / corr1;
      const float vhat = v[j] / corr2;
      w[j] -= step_size * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double clip_global_norm(const ParamStore& params, double max_norm) {
  if (max_norm <= 0) throw ContractError("clip_global_norm: max_norm must be positive");
  double sq = 0;
  for (const auto& [name, t] : params.items()) {
    for (float g : t->grad) {
      if (std::isnan(g)) throw NumericError("clip_global_norm: NaN gradient in " + name);
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return 1.0;
  const double scale = max_norm / norm;
  const float fscale = static_cast<float>(scale);
  for (const auto& [name, t] : params.items())
    for (float& g : t->grad) g *= fscale;
  return scale;
}

double lr_at(const LrSchedule& schedule, int64_t step) {
  if (step < 0) throw ContractError("lr_at: negative step");
  if (schedule.decay_factor <= 0 || schedule.decay_factor > 1)
    throw ContractError("lr_at: decay factor must be in (0,1]");
  if (step < schedule.warm_steps || schedule.decay_every <= 0) return schedule.base_lr;
  const int64_t decays = (step - schedule.warm_steps) / schedule.decay_every + 1;
  return schedule.base_lr * std::pow(schedule.decay_factor, static_cast<double>(decays));
}

}  // namespace s2sp
