#include "dapt/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace dapt {

AdamW::AdamW(const Parameters& like, AdamConfig config)
    : config_(config),
      first_moment_(Parameters::zeros_like(like)),
      second_moment_(Parameters::zeros_like(like)) {}

bool AdamW::decays(const std::string& name) {
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return !(ends_with("bias") || ends_with("gain"));
}

void AdamW::step(Parameters& params, const Gradients& grads, double learning_rate) {
  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));

  std::vector<const Matrix*> g;
  std::vector<Matrix*> m, v;
  grads.for_each([&](const std::string&, const Matrix& x) { g.push_back(&x); });
  first_moment_.for_each([&](const std::string&, Matrix& x) { m.push_back(&x); });
  second_moment_.for_each([&](const std::string&, Matrix& x) { v.push_back(&x); });

  std::size_t i = 0;
  params.for_each([&](const std::string& name, Matrix& p) {
    if (i >= g.size() || g[i]->size() != p.size()) {
      throw ValidationError("optimizer state does not match parameter " + name);
    }
    *m[i] = config_.beta1 * *m[i] + (1.0 - config_.beta1) * *g[i];
    *v[i] = config_.beta2 * *v[i] + (1.0 - config_.beta2) * g[i]->cwiseProduct(*g[i]);
    if (decays(name) && config_.weight_decay > 0.0) {
      p *= 1.0 - learning_rate * config_.weight_decay;
    }
    p.array() -= learning_rate * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + config_.epsilon);
    ++i;
  });
}

double warmup_linear_decay(long step, long total_steps, double warmup_fraction, double peak_lr) {
  if (total_steps <= 0) return 0.0;
  const long warmup = std::lround(warmup_fraction * static_cast<double>(total_steps));
  if (step < warmup) {
    return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  }
  const long remaining = total_steps - step;
  if (remaining <= 0) return 0.0;
  return peak_lr * static_cast<double>(remaining) / static_cast<double>(total_steps - warmup);
}

}  // namespace dapt
