#pragma once

#include <string>
#include <vector>

#include "dapt/model.hpp"

namespace dapt {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-6;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay. Decay applies to weight matrices and
/// embeddings only; biases and layer-norm gains are exempt.
class AdamW {
 public:
  AdamW(const Parameters& like, AdamConfig config);

  void step(Parameters& params, const Gradients& grads, double learning_rate);
  long steps_taken() const { return step_; }

  static bool decays(const std::string& tensor_name);

 private:
  AdamConfig config_;
  Parameters first_moment_;
  Parameters second_moment_;
  long step_ = 0;
};

/// Learning rate for the update with 0-based index `step`: linear warmup over
/// round(warmup_fraction * total_steps) updates, then linear decay reaching
/// zero at total_steps.
double warmup_linear_decay(long step, long total_steps, double warmup_fraction, double peak_lr);

}  // namespace dapt
