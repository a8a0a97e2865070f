#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dapt/model.hpp"

namespace dapt::testing {

/// Summed MLM cross-entropy at `positions` plus classification cross-entropy
/// of the [CLS] row. Fills `grads` when non-null.
inline double joint_loss(const std::vector<TokenId>& ids, const std::vector<int>& positions,
                         const std::vector<TokenId>& targets, int label, const Parameters& params,
                         const ModelConfig& config, Gradients* grads) {
  ForwardTape tape;
  auto out = forward_encoder(ids, params, config, grads ? &tape : nullptr);
  Matrix mlm = mlm_logits(out, positions, params, config);
  Matrix d_mlm;
  double loss = cross_entropy_with_grad(mlm, targets, 1.0, grads ? &d_mlm : nullptr);
  Matrix cls = cls_logits(out, params, config);
  Matrix d_cls;
  loss += cross_entropy_with_grad(cls, {label}, 1.0, grads ? &d_cls : nullptr);
  if (grads) {
    Matrix dh = mlm_backward(out, positions, d_mlm, params, config, *grads);
    RowVector dc = d_cls.row(0);
    dh += cls_backward(out, dc, params, config, *grads);
    backward(tape, dh, params, config, *grads);
  }
  return loss;
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst;
  std::size_t entries_checked = 0;
};

/// Central differences on every `stride`-th entry of every tensor.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
inline GradCheckResult gradient_check(const std::vector<TokenId>& ids,
                                      const std::vector<int>& positions,
                                      const std::vector<TokenId>& targets, int label,
                                      const Parameters& params, const ModelConfig& config,
                                      double h, std::size_t stride = 1) {
  Gradients analytic = Parameters::zeros_like(params);
  joint_loss(ids, positions, targets, label, params, config, &analytic);

  std::vector<std::pair<std::string, const Matrix*>> grad_list;
  analytic.for_each([&](const std::string& name, const Matrix& m) { grad_list.emplace_back(name, &m); });

  GradCheckResult result;
  Parameters probe = params;
  std::size_t tensor = 0;
  probe.for_each([&](const std::string& name, Matrix& m) {
    const Matrix& g = *grad_list[tensor++].second;
    for (Eigen::Index i = 0; i < m.size(); i += static_cast<Eigen::Index>(stride)) {
      const double saved = m.data()[i];
      m.data()[i] = saved + h;
      const double up = joint_loss(ids, positions, targets, label, probe, config, nullptr);
      m.data()[i] = saved - h;
      const double down = joint_loss(ids, positions, targets, label, probe, config, nullptr);
      m.data()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = g.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
      ++result.entries_checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  });
  return result;
}

}  // namespace dapt::testing
