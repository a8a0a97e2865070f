#include "dapt/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace dapt {

ConfusionMatrix::ConfusionMatrix(int num_classes)
    : n_(num_classes), counts_(static_cast<std::size_t>(num_classes) * static_cast<std::size_t>(num_classes), 0) {
  if (num_classes < 1) throw ValidationError("confusion matrix needs at least one class");
}

ConfusionMatrix::ConfusionMatrix(const std::vector<int>& predictions, const std::vector<int>& labels,
                                 int num_classes)
    : ConfusionMatrix(num_classes) {
  if (predictions.size() != labels.size()) {
    throw ValidationError("predictions and labels differ in length");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) add(labels[i], predictions[i]);
}

void ConfusionMatrix::add(int label, int prediction) {
  if (label < 0 || label >= n_ || prediction < 0 || prediction >= n_) {
    throw ValidationError("class index outside [0, " + std::to_string(n_) + ")");
  }
  ++counts_[static_cast<std::size_t>(label * n_ + prediction)];
  ++total_;
}

std::int64_t ConfusionMatrix::at(int label, int prediction) const {
  return counts_[static_cast<std::size_t>(label * n_ + prediction)];
}

std::int64_t ConfusionMatrix::support(int cls) const {
  std::int64_t s = 0;
  for (int p = 0; p < n_; ++p) s += at(cls, p);
  return s;
}

std::int64_t ConfusionMatrix::predicted_count(int cls) const {
  std::int64_t s = 0;
  for (int t = 0; t < n_; ++t) s += at(t, cls);
  return s;
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm, AverageMode mode,
                                     int positive_class) {
  if (cm.total() == 0) throw ValidationError("cannot compute metrics over zero examples");
  const int n = cm.num_classes();
  if (mode == AverageMode::kBinary && (positive_class < 0 || positive_class >= n)) {
    throw ValidationError("positive class outside the class set");
  }
  MetricsReport r;
  r.mode = mode;
  r.positive_class = positive_class;
  r.num_examples = cm.total();
  std::int64_t correct = 0;
  for (int c = 0; c < n; ++c) correct += cm.at(c, c);
  r.accuracy = static_cast<double>(correct) / static_cast<double>(cm.total());

  r.per_class.resize(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) {
    auto& s = r.per_class[static_cast<std::size_t>(c)];
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto predicted = cm.predicted_count(c);
    s.support = cm.support(c);
    if (predicted == 0) {
      s.precision_undefined = true;
    } else {
      s.precision = tp / static_cast<double>(predicted);
    }
    if (s.support == 0) {
      s.recall_undefined = true;
    } else {
      s.recall = tp / static_cast<double>(s.support);
    }
    const double denom = s.precision + s.recall;
    s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  }

  auto note = [&](int c) {
    const auto& s = r.per_class[static_cast<std::size_t>(c)];
    if (s.precision_undefined) {
      r.zero_division.push_back("class " + std::to_string(c) + ": no predicted examples, precision set to 0");
    }
    if (s.recall_undefined) {
      r.zero_division.push_back("class " + std::to_string(c) + ": no true examples, recall set to 0");
    }
  };

  if (mode == AverageMode::kBinary) {
    const auto& s = r.per_class[static_cast<std::size_t>(positive_class)];
    r.precision = s.precision;
    r.recall = s.recall;
    r.f1 = s.f1;
    note(positive_class);
  } else {
    const auto total = static_cast<double>(cm.total());
    std::int64_t recalled = 0;
    for (int c = 0; c < n; ++c) {
      const auto& s = r.per_class[static_cast<std::size_t>(c)];
      if (s.support == 0) continue;  // zero weight
      const double w = static_cast<double>(s.support) / total;
      r.precision += w * s.precision;
      r.f1 += w * s.f1;
      recalled += cm.at(c, c);
      note(c);
    }
    // sum_c (support_c / N) * (tp_c / support_c), evaluated in integers so it
    // equals accuracy bit for bit.
    r.recall = static_cast<double>(recalled) / total;
  }
  return r;
}

MetricsReport classification_metrics(const std::vector<int>& predictions,
                                     const std::vector<int>& labels, int num_classes,
                                     AverageMode mode, int positive_class) {
  if (predictions.empty()) throw ValidationError("cannot compute metrics over zero examples");
  return metrics_from_confusion(ConfusionMatrix(predictions, labels, num_classes), mode,
                                positive_class);
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode == AverageMode::kBinary ? "binary" : "weighted";
  if (mode == AverageMode::kBinary) j["positive_class"] = positive_class;
  j["num_examples"] = num_examples;
  j["accuracy"] = accuracy;
  j["precision"] = precision;
  j["recall"] = recall;
  j["f1"] = f1;
  j["loss"] = std::isnan(loss) ? nlohmann::json(nullptr) : nlohmann::json(loss);
  auto& pc = j["per_class"] = nlohmann::json::array();
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    const auto& s = per_class[c];
    pc.push_back({{"class", c},
                  {"precision", s.precision},
                  {"recall", s.recall},
                  {"f1", s.f1},
                  {"support", s.support}});
  }
  j["zero_division"] = zero_division;
  return j;
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  char buf[128];
  out << (mode == AverageMode::kBinary ? "binary (positive class " + std::to_string(positive_class) + ")"
                                       : std::string("weighted by class size"))
      << ", n = " << num_examples << '\n';
  std::snprintf(buf, sizeof(buf), "%-10s %-10s %-10s %-10s %-10s\n", "accuracy", "precision",
                "recall", "f1", "loss");
  out << buf;
  std::snprintf(buf, sizeof(buf), "%-10.4f %-10.4f %-10.4f %-10.4f %-10.4f\n", accuracy, precision,
                recall, f1, loss);
  out << buf;
  for (const auto& z : zero_division) out << "note: " << z << '\n';
  return out.str();
}

double mlm_cross_entropy(const Matrix& logits, const std::vector<TokenId>& targets) {
  if (targets.empty()) {
    warn("MLM cross-entropy over an empty target set is defined as 0");
    return 0.0;
  }
  return cross_entropy_with_grad(logits, targets, 1.0, nullptr) / static_cast<double>(targets.size());
}

}  // namespace dapt
