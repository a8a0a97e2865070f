#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "dapt/model.hpp"

namespace dapt {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);
  ConfusionMatrix(const std::vector<int>& predictions, const std::vector<int>& labels,
                  int num_classes);

  void add(int label, int prediction);
  std::int64_t at(int label, int prediction) const;
  int num_classes() const { return n_; }
  std::int64_t total() const { return total_; }
  std::int64_t support(int cls) const;          // row sum
  std::int64_t predicted_count(int cls) const;  // column sum

 private:
  int n_;
  std::vector<std::int64_t> counts_;
  std::int64_t total_ = 0;
};

enum class AverageMode { kWeighted, kBinary };

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  bool precision_undefined = false;  // no predicted positives
  bool recall_undefined = false;     // no true positives in data
};

struct MetricsReport {
  AverageMode mode = AverageMode::kWeighted;
  int positive_class = 1;
  std::int64_t num_examples = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Mean cross-entropy (natural log); NaN when not computed.
  double loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<ClassScores> per_class;
  /// Human-readable notes on every zero-division that was defined as 0.
  std::vector<std::string> zero_division;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

/// Weighted mode averages per-class scores with weight support / total;
/// binary mode reports the scores of `positive_class`. A zero denominator
/// yields 0 and is recorded in zero_division.
MetricsReport classification_metrics(const std::vector<int>& predictions,
                                     const std::vector<int>& labels, int num_classes,
                                     AverageMode mode, int positive_class = 1);

MetricsReport metrics_from_confusion(const ConfusionMatrix& cm, AverageMode mode,
                                     int positive_class = 1);

/// Mean of -log softmax(row)[target] over rows. An empty set yields 0 with a
/// warning.
double mlm_cross_entropy(const Matrix& logits, const std::vector<TokenId>& targets);

}  // namespace dapt
