#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace dapt::testing {

/// Class-based TF-IDF from already tokenized documents. labels[i] < 0 marks
/// an outlier, which counts toward the document total and nothing else.
/// Returns scores[cluster][word].
inline std::map<int, std::map<std::string, double>> cbtfidf_oracle(
    const std::vector<std::vector<std::string>>& doc_words, const std::vector<int>& labels) {
  std::map<int, std::map<std::string, double>> tf;
  std::map<int, double> size;
  std::map<std::string, double> across;
  for (std::size_t i = 0; i < doc_words.size(); ++i) {
    if (labels[i] < 0) continue;
    for (const auto& w : doc_words[i]) {
      tf[labels[i]][w] += 1;
      size[labels[i]] += 1;
      across[w] += 1;
    }
  }
  const double m = static_cast<double>(doc_words.size());
  std::map<int, std::map<std::string, double>> out;
  for (const auto& [c, words] : tf) {
    for (const auto& [w, t] : words) out[c][w] = t / size[c] * std::log(m / across[w]);
  }
  return out;
}

}  // namespace dapt::testing
