#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dapt/checkpoint.hpp"
#include "dapt/corpus.hpp"
#include "dapt/tokenizer.hpp"

namespace dapt {

/// One row per document. Persisted as a text file (header line, then one
/// row of space-separated values per document) plus an "<path>.ids" sidecar.
struct EmbeddingMatrix {
  std::vector<std::string> ids;
  Matrix values;  // documents x hidden
  std::string source_hash;

  void validate() const;
  void save(const std::filesystem::path& path) const;
  static EmbeddingMatrix load(const std::filesystem::path& path);
};

/// Final-layer [CLS] vectors of a deterministic sample of `docs`, kept in
/// corpus order. Dropout is off.
EmbeddingMatrix export_cls_embeddings(const Checkpoint& checkpoint, const Tokenizer& tokenizer,
                                      const std::vector<Document>& docs, std::size_t sample_size,
                                      std::uint64_t seed);

/// Centered projection onto the top `dims` principal components. Each
/// component is signed so that its largest-magnitude loading is positive.
/// Constant input gives all-zero coordinates and a warning.
Matrix pca_project(const Matrix& x, int dims);

/// pca_project to two dimensions; needs >= 3 rows and >= 2 columns.
Matrix project_2d(const EmbeddingMatrix& matrix);

inline constexpr int kOutlier = -1;

struct ClusterParams {
  int min_cluster_size = 10;
  /// Neighbours (self included) within radius that make a point core.
  int min_samples = 5;
  /// <= 0 picks twice the median distance to the min_samples-th neighbour.
  double radius = 0.0;
  /// PCA dimension applied before clustering; 0 keeps the input as is.
  int reduce_dims = 16;
};

struct ClusterAssignment {
  std::vector<std::string> ids;
  std::vector<int> labels;  // 1..n_clusters or kOutlier
  int n_clusters = 0;
  double radius = 0.0;      // the radius actually used

  std::size_t outliers() const;
};

/// Density clustering: core points within radius of each other are joined,
/// border points go to their nearest core point, and groups smaller than
/// min_cluster_size become outliers. Clusters are numbered from 1 by size
/// (descending), then by smallest member id.
ClusterAssignment cluster_points(const std::vector<std::string>& ids, const Matrix& points,
                                 const ClusterParams& params);

ClusterAssignment cluster_embeddings(const EmbeddingMatrix& matrix, const ClusterParams& params);

/// Lowercased alphanumeric words of length >= 2, stop words removed.
std::vector<std::string> topic_words(std::string_view text);

struct ClusterTopics {
  int cluster = 0;
  std::size_t num_documents = 0;
  std::size_t total_words = 0;                 // w_i
  std::map<std::string, std::size_t> counts;   // t_i
  std::map<std::string, double> scores;        // words present in the cluster
  std::vector<std::pair<std::string, double>> top;
};

struct TopicSummary {
  std::size_t num_documents = 0;  // m, outliers included
  std::vector<ClusterTopics> clusters;

  /// Score of `word` in `cluster`; 0 when the word is absent there.
  double score(int cluster, const std::string& word) const;
};

/// Class-based TF-IDF: score = (t_i / w_i) * ln(m / sum_j t_j), where the
/// sum runs over clusters and outliers are left out of every count but m.
TopicSummary cbtfidf_topics(const ClusterAssignment& assignment, const std::vector<Document>& docs,
                            int top_k);

/// "cluster<TAB>w1, w2, w3" per cluster.
std::string topic_report(const TopicSummary& summary);

/// CSV: cluster,rank,word,score.
std::string topics_csv(const TopicSummary& summary);

/// CSV: id,x,y,cluster,true_label. true_labels may be empty.
std::string projection_csv(const ClusterAssignment& assignment, const Matrix& coords,
                           const std::vector<std::string>& true_labels);

}  // namespace dapt
