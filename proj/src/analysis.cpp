#include "dapt/analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <Eigen/Eigenvalues>

namespace dapt {

namespace {

constexpr std::string_view kEmbeddingHeader = "#dapt-embeddings v1";

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void EmbeddingMatrix::validate() const {
  if (static_cast<std::size_t>(values.rows()) != ids.size()) {
    throw ValidationError("embedding matrix has " + std::to_string(values.rows()) + " rows but " +
                          std::to_string(ids.size()) + " ids");
  }
  if (!values.allFinite()) throw ValidationError("embedding matrix has non-finite entries");
}

void EmbeddingMatrix::save(const std::filesystem::path& path) const {
  validate();
  std::string body(kEmbeddingHeader);
  body += "\nrows " + std::to_string(values.rows()) + " cols " + std::to_string(values.cols()) +
          " source " + (source_hash.empty() ? std::string("-") : source_hash) + "\n";
  std::string sidecar;
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) body += ' ';
      body += fmt(values(r, c));
    }
    body += '\n';
    sidecar += ids[static_cast<std::size_t>(r)] + '\n';
  }
  write_file_atomic(path, body);
  auto id_path = path;
  id_path += ".ids";
  write_file_atomic(id_path, sidecar);
}

EmbeddingMatrix EmbeddingMatrix::load(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != kEmbeddingHeader) {
    throw ValidationError(path.string() + ": not an embedding matrix file");
  }
  std::string k_rows, k_cols, k_source;
  long rows = -1, cols = -1;
  EmbeddingMatrix m;
  if (!(in >> k_rows >> rows >> k_cols >> cols >> k_source >> m.source_hash) || k_rows != "rows" ||
      k_cols != "cols" || k_source != "source" || rows < 0 || cols < 0) {
    throw ValidationError(path.string() + ": malformed embedding header");
  }
  if (m.source_hash == "-") m.source_hash.clear();
  m.values.resize(rows, cols);
  for (long r = 0; r < rows; ++r) {
    for (long c = 0; c < cols; ++c) {
      if (!(in >> m.values(r, c))) {
        throw ValidationError(path.string() + ": truncated at row " + std::to_string(r + 1));
      }
    }
  }
  auto id_path = path;
  id_path += ".ids";
  std::istringstream ids(read_text_file(id_path));
  while (std::getline(ids, line)) {
    if (!line.empty()) m.ids.push_back(line);
  }
  m.validate();
  return m;
}

EmbeddingMatrix export_cls_embeddings(const Checkpoint& checkpoint, const Tokenizer& tokenizer,
                                      const std::vector<Document>& docs, std::size_t sample_size,
                                      std::uint64_t seed) {
  checkpoint.require_tokenizer(tokenizer.hash());
  if (sample_size == 0) throw ValidationError("sample size must be positive");
  if (sample_size > docs.size()) {
    throw ValidationError("sample size " + std::to_string(sample_size) + " exceeds the " +
                          std::to_string(docs.size()) + " available documents");
  }
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x5a3b));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(sample_size);
  std::sort(order.begin(), order.end());

  const ModelConfig& config = checkpoint.config;
  EmbeddingMatrix m;
  m.source_hash = checkpoint.tokenizer_hash;
  m.values.resize(static_cast<Eigen::Index>(sample_size), config.hidden_dim);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& doc = docs[order[r]];
    std::vector<TokenId> ids{SpecialTokens::kCls};
    for (TokenId t : tokenizer.encode(doc.text)) {
      if (static_cast<int>(ids.size()) >= config.max_positions) break;
      ids.push_back(t);
    }
    m.values.row(static_cast<Eigen::Index>(r)) =
        forward_encoder(ids, checkpoint.params, config).cls_vector();
    m.ids.push_back(doc.id);
  }
  m.validate();
  return m;
}

Matrix pca_project(const Matrix& x, int dims) {
  if (dims < 1) throw ValidationError("projection dimension must be positive");
  if (x.rows() < 1) throw ValidationError("cannot project an empty matrix");
  dims = static_cast<int>(std::min<Eigen::Index>(dims, x.cols()));
  const RowVector mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  if (centered.squaredNorm() <= 1e-24 * (1.0 + x.squaredNorm())) {
    warn("all rows are identical; projecting every point to the origin");
    return Matrix::Zero(x.rows(), dims);
  }
  const Matrix cov = centered.transpose() * centered / static_cast<double>(x.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("PCA eigen-decomposition failed");
  // Eigenvalues come out ascending.
  Matrix basis(x.cols(), dims);
  for (int k = 0; k < dims; ++k) {
    Eigen::VectorXd v = solver.eigenvectors().col(x.cols() - 1 - k);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
      if (std::abs(v(i)) > std::abs(v(arg)) + 1e-12) arg = i;
    }
    if (v(arg) < 0) v = -v;
    basis.col(k) = v;
  }
  return centered * basis;
}

Matrix project_2d(const EmbeddingMatrix& matrix) {
  matrix.validate();
  if (matrix.values.rows() < 3) throw ValidationError("projection needs at least 3 rows");
  if (matrix.values.cols() < 2) throw ValidationError("projection needs at least 2 columns");
  return pca_project(matrix.values, 2);
}

std::size_t ClusterAssignment::outliers() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), kOutlier));
}

ClusterAssignment cluster_points(const std::vector<std::string>& ids, const Matrix& points,
                                 const ClusterParams& params) {
  if (params.min_cluster_size < 2) throw ValidationError("min_cluster_size must be at least 2");
  if (params.min_samples < 1) throw ValidationError("min_samples must be at least 1");
  if (params.reduce_dims < 0) throw ValidationError("reduce_dims must be nonnegative");
  const auto n = static_cast<std::size_t>(points.rows());
  if (ids.size() != n) throw ValidationError("cluster ids and points differ in length");
  if (n < static_cast<std::size_t>(params.min_cluster_size)) {
    throw ValidationError("fewer points than min_cluster_size");
  }

  Matrix dist(points.rows(), points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < points.rows(); ++j) {
      dist(i, j) = dist(j, i) = (points.row(i) - points.row(j)).norm();
    }
  }

  ClusterAssignment out;
  out.ids = ids;
  out.radius = params.radius;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(params.min_samples), n);
  if (out.radius <= 0.0) {
    std::vector<double> kth;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(dist.row(static_cast<Eigen::Index>(i)).begin(),
                              dist.row(static_cast<Eigen::Index>(i)).end());
      std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k - 1), row.end());
      kth.push_back(row[k - 1]);
    }
    // The median alone would leave half the points non-core by construction.
    std::nth_element(kth.begin(), kth.begin() + static_cast<std::ptrdiff_t>(n / 2), kth.end());
    out.radius = 2.0 * kth[n / 2];
    if (out.radius <= 0.0) out.radius = 1e-12;
  }

  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) <= out.radius) ++count;
    }
    core[i] = count >= static_cast<std::size_t>(params.min_samples);
  }

  std::vector<int> component(n, kOutlier);
  int next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!core[s] || component[s] != kOutlier) continue;
    std::vector<std::size_t> stack{s};
    component[s] = next;
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j) {
        if (core[j] && component[j] == kOutlier &&
            dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) <= out.radius) {
          component[j] = next;
          stack.push_back(j);
        }
      }
    }
    ++next;
  }

  // Border points join the nearest core point (ties: smaller id).
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (!core[j]) continue;
      const double d = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (d > out.radius) continue;
      if (best == n) {
        best = j;
        continue;
      }
      const double db = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(best));
      if (d < db || (d == db && ids[j] < ids[best])) best = j;
    }
    if (best != n) component[i] = component[best];
  }

  struct Group {
    int component;
    std::size_t size;
    std::string min_id;
  };
  std::vector<Group> groups(static_cast<std::size_t>(next));
  for (int c = 0; c < next; ++c) groups[static_cast<std::size_t>(c)] = {c, 0, {}};
  for (std::size_t i = 0; i < n; ++i) {
    if (component[i] == kOutlier) continue;
    auto& g = groups[static_cast<std::size_t>(component[i])];
    if (g.size == 0 || ids[i] < g.min_id) g.min_id = ids[i];
    ++g.size;
  }
  std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
    if (a.size != b.size) return a.size > b.size;
    return a.min_id < b.min_id;
  });
  std::vector<int> renumber(static_cast<std::size_t>(next), kOutlier);
  for (const auto& g : groups) {
    if (g.size >= static_cast<std::size_t>(params.min_cluster_size)) {
      renumber[static_cast<std::size_t>(g.component)] = ++out.n_clusters;
    }
  }
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.labels[i] = component[i] == kOutlier ? kOutlier : renumber[static_cast<std::size_t>(component[i])];
  }
  return out;
}

ClusterAssignment cluster_embeddings(const EmbeddingMatrix& matrix, const ClusterParams& params) {
  matrix.validate();
  if (params.reduce_dims > 0 && params.reduce_dims < matrix.values.cols()) {
    return cluster_points(matrix.ids, pca_project(matrix.values, params.reduce_dims), params);
  }
  return cluster_points(matrix.ids, matrix.values, params);
}

std::vector<std::string> topic_words(std::string_view text) {
  static const std::set<std::string, std::less<>> kStopWords = {
      "a",    "about", "all",   "also",  "an",    "and",   "are",   "as",   "at",    "be",
      "been", "but",   "by",    "can",   "for",   "from",  "has",   "have", "in",    "into",
      "is",   "it",    "its",   "not",   "of",    "on",    "or",    "our",  "such",  "than",
      "that", "the",   "their", "these", "this",  "those", "to",    "was",  "we",    "were",
      "which", "with", "using", "used",  "between"};
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2 && !kStopWords.count(cur)) words.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (c >= 0x80 || std::isalnum(c)) {
      cur += static_cast<char>(c < 0x80 ? std::tolower(c) : c);
    } else {
      flush();
    }
  }
  flush();
  return words;
}

double TopicSummary::score(int cluster, const std::string& word) const {
  for (const auto& c : clusters) {
    if (c.cluster != cluster) continue;
    auto it = c.scores.find(word);
    return it == c.scores.end() ? 0.0 : it->second;
  }
  throw ValidationError("no cluster " + std::to_string(cluster));
}

TopicSummary cbtfidf_topics(const ClusterAssignment& assignment, const std::vector<Document>& docs,
                            int top_k) {
  if (top_k < 1) throw ValidationError("top_k must be at least 1");
  if (assignment.labels.size() != assignment.ids.size()) {
    throw ValidationError("cluster assignment ids and labels differ in length");
  }
  std::unordered_map<std::string_view, const Document*> by_id;
  for (const auto& d : docs) by_id.emplace(d.id, &d);

  TopicSummary summary;
  summary.num_documents = assignment.ids.size();
  summary.clusters.resize(static_cast<std::size_t>(assignment.n_clusters));
  for (int c = 0; c < assignment.n_clusters; ++c) summary.clusters[static_cast<std::size_t>(c)].cluster = c + 1;

  for (std::size_t i = 0; i < assignment.ids.size(); ++i) {
    const int label = assignment.labels[i];
    if (label == kOutlier) continue;
    if (label < 1 || label > assignment.n_clusters) {
      throw ValidationError("cluster label " + std::to_string(label) + " outside 1.." +
                            std::to_string(assignment.n_clusters));
    }
    auto it = by_id.find(assignment.ids[i]);
    if (it == by_id.end()) throw ValidationError("no text for document '" + assignment.ids[i] + "'");
    auto& cl = summary.clusters[static_cast<std::size_t>(label - 1)];
    ++cl.num_documents;
    for (auto& w : topic_words(it->second->text)) {
      ++cl.counts[w];
      ++cl.total_words;
    }
  }

  std::map<std::string, std::size_t> across;
  for (const auto& cl : summary.clusters) {
    if (cl.total_words == 0) {
      throw ValidationError("cluster " + std::to_string(cl.cluster) + " has no words");
    }
    for (const auto& [w, t] : cl.counts) across[w] += t;
  }
  const auto m = static_cast<double>(summary.num_documents);
  for (auto& cl : summary.clusters) {
    const auto w_i = static_cast<double>(cl.total_words);
    for (const auto& [w, t] : cl.counts) {
      cl.scores[w] = static_cast<double>(t) / w_i * std::log(m / static_cast<double>(across.at(w)));
    }
    std::vector<std::pair<std::string, double>> ranked(cl.scores.begin(), cl.scores.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    ranked.resize(std::min(ranked.size(), static_cast<std::size_t>(top_k)));
    cl.top = std::move(ranked);
  }
  return summary;
}

std::string topic_report(const TopicSummary& summary) {
  std::string out;
  for (const auto& cl : summary.clusters) {
    out += std::to_string(cl.cluster) + '\t';
    for (std::size_t r = 0; r < cl.top.size(); ++r) {
      if (r) out += ", ";
      out += cl.top[r].first;
    }
    out += '\n';
  }
  return out;
}

std::string topics_csv(const TopicSummary& summary) {
  std::string out = "cluster,rank,word,score\n";
  for (const auto& cl : summary.clusters) {
    for (std::size_t r = 0; r < cl.top.size(); ++r) {
      out += std::to_string(cl.cluster) + ',' + std::to_string(r + 1) + ',' + csv_field(cl.top[r].first) +
             ',' + fmt(cl.top[r].second) + '\n';
    }
  }
  return out;
}

std::string projection_csv(const ClusterAssignment& assignment, const Matrix& coords,
                           const std::vector<std::string>& true_labels) {
  if (static_cast<std::size_t>(coords.rows()) != assignment.ids.size() || coords.cols() < 2) {
    throw ValidationError("projection coordinates do not match the assignment");
  }
  if (!true_labels.empty() && true_labels.size() != assignment.ids.size()) {
    throw ValidationError("true labels do not match the assignment");
  }
  std::string out = "id,x,y,cluster,true_label\n";
  for (std::size_t i = 0; i < assignment.ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out += csv_field(assignment.ids[i]) + ',' + fmt(coords(r, 0)) + ',' + fmt(coords(r, 1)) + ',' +
           std::to_string(assignment.labels[i]) + ',' +
           (true_labels.empty() ? std::string() : csv_field(true_labels[i])) + '\n';
  }
  return out;
}

}  // namespace dapt
