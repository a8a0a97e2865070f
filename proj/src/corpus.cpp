#include "dapt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "dapt/common.hpp"

namespace dapt {

namespace {

LabelScheme make_osti_scheme() {
  LabelScheme s;
  s.all_categories = {
      {1, "Coal, Lignite, and Peat"},
      {2, "Petroleum"},
      {3, "Natural Gas"},
      {4, "Oil Shales and Tar Sands"},
      {5, "Nuclear Fuels"},
      {7, "Isotope and Radiation Sources"},
      {8, "Hydrogen"},
      {9, "Biomass Fuels"},
      {10, "Synthetic Fuels"},
      {11, "Nuclear Fuel Cycle and Fuel Materials"},
      {12, "Management of Radioactive and Non-Radioactive Wastes From Nuclear Facilities"},
      {13, "Hydro Energy"},
      {14, "Solar Energy"},
      {15, "Geothermal Energy"},
      {16, "Tidal and Wave Power"},
      {17, "Wind Energy"},
      {20, "Fossil-Fueled Power Plants"},
      {21, "Specific Nuclear Reactors and Associated Plants"},
      {22, "General Studies of Nuclear Reactors"},
      {24, "Power Transmission and Distribution"},
      {25, "Energy Storage"},
      {29, "Energy Planning, Policy, and Economy"},
      {30, "Direct Energy Conversion"},
      {32, "Energy Conservation, Consumption, and Utilization"},
      {33, "Advanced Propulsion Systems"},
      {35, "Arms Control"},
      {36, "Material Science"},
      {37, "Inorganic, Organic, Physical and Analytical Chemistry"},
      {38, "Radiation Chemistry, Radiochemistry, and Nuclear Chemistry"},
      {39, ""},
      {40, "Chemistry"},
      {42, "Engineering"},
      {43, "Particle Accelerators"},
      {44, ""},
      {45, "Military Technology, Weaponry, and National Defense"},
      {46, "Instrumentation Related To Nuclear Science and Technology"},
      {47, "Other Instrumentation"},
      {54, "Environmental Sciences"},
      {55, ""},
      {56, "Biology and Medicine"},
      {57, ""},
      {58, "Geosciences"},
      {59, "Basic Biological Sciences"},
      {60, "Applied Life Sciences"},
      {61, "Radiation Protection and Dosimetry"},
      {62, "Radiology and Nuclear Medicine"},
      {63, "Radiation, Thermal, and Other Environ. Pollutant Effects On Living Orgs. and Biol. Mat."},
      {66, "Physics"},
      {70, "Plasma Physics and Fusion Technology"},
      {71, "Classical and Quantum Mechanics, General Physics"},
      {72, "Physics Of Elementary Particles and Fields"},
      {73, "Nuclear Physics and Radiation Physics"},
      {74, "Atomic and Molecular Physics"},
      {75, "Condensed Matter Physics, Superconductivity and Superfluidity"},
      {77, "Nanoscience and Nanotechnology"},
      {79, "Astronomy and Astrophysics"},
      {96, "Knowledge Management and Preservation"},
      {97, "Mathematics and Computing"},
      {98, "Nuclear Disarmament, Safeguards, and Physical Protection"},
      {99, "General and Miscellaneous"},
  };
  s.nfc_categories = {5, 7, 11, 12, 21, 22, 38, 46, 73};
  return s;
}

std::uint64_t order_key(const std::string& id, std::uint64_t seed) {
  return mix64(fnv1a(id) ^ mix64(seed));
}

// Stable hash order: ties on the 64-bit key fall back to the id itself.
std::vector<std::size_t> hash_order(const std::vector<Document>& docs, std::uint64_t seed) {
  std::vector<std::uint64_t> keys(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) keys[i] = order_key(docs[i].id, seed);
  std::vector<std::size_t> idx(docs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    return docs[a].id < docs[b].id;
  });
  return idx;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

Document parse_record(const std::string& line, std::size_t line_no) {
  auto fail = [&](const std::string& what) {
    return ValidationError("corpus line " + std::to_string(line_no) + ": " + what);
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(std::string("malformed record (") + e.what() + ")");
  }
  if (!j.is_object()) throw fail("record is not an object");
  Document d;
  if (!j.contains("id") || !j["id"].is_string()) throw fail("missing string field 'id'");
  if (!j.contains("text") || !j["text"].is_string()) throw fail("missing string field 'text'");
  d.id = j["id"].get<std::string>();
  d.text = j["text"].get<std::string>();
  if (d.id.empty()) throw fail("empty id");
  if (is_blank(d.text)) throw fail("empty text for id '" + d.id + "'");
  if (j.contains("categories")) {
    const auto& c = j["categories"];
    if (!c.is_array()) throw fail("'categories' is not an array");
    for (const auto& v : c) {
      if (!v.is_number_integer()) throw fail("non-integer category");
      d.categories.push_back(v.get<int>());
    }
  }
  return d;
}

const char* kSplitFiles[] = {"pretrain.ids", "finetune_train.ids", "finetune_validation.ids",
                             "test.ids"};

}  // namespace

const LabelScheme& LabelScheme::osti() {
  static const LabelScheme scheme = make_osti_scheme();
  return scheme;
}

int LabelScheme::class_index(CategoryCode code) const {
  auto it = all_categories.find(code);
  if (it == all_categories.end()) {
    throw ValidationError("unknown category code " + std::to_string(code));
  }
  return static_cast<int>(std::distance(all_categories.begin(), it));
}

CategoryCode LabelScheme::code_at(int class_index) const {
  if (class_index < 0 || class_index >= num_classes()) {
    throw ValidationError("class index out of range: " + std::to_string(class_index));
  }
  return std::next(all_categories.begin(), class_index)->first;
}

bool map_binary_label(CategoryCode category, const LabelScheme& scheme) {
  if (!scheme.contains(category)) {
    throw ValidationError("unknown category code " + std::to_string(category));
  }
  return scheme.nfc_categories.count(category) != 0;
}

bool nfc_label(const Document& doc, const LabelScheme& scheme) {
  auto primary = doc.primary_category();
  if (!primary) throw ValidationError("document '" + doc.id + "' has no category");
  return map_binary_label(*primary, scheme);
}

std::vector<Document> parse_corpus(std::string_view contents) {
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::istringstream in{std::string(contents)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    Document d = parse_record(line, line_no);
    if (!seen.insert(d.id).second) {
      throw ValidationError("corpus line " + std::to_string(line_no) + ": duplicate id '" +
                            d.id + "'");
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_text_file(path));
}

void save_corpus(const std::vector<Document>& docs, const std::filesystem::path& path) {
  std::string out;
  for (const auto& d : docs) {
    nlohmann::json j{{"id", d.id}, {"text", d.text}, {"categories", d.categories}};
    out += j.dump() + '\n';
  }
  write_file_atomic(path, out);
}

void SplitSpec::validate() const {
  for (double f : {pretrain_fraction, finetune_fraction, test_fraction,
                   validation_fraction_of_finetune}) {
    if (!(f > 0.0 && f < 1.0)) throw ValidationError("split fractions must lie in (0, 1)");
  }
  if (std::abs(pretrain_fraction + finetune_fraction + test_fraction - 1.0) > 1e-12) {
    throw ValidationError("pretrain + finetune + test fractions must sum to 1");
  }
}

std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& shares) {
  std::vector<std::size_t> out(shares.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    // Guard against 0.7 * 10 evaluating to 6.999...
    out[i] = static_cast<std::size_t>(std::floor(shares[i] * static_cast<double>(total) + 1e-9));
    assigned += out[i];
  }
  for (std::size_t i = 0; assigned < total; i = (i + 1) % shares.size()) {
    ++out[i];
    ++assigned;
  }
  return out;
}

DatasetSplits split_corpus(const std::vector<Document>& docs, const SplitSpec& spec) {
  spec.validate();
  std::vector<Document> labeled;
  DatasetSplits out;
  for (const auto& d : docs) {
    if (d.labeled()) {
      labeled.push_back(d);
    } else {
      out.pretrain.push_back(d);
    }
  }
  auto sizes = apportion(labeled.size(),
                         {spec.pretrain_fraction, spec.finetune_fraction, spec.test_fraction});
  auto order = hash_order(labeled, spec.seed);
  std::vector<Document> finetune_pool;
  for (std::size_t r = 0; r < order.size(); ++r) {
    auto& d = labeled[order[r]];
    if (r < sizes[0]) {
      out.pretrain.push_back(std::move(d));
    } else if (r < sizes[0] + sizes[1]) {
      finetune_pool.push_back(std::move(d));
    } else {
      out.test.push_back(std::move(d));
    }
  }
  auto ft = apportion(finetune_pool.size(), {1.0 - spec.validation_fraction_of_finetune,
                                             spec.validation_fraction_of_finetune});
  if (ft[1] == 0 && ft[0] >= 2) {
    --ft[0];
    ++ft[1];
  }
  for (std::size_t i = 0; i < finetune_pool.size(); ++i) {
    (i < ft[0] ? out.finetune_train : out.finetune_validation).push_back(std::move(finetune_pool[i]));
  }
  if (out.finetune_train.empty() || out.finetune_validation.empty() || out.test.empty()) {
    throw ValidationError("too few labeled documents to populate every split (" +
                          std::to_string(labeled.size()) + " labeled)");
  }
  return out;
}

std::vector<std::vector<Document>> nested_subsets(const std::vector<Document>& pool,
                                                  const std::vector<double>& fractions,
                                                  std::uint64_t seed) {
  if (fractions.empty()) throw ValidationError("fraction list is empty");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0)) {
      throw ValidationError("subset fractions must lie in (0, 1]");
    }
    if (i > 0 && !(fractions[i] > fractions[i - 1])) {
      throw ValidationError("subset fractions must be strictly ascending");
    }
  }
  if (pool.empty()) throw ValidationError("cannot draw subsets from an empty pool");
  auto order = hash_order(pool, seed);
  std::vector<std::vector<Document>> out;
  for (double f : fractions) {
    auto n = static_cast<std::size_t>(std::llround(f * static_cast<double>(pool.size())));
    n = std::clamp<std::size_t>(n, 1, pool.size());
    std::vector<Document> subset;
    subset.reserve(n);
    for (std::size_t i = 0; i < n; ++i) subset.push_back(pool[order[i]]);
    out.push_back(std::move(subset));
  }
  return out;
}

void write_split_manifests(const DatasetSplits& splits, const std::filesystem::path& dir) {
  const std::vector<Document>* parts[] = {&splits.pretrain, &splits.finetune_train,
                                          &splits.finetune_validation, &splits.test};
  for (int i = 0; i < 4; ++i) {
    std::string ids;
    for (const auto& d : *parts[i]) ids += d.id + '\n';
    write_file_atomic(dir / kSplitFiles[i], ids);
  }
}

std::vector<std::string> read_id_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read id list " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

DatasetSplits read_split_manifests(const std::vector<Document>& docs,
                                   const std::filesystem::path& dir) {
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : docs) by_id.emplace(d.id, &d);
  DatasetSplits out;
  std::vector<Document>* parts[] = {&out.pretrain, &out.finetune_train, &out.finetune_validation,
                                    &out.test};
  for (int i = 0; i < 4; ++i) {
    for (const auto& id : read_id_list(dir / kSplitFiles[i])) {
      auto it = by_id.find(id);
      if (it == by_id.end()) {
        throw ValidationError("split manifest " + std::string(kSplitFiles[i]) +
                              " names unknown document '" + id + "'");
      }
      parts[i]->push_back(*it->second);
    }
  }
  return out;
}

}  // namespace dapt
