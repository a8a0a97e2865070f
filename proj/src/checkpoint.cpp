#include "dapt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace dapt {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'P', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("checkpoint truncated");
  return v;
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"num_layers", c.num_layers},       {"num_heads", c.num_heads},
          {"hidden_dim", c.hidden_dim},       {"ff_dim", c.ff_dim},
          {"max_positions", c.max_positions}, {"vocab_size", c.vocab_size},
          {"num_classes", c.num_classes},     {"dropout_rate", c.dropout_rate},
          {"init_std", c.init_std},           {"tie_mlm_weights", c.tie_mlm_weights},
          {"cls_pooler", c.cls_pooler}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.num_layers = j.at("num_layers").get<int>();
    c.num_heads = j.at("num_heads").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.ff_dim = j.at("ff_dim").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.num_classes = j.at("num_classes").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.init_std = j.at("init_std").get<double>();
    c.tie_mlm_weights = j.at("tie_mlm_weights").get<bool>();
    c.cls_pooler = j.at("cls_pooler").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad model config record: ") + e.what());
  }
  c.validate();
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  params.check_shapes(config);
  nlohmann::json header;
  header["config"] = config_to_json(config);
  header["tokenizer_hash"] = tokenizer_hash;
  header["metadata"] = metadata;
  auto& tensors = header["tensors"] = nlohmann::json::array();
  params.for_each([&](const std::string& name, const Matrix& m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    params.for_each([&](const std::string&, const Matrix& m) {
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
    });
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError(path.string() + " is not a dapt checkpoint");
  }
  if (auto v = read_pod<std::uint32_t>(in); v != kVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(v));
  }
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ValidationError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ck;
  ck.config = config_from_json(header.at("config"));
  ck.tokenizer_hash = header.value("tokenizer_hash", "");
  ck.metadata = header.value("metadata", nlohmann::json::object());
  ck.params = Parameters::zeros(ck.config);

  const auto& tensors = header.at("tensors");
  std::size_t i = 0;
  ck.params.for_each([&](const std::string& name, Matrix& m) {
    if (i >= tensors.size()) throw ValidationError("checkpoint is missing tensor " + name);
    const auto& t = tensors[i++];
    if (t.at("name").get<std::string>() != name || t.at("rows").get<Eigen::Index>() != m.rows() ||
        t.at("cols").get<Eigen::Index>() != m.cols()) {
      throw ValidationError("checkpoint tensor " + t.at("name").get<std::string>() +
                            " does not match config (expected " + name + " " +
                            std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")");
    }
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw ValidationError("checkpoint data truncated in " + name);
  });
  if (i != tensors.size()) throw ValidationError("checkpoint has unexpected extra tensors");
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ValidationError("checkpoint has trailing bytes after the last tensor");
  }
  return ck;
}

void Checkpoint::require_tokenizer(const std::string& hash) const {
  if (hash != tokenizer_hash) {
    throw ValidationError("tokenizer hash mismatch: checkpoint expects " + tokenizer_hash +
                          ", data was tokenized with " + hash);
  }
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = fnv1a("");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return to_hex(h);
}

}  // namespace dapt
