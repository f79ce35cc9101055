#include "asc/model_io.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace asc {

namespace {

using nlohmann::json;

std::uint32_t crc_table_entry(std::uint32_t i) {
  std::uint32_t c = i;
  for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
  return c;
}

const std::array<std::uint32_t, 256>& crc_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) t[i] = crc_table_entry(i);
    return t;
  }();
  return table;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

// Bounds-checked little-endian reader; every overrun is a truncation.
struct Cursor {
  const std::uint8_t* data;
  std::size_t len;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > len) {
      throw ModelFormatError(ModelFormatError::Kind::truncated,
                             "model file: truncated at byte " + std::to_string(pos));
    }
  }

  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = static_cast<std::uint32_t>(data[pos]) |
                            (static_cast<std::uint32_t>(data[pos + 1]) << 8) |
                            (static_cast<std::uint32_t>(data[pos + 2]) << 16) |
                            (static_cast<std::uint32_t>(data[pos + 3]) << 24);
    pos += 4;
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }

  const std::uint8_t* bytes(std::size_t n) {
    need(n);
    const std::uint8_t* p = data + pos;
    pos += n;
    return p;
  }
};

json spec_to_json_obj(const ModelSpec& spec) {
  json j;
  j["kind"] = to_string(spec.kind);
  j["n_classes"] = spec.n_classes;
  j["class_names"] = spec.class_names;
  j["n_mels"] = spec.n_mels;
  j["cnn_channels"] = spec.cnn_channels;
  j["jrm_channels"] = spec.jrm_channels;
  j["attn_layers"] = spec.attn_layers;
  j["attn_heads"] = spec.attn_heads;
  j["d_model"] = spec.d_model;
  j["pool_heads"] = spec.pool_heads;
  j["pool_attn_dim"] = spec.pool_attn_dim;
  j["embedder"] = to_string(spec.embedder);
  j["embed_dim"] = spec.embed_dim;
  j["frames_per_embedding"] = spec.frames_per_embedding;
  j["embedder_seed"] = spec.embedder_seed;
  j["strategy"] = to_string(spec.strategy);
  j["scale_factor"] = spec.scale_factor;
  j["dropout_rate"] = spec.dropout_rate;
  return j;
}

ModelSpec spec_from_json_obj(const json& j) {
  ModelSpec spec;
  spec.kind = model_kind_from_string(j.at("kind").get<std::string>());
  spec.n_classes = j.at("n_classes").get<int>();
  spec.class_names = j.at("class_names").get<std::vector<std::string>>();
  spec.n_mels = j.at("n_mels").get<int>();
  spec.cnn_channels = j.at("cnn_channels").get<std::vector<int>>();
  spec.jrm_channels = j.at("jrm_channels").get<std::vector<int>>();
  spec.attn_layers = j.at("attn_layers").get<int>();
  spec.attn_heads = j.at("attn_heads").get<int>();
  spec.d_model = j.at("d_model").get<int>();
  spec.pool_heads = j.at("pool_heads").get<int>();
  spec.pool_attn_dim = j.at("pool_attn_dim").get<int>();
  spec.embedder = embedder_kind_from_string(j.at("embedder").get<std::string>());
  spec.embed_dim = j.at("embed_dim").get<int>();
  spec.frames_per_embedding = j.at("frames_per_embedding").get<int>();
  spec.embedder_seed = j.at("embedder_seed").get<std::uint64_t>();
  spec.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  spec.scale_factor = j.at("scale_factor").get<double>();
  spec.dropout_rate = j.at("dropout_rate").get<double>();
  return spec;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("model file: cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t len) {
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) {
    crc = crc_table()[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  }
  return crc ^ 0xffffffffu;
}

std::string spec_to_json(const ModelSpec& spec) { return spec_to_json_obj(spec).dump(); }

ModelSpec spec_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  return spec_from_json_obj(j);
}

void save_model(const std::filesystem::path& path, const Model<float>& model) {
  model.spec.validate();

  // Parameter payload first so the header can carry its checksum.
  std::vector<std::uint8_t> payload;
  for (const auto& [name, t] : model.params) {  // std::map: sorted-name order
    put_u32(payload, static_cast<std::uint32_t>(name.size()));
    payload.insert(payload.end(), name.begin(), name.end());
    put_u32(payload, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) put_u32(payload, static_cast<std::uint32_t>(d));
    static_assert(sizeof(float) == 4);
    const auto* raw = reinterpret_cast<const std::uint8_t*>(t.ptr());
    payload.insert(payload.end(), raw, raw + t.size() * 4);
  }

  json header = spec_to_json_obj(model.spec);
  header["crc32"] = crc32_ieee(payload.data(), payload.size());
  const std::string header_text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("model file: cannot write " + path.string());
  os.write("ASCM", 4);
  std::vector<std::uint8_t> prefix;
  put_u32(prefix, kModelFormatVersion);
  put_u32(prefix, static_cast<std::uint32_t>(header_text.size()));
  os.write(reinterpret_cast<const char*>(prefix.data()), static_cast<std::streamsize>(prefix.size()));
  os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!os) throw DataError("model file: write failed for " + path.string());
}

Model<float> load_model(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  Cursor cur{bytes.data(), bytes.size()};

  const std::string magic = cur.str(4);
  if (magic != "ASCM") {
    throw ModelFormatError(ModelFormatError::Kind::bad_magic,
                           "model file: bad magic in " + path.string());
  }
  const std::uint32_t version = cur.u32();
  if (version != kModelFormatVersion) {
    throw ModelFormatError(ModelFormatError::Kind::bad_version,
                           "model file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t header_len = cur.u32();
  const std::string header_text = cur.str(header_len);

  ModelSpec spec;
  std::uint32_t expected_crc = 0;
  try {
    json header = json::parse(header_text);
    spec = spec_from_json_obj(header);
    expected_crc = header.at("crc32").get<std::uint32_t>();
    spec.validate();
  } catch (const ModelFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelFormatError(ModelFormatError::Kind::corrupt,
                           std::string("model file: corrupt header: ") + e.what());
  }

  const std::size_t payload_start = cur.pos;
  if (payload_start > bytes.size()) {
    throw ModelFormatError(ModelFormatError::Kind::truncated, "model file: truncated header");
  }
  const std::uint32_t actual_crc =
      crc32_ieee(bytes.data() + payload_start, bytes.size() - payload_start);
  if (actual_crc != expected_crc) {
    throw ModelFormatError(ModelFormatError::Kind::checksum_mismatch,
                           "model file: parameter payload checksum mismatch");
  }

  // The skeleton derived from the spec defines the expected names/shapes.
  Model<float> skeleton = init_model<float>(spec, /*seed=*/0);

  Model<float> model;
  model.spec = spec;
  for (const auto& [expected_name, expected_tensor] : skeleton.params) {
    const std::uint32_t name_len = cur.u32();
    if (name_len > 4096) {
      throw ModelFormatError(ModelFormatError::Kind::corrupt, "model file: absurd name length");
    }
    const std::string name = cur.str(name_len);
    if (name != expected_name) {
      throw ModelFormatError(ModelFormatError::Kind::corrupt,
                             "model file: expected parameter " + expected_name + ", found " + name);
    }
    const std::uint32_t rank = cur.u32();
    if (rank != expected_tensor.rank()) {
      throw ModelFormatError(ModelFormatError::Kind::corrupt,
                             "model file: rank mismatch for " + name);
    }
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = cur.u32();
    if (shape != expected_tensor.shape) {
      throw ModelFormatError(ModelFormatError::Kind::corrupt,
                             "model file: shape mismatch for " + name);
    }
    const std::size_t count = shape_numel(shape);
    const std::uint8_t* raw = cur.bytes(count * 4);
    Tensor<float> t = Tensor<float>::zeros(shape);
    std::memcpy(t.ptr(), raw, count * 4);
    for (const float v : *t.data) {
      if (!std::isfinite(v)) {
        throw ModelFormatError(ModelFormatError::Kind::corrupt,
                               "model file: non-finite value in " + name);
      }
    }
    model.params[name] = std::move(t);
  }
  if (cur.pos != bytes.size()) {
    throw ModelFormatError(ModelFormatError::Kind::corrupt,
                           "model file: trailing bytes after parameters");
  }
  return model;
}

Tensor<float> read_embedding_sidecar(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "ASCE", 4) != 0) {
    throw DataError("embedding sidecar: bad magic in " + path);
  }
  Cursor cur{bytes.data(), bytes.size(), 4};
  std::uint32_t t_e = 0, d = 0;
  try {
    t_e = cur.u32();
    d = cur.u32();
  } catch (const ModelFormatError& e) {
    throw DataError(std::string("embedding sidecar: ") + e.what());
  }
  if (t_e == 0 || d == 0) throw DataError("embedding sidecar: empty dims in " + path);
  const std::size_t expect = 12 + static_cast<std::size_t>(t_e) * d * 4;
  if (bytes.size() != expect) throw DataError("embedding sidecar: size mismatch in " + path);
  Tensor<float> out = Tensor<float>::zeros({t_e, d});
  std::memcpy(out.ptr(), bytes.data() + 12, static_cast<std::size_t>(t_e) * d * 4);
  ensure_all_finite(out, "embedding sidecar");
  return out;
}

void write_embedding_sidecar(const std::string& path, const Tensor<float>& embeddings) {
  if (embeddings.rank() != 2) throw UsageError("embedding sidecar: need [T_e, D]");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("embedding sidecar: cannot write " + path);
  os.write("ASCE", 4);
  std::vector<std::uint8_t> dims;
  put_u32(dims, static_cast<std::uint32_t>(embeddings.dim(0)));
  put_u32(dims, static_cast<std::uint32_t>(embeddings.dim(1)));
  os.write(reinterpret_cast<const char*>(dims.data()), static_cast<std::streamsize>(dims.size()));
  os.write(reinterpret_cast<const char*>(embeddings.ptr()),
           static_cast<std::streamsize>(embeddings.size() * 4));
  if (!os) throw DataError("embedding sidecar: write failed for " + path);
}

std::string embedding_sidecar_path(const std::string& clip_path) { return clip_path + ".asce"; }

}  // namespace asc
