#include "gloss/archive.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <type_traits>
#include <json.hpp>

#include "gloss/error.hpp"

namespace gloss {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "GTAR I/O assumes a little-endian host");

constexpr char kMagic[4] = {'G', 'T', 'A', 'R'};

// One named tensor slot: rows x cols, with a 1-d tensor encoded as rows == 0.
template <typename Values>
struct BasicSlot {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::function<Values&()> data;
};

template <typename Bundle>
auto slots(Bundle& b) {
  using Values = std::conditional_t<std::is_const_v<Bundle>, const std::vector<double>, std::vector<double>>;
  const ModelConfig& c = b.config;
  std::vector<BasicSlot<Values>> out;
  out.push_back({"embedding", c.vocab_size, c.d, [&b]() -> auto& { return b.embedding.data(); }});
  out.push_back({"position", c.max_seq, c.d, [&b]() -> auto& { return b.position.data(); }});
  for (std::size_t l = 0; l < b.layers.size(); ++l) {
    auto& w = b.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    out.push_back({p + "attn_q", c.d, c.d, [&w]() -> auto& { return w.attn_q.data(); }});
    out.push_back({p + "attn_k", c.d, c.d, [&w]() -> auto& { return w.attn_k.data(); }});
    out.push_back({p + "attn_v", c.d, c.d, [&w]() -> auto& { return w.attn_v.data(); }});
    out.push_back({p + "attn_o", c.d, c.d, [&w]() -> auto& { return w.attn_o.data(); }});
    out.push_back({p + "attn_norm", 0, c.d, [&w]() -> auto& { return w.attn_norm_gain; }});
    out.push_back({p + "ffn_norm", 0, c.d, [&w]() -> auto& { return w.ffn_norm_gain; }});
    if (c.ffn_kind == FfnKind::two_layer) {
      out.push_back({p + "ffn_in", c.d_m, c.d, [&w]() -> auto& { return w.ffn_in.data(); }});
      out.push_back({p + "ffn_out", c.d_m, c.d, [&w]() -> auto& { return w.ffn_out.data(); }});
    } else {
      out.push_back({p + "ffn_gate", c.d_m, c.d, [&w]() -> auto& { return w.ffn_gate.data(); }});
      out.push_back({p + "ffn_up", c.d_m, c.d, [&w]() -> auto& { return w.ffn_up.data(); }});
      out.push_back({p + "ffn_down", c.d, c.d_m, [&w]() -> auto& { return w.ffn_down.data(); }});
    }
  }
  return out;
}

template <typename S>
json shape_of(const S& s) {
  return s.rows == 0 ? json::array({s.cols}) : json::array({s.rows, s.cols});
}

json config_to_json(const ModelConfig& c) {
  return json{{"d", c.d},         {"d_m", c.d_m},           {"n_layers", c.n_layers},
              {"n_heads", c.n_heads}, {"vocab_size", c.vocab_size},
              {"ffn_kind", to_string(c.ffn_kind)}, {"max_seq", c.max_seq}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.d = j.at("d").get<std::size_t>();
    c.d_m = j.at("d_m").get<std::size_t>();
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.ffn_kind = ffn_kind_from_string(j.at("ffn_kind").get<std::string>());
    c.max_seq = j.at("max_seq").get<std::size_t>();
    c.validate();
  } catch (const json::exception& e) {
    throw FormatError(std::string("archive config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("archive config: ") + e.what());
  }
  return c;
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_bundle(const ModelBundle& bundle) {
  bundle.validate();
  const ModelBundle& b = bundle;
  const auto table = slots(b);

  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& s : table) {
    const std::uint64_t bytes = s.data().size() * sizeof(float);
    tensors.push_back({{"name", s.name}, {"dtype", "f32"}, {"shape", shape_of(s)}, {"offset", offset},
                       {"byte_len", bytes}});
    offset += bytes;
  }
  const json manifest{{"config", config_to_json(b.config)}, {"vocab", b.vocab.tokens()}, {"tensors", tensors}};
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_le<std::uint32_t>(out, kArchiveVersion);
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& s : table) {
    for (double v : s.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

ModelBundle deserialize_bundle(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kHeader = 4 + 4 + 8;
  if (bytes.size() < kHeader) throw FormatError("archive shorter than its header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic: not a GTAR archive");
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kArchiveVersion) throw FormatError("unsupported GTAR version " + std::to_string(version));
  const auto manifest_len = get_le<std::uint64_t>(bytes.data() + 8);
  if (manifest_len > bytes.size() - kHeader) throw FormatError("manifest length exceeds archive size");

  json manifest;
  try {
    manifest = json::parse(bytes.begin() + kHeader, bytes.begin() + kHeader + static_cast<std::ptrdiff_t>(manifest_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("config") || !manifest.contains("vocab") ||
      !manifest.contains("tensors"))
    throw FormatError("manifest must hold config, vocab and tensors");

  const ModelConfig config = config_from_json(manifest["config"]);
  std::vector<std::string> vocab;
  try {
    vocab = manifest["vocab"].get<std::vector<std::string>>();
  } catch (const json::exception&) {
    throw FormatError("manifest vocab must be an array of strings");
  }
  if (vocab.size() != config.vocab_size)
    throw FormatError("manifest vocab has " + std::to_string(vocab.size()) + " entries, config says " +
                      std::to_string(config.vocab_size));

  ModelBundle b = make_empty_bundle(config, std::move(vocab));
  const std::size_t payload_start = kHeader + manifest_len;
  const std::size_t payload_len = bytes.size() - payload_start;

  std::map<std::string, json> entries;
  for (const json& t : manifest["tensors"]) {
    if (!t.is_object() || !t.contains("name")) throw FormatError("tensor entry without a name");
    entries[t["name"].get<std::string>()] = t;
  }

  std::uint64_t expected_total = 0;
  for (const auto& s : slots(b)) {
    const auto it = entries.find(s.name);
    if (it == entries.end()) throw FormatError("tensor '" + s.name + "' missing from manifest");
    const json& t = it->second;
    std::uint64_t offset = 0, byte_len = 0;
    json shape;
    try {
      if (t.at("dtype").get<std::string>() != "f32") throw FormatError("tensor '" + s.name + "': dtype must be f32");
      shape = t.at("shape");
      offset = t.at("offset").get<std::uint64_t>();
      byte_len = t.at("byte_len").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw FormatError("tensor '" + s.name + "': " + e.what());
    }
    // The entry must agree with itself before it is compared with the config.
    std::uint64_t count = 1;
    if (!shape.is_array()) throw FormatError("tensor '" + s.name + "': shape must be an array");
    for (const auto& dim : shape) {
      if (!dim.is_number_unsigned()) throw FormatError("tensor '" + s.name + "': shape " + shape.dump() + " is not a list of sizes");
      count *= dim.get<std::uint64_t>();
    }
    if (byte_len != count * sizeof(float))
      throw FormatError("tensor '" + s.name + "': shape " + shape.dump() + " expects " +
                        std::to_string(count * sizeof(float)) + " bytes, manifest says " +
                        std::to_string(byte_len));
    if (shape != shape_of(s))
      throw FormatError("tensor '" + s.name + "': shape " + shape.dump() + " does not match config " +
                        shape_of(s).dump());
    if (offset > payload_len || byte_len > payload_len - offset)
      throw FormatError("tensor '" + s.name + "': payload truncated (needs bytes " + std::to_string(offset) +
                        ".." + std::to_string(offset + byte_len) + ", payload has " +
                        std::to_string(payload_len) + ")");
    std::vector<double>& dst = s.data();
    const std::uint8_t* src = bytes.data() + payload_start + offset;
    for (std::size_t i = 0; i < dst.size(); ++i) {
      const float f = std::bit_cast<float>(get_le<std::uint32_t>(src + 4 * i));
      if (!std::isfinite(f)) throw FormatError("tensor '" + s.name + "': non-finite value at index " + std::to_string(i));
      dst[i] = f;
    }
    expected_total += byte_len;
  }
  if (entries.size() != slots(b).size()) {
    for (const auto& s : slots(b)) entries.erase(s.name);
    throw FormatError("manifest lists tensor '" + entries.begin()->first + "' unknown to this config");
  }
  if (expected_total != payload_len)
    throw FormatError("payload length " + std::to_string(payload_len) + " does not match manifest total " +
                      std::to_string(expected_total));
  return b;
}

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_bundle(bundle);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open archive '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_bundle(bytes);
}

}  // namespace gloss
