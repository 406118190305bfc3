#include "mkc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mkc/config.hpp"
#include "mkc/errors.hpp"

namespace mkc {
namespace {

constexpr char kMagic[4] = {'M', 'K', 'C', 'K'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  put_bytes(out, &v, sizeof v);
}

class Cursor {
 public:
  explicit Cursor(const std::vector<std::uint8_t>& in) : in_(in) {}

  void read(void* dst, std::size_t n, const std::string& what) {
    if (in_.size() - pos_ < n) {
      throw DataError("checkpoint truncated while reading " + what + " (offset " +
                      std::to_string(pos_) + ", need " + std::to_string(n) + " bytes, have " +
                      std::to_string(in_.size() - pos_) + ")");
    }
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T get(const std::string& what) {
    T v;
    read(&v, sizeof v, what);
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

bool same_layout(const ModelConfig& a, const ModelConfig& b) {
  ModelConfig x = a, y = b;
  x.loss = y.loss;
  x.seed = y.seed;
  return x == y;
}

std::vector<std::uint8_t> serialize_checkpoint(const ModelState& m) {
  KeyValues kv = model_config_to_kv(m.config);
  for (const auto& [k, v] : m.info) kv["info." + k] = v;
  const std::string text = format_key_values(kv);

  std::vector<std::uint8_t> out;
  put_bytes(out, kMagic, 4);
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint32_t>(text.size()));
  put_bytes(out, text.data(), text.size());
  put(out, static_cast<std::uint32_t>(m.params.size()));
  for (const auto& name : m.params.names()) {
    const Tensor& t = m.params.get(name);
    put(out, static_cast<std::uint16_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put(out, static_cast<std::uint32_t>(d));
    put_bytes(out, t.data().data(), t.size() * sizeof(double));
  }
  return out;
}

ModelState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes,
                                  const std::optional<ModelConfig>& expected) {
  Cursor cur(bytes);
  char magic[4];
  cur.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a checkpoint (bad magic)");
  const auto version = cur.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  std::string text(cur.get<std::uint32_t>("config length"), '\0');
  cur.read(text.data(), text.size(), "config text");

  KeyValues kv;
  try {
    kv = parse_key_values(text, "checkpoint config");
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint: ") + e.what());
  }
  KeyValues model_kv, info;
  for (const auto& [k, v] : kv) {
    if (k.rfind("info.", 0) == 0) {
      info[k.substr(5)] = v;
    } else {
      model_kv[k] = v;
    }
  }
  ModelConfig config;
  try {
    config = model_config_from_kv(model_kv);
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint: ") + e.what());
  }
  if (expected && !same_layout(config, *expected)) {
    throw DataError("checkpoint architecture does not match the configured model");
  }

  ModelState m = ModelState::init(config);
  m.info = {info.begin(), info.end()};
  const auto count = cur.get<std::uint32_t>("block count");
  if (count != m.params.size()) {
    throw DataError("checkpoint has " + std::to_string(count) + " parameter blocks, model has " +
                    std::to_string(m.params.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(cur.get<std::uint16_t>("block name length"), '\0');
    cur.read(name.data(), name.size(), "block name");
    if (!m.params.contains(name)) throw DataError("unexpected checkpoint block '" + name + "'");
    if (name != m.params.names()[i]) {
      throw DataError("checkpoint block '" + name + "' out of order (expected '" +
                      m.params.names()[i] + "')");
    }
    Tensor& t = m.params.get(name);
    Shape shape(cur.get<std::uint8_t>("rank of " + name));
    for (auto& d : shape) d = cur.get<std::uint32_t>("shape of " + name);
    if (shape != t.shape()) {
      throw DataError("checkpoint block '" + name + "' has shape " + shape_str(shape) +
                      ", model expects " + shape_str(t.shape()));
    }
    cur.read(t.data().data(), t.size() * sizeof(double), "values of " + name);
  }
  if (!cur.done()) throw DataError("trailing bytes after the last checkpoint block");
  return m;
}

void save_checkpoint(const ModelState& m, const std::string& path) {
  const auto bytes = serialize_checkpoint(m);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write checkpoint " + path);
}

ModelState load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  try {
    return deserialize_checkpoint(bytes, expected);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace mkc
