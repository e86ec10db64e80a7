#include "dagankit/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <map>

namespace dagankit {

std::uint32_t crc32_ieee(const unsigned char* data, std::size_t n, std::uint32_t seed) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = ~seed;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return ~crc;
}

namespace {

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back((v >> 8) & 0xFF);
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

void put_f32(std::vector<unsigned char>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_entry(std::vector<unsigned char>& out, const std::string& name, const Shape& shape,
               const std::vector<double>& values) {
  if (name.size() > 0xFFFF) throw CheckpointError("entry name too long");
  put_u16(out, static_cast<std::uint16_t>(name.size()));
  out.insert(out.end(), name.begin(), name.end());
  out.push_back(static_cast<unsigned char>(shape.size()));
  for (int e : shape) put_u32(out, static_cast<std::uint32_t>(e));
  for (double v : values) put_f32(out, static_cast<float>(v));
}

std::vector<double> meta_limbs(std::uint64_t v) {
  return {static_cast<double>(v & 0xFFFF), static_cast<double>((v >> 16) & 0xFFFF),
          static_cast<double>((v >> 32) & 0xFFFF), static_cast<double>((v >> 48) & 0xFFFF)};
}

std::uint64_t limbs_meta(const Tensor& t) {
  if (t.count() != 4) throw CheckpointError("malformed meta entry");
  std::uint64_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= (static_cast<std::uint64_t>(t.at(i)) & 0xFFFF) << (16 * i);
  }
  return v;
}

struct Reader {
  const std::vector<unsigned char>& buf;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw CheckpointError("checkpoint truncated");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = buf[pos] | (buf[pos + 1] << 8);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<const ParamStore*>& nets,
                     const CheckpointMeta& meta) {
  std::vector<unsigned char> out;
  out.insert(out.end(), {'D', 'A', 'G', 'N'});
  put_u32(out, kCheckpointVersion);

  const bool with_meta = meta.seed != 0 || meta.config_hash != 0 || meta.steps != 0;
  std::uint32_t count = with_meta ? 3 : 0;
  for (const ParamStore* store : nets) count += static_cast<std::uint32_t>(store->entries().size());
  put_u32(out, count);

  if (with_meta) {
    put_entry(out, "meta/seed", {4}, meta_limbs(meta.seed));
    put_entry(out, "meta/config_hash", {4}, meta_limbs(meta.config_hash));
    put_entry(out, "meta/steps", {4}, meta_limbs(meta.steps));
  }
  for (const ParamStore* store : nets) {
    for (const Param& p : store->entries()) {
      put_entry(out, store->prefix() + "." + p.name, p.shape, p.value);
    }
  }
  put_u32(out, crc32_ieee(out.data(), out.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw CheckpointError("short write to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open '" + path + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());

  if (buf.size() < 16) throw CheckpointError("checkpoint truncated");
  if (std::memcmp(buf.data(), "DAGN", 4) != 0) throw CheckpointError("bad magic");
  const std::uint32_t stored_crc = buf[buf.size() - 4] | (buf[buf.size() - 3] << 8) |
                                   (buf[buf.size() - 2] << 16) |
                                   (static_cast<std::uint32_t>(buf[buf.size() - 1]) << 24);
  if (crc32_ieee(buf.data(), buf.size() - 4) != stored_crc) {
    throw CheckpointError("CRC mismatch");
  }

  Reader r{buf, 4};
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported format version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();

  Checkpoint ckpt;
  const std::size_t body_end = buf.size() - 4;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16();
    r.need(name_len);
    std::string name(reinterpret_cast<const char*>(buf.data() + r.pos), name_len);
    r.pos += name_len;
    r.need(1);
    const int rank = buf[r.pos++];
    if (rank > 4) throw CheckpointError("entry '" + name + "' has rank > 4");
    Shape shape;
    int n = 1;
    for (int d = 0; d < rank; ++d) {
      const std::uint32_t e = r.u32();
      if (e == 0 || e > (1u << 28)) throw CheckpointError("entry '" + name + "' has bad extent");
      shape.push_back(static_cast<int>(e));
      n *= static_cast<int>(e);
    }
    if (rank == 0) shape = {1};
    std::vector<double> values(n);
    for (int k = 0; k < n; ++k) values[k] = static_cast<double>(r.f32());
    ckpt.entries.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (r.pos != body_end) throw CheckpointError("trailing bytes before CRC");

  for (auto& [name, tensor] : ckpt.entries) {
    if (name == "meta/seed") ckpt.meta.seed = limbs_meta(tensor);
    if (name == "meta/config_hash") ckpt.meta.config_hash = limbs_meta(tensor);
    if (name == "meta/steps") ckpt.meta.steps = limbs_meta(tensor);
  }
  return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, const std::vector<ParamStore*>& nets) {
  std::map<std::string, Param*> by_name;
  for (ParamStore* store : nets) {
    for (Param& p : store->entries()) by_name[store->prefix() + "." + p.name] = &p;
  }
  std::size_t applied = 0;
  for (const auto& [name, tensor] : ckpt.entries) {
    if (name.rfind("meta/", 0) == 0) continue;
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("unknown entry '" + name + "'");
    Param& p = *it->second;
    if (tensor.shape() != p.shape) {
      throw CheckpointError("entry '" + name + "' shape " + shape_str(tensor.shape()) +
                            " does not match param " + shape_str(p.shape));
    }
    p.value = tensor.values();
    ++applied;
  }
  if (applied != by_name.size()) {
    throw CheckpointError("checkpoint is missing " + std::to_string(by_name.size() - applied) +
                          " parameter(s)");
  }
}

}  // namespace dagankit
