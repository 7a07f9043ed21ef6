#include "idcgan/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <vector>

namespace idcgan {

namespace {

void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 24));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

struct Reader {
  const unsigned char* p;
  std::size_t left;
  const std::string& path;

  std::uint32_t u32() {
    if (left < 4) throw DataError("truncated checkpoint '" + path + "'");
    const std::uint32_t v = get_u32le(p);
    p += 4;
    left -= 4;
    return v;
  }
  const unsigned char* bytes(std::size_t n) {
    if (left < n) throw DataError("truncated checkpoint '" + path + "'");
    const unsigned char* q = p;
    p += n;
    left -= n;
    return q;
  }
};

}  // namespace

void save_checkpoint(const WeightStore<float>& store, const std::string& path) {
  std::vector<unsigned char> out;
  out.insert(out.end(), {'I', 'D', 'C', 'G'});
  put_u32le(out, kCheckpointVersion);
  put_u32le(out, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    put_u32le(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32le(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put_u32le(out, static_cast<std::uint32_t>(d));
    const std::size_t payload = static_cast<std::size_t>(t.size()) * 4;
    const std::size_t at = out.size();
    out.resize(at + payload);
    static_assert(sizeof(float) == 4);
    std::memcpy(out.data() + at, t.data.data(), payload);  // little-endian host
  }
  const std::uint32_t crc =
      static_cast<std::uint32_t>(crc32(0, out.data(), static_cast<uInt>(out.size())));
  put_u32le(out, crc);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write checkpoint '" + path + "'");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed for checkpoint '" + path + "'");
}

WeightStore<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16) throw DataError("truncated checkpoint '" + path + "'");

  const std::uint32_t stored_crc = get_u32le(bytes.data() + bytes.size() - 4);
  const std::uint32_t crc = static_cast<std::uint32_t>(
      crc32(0, bytes.data(), static_cast<uInt>(bytes.size() - 4)));
  if (crc != stored_crc) throw DataError("checkpoint CRC mismatch in '" + path + "'");

  Reader r{bytes.data(), bytes.size() - 4, path};
  const unsigned char* magic = r.bytes(4);
  if (std::memcmp(magic, "IDCG", 4) != 0) throw DataError("bad checkpoint magic in '" + path + "'");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint version mismatch in '" + path + "': file has " +
                    std::to_string(version) + ", this build reads " +
                    std::to_string(kCheckpointVersion));
  }
  const std::uint32_t count = r.u32();
  WeightStore<float> store;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const unsigned char* name_bytes = r.bytes(name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const std::uint32_t rank = r.u32();
    Shape shape;
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::int64_t>(r.u32()));
      n *= shape.back();
    }
    Tensor<float> t = Tensor<float>::zeros(shape);
    const unsigned char* payload = r.bytes(static_cast<std::size_t>(n) * 4);
    std::memcpy(t.data.data(), payload, static_cast<std::size_t>(n) * 4);
    if (!store.emplace(std::move(name), std::move(t)).second) {
      throw DataError("duplicate tensor name in checkpoint '" + path + "'");
    }
  }
  if (r.left != 0) throw DataError("trailing bytes in checkpoint '" + path + "'");
  return store;
}

}  // namespace idcgan
