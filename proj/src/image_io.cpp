#include "idcgan/image_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <vector>

namespace idcgan {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, const unsigned char* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw DataError("write failed for '" + path + "'");
}

unsigned char to_byte(float v) {
  const float clamped = std::min(1.0f, std::max(0.0f, v));
  return static_cast<unsigned char>(std::floor(clamped * 255.0f + 0.5f));
}

Tensor<float> from_rgb_bytes(const unsigned char* px, int h, int w, int channels) {
  Tensor<float> img = Tensor<float>::zeros({3, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (std::int64_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) {
      img.data[c * hw + i] = static_cast<float>(px[i * channels + c]) / 255.0f;
    }
  }
  return img;
}

// --- PPM (P6, maxval 255) ---------------------------------------------------

int ppm_token(const std::vector<unsigned char>& b, std::size_t& pos, const std::string& path) {
  while (pos < b.size()) {
    if (std::isspace(b[pos])) {
      ++pos;
    } else if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos])) throw DataError("malformed PPM header in '" + path + "'");
  int v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) v = v * 10 + (b[pos++] - '0');
  return v;
}

Tensor<float> decode_ppm(const std::vector<unsigned char>& b, const std::string& path) {
  std::size_t pos = 2;
  const int w = ppm_token(b, pos, path);
  const int h = ppm_token(b, pos, path);
  const int maxval = ppm_token(b, pos, path);
  if (maxval != 255) throw DataError("unsupported PPM maxval in '" + path + "' (want 255)");
  if (w <= 0 || h <= 0) throw DataError("bad PPM dimensions in '" + path + "'");
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (b.size() < pos + need) throw DataError("truncated PPM '" + path + "'");
  return from_rgb_bytes(b.data() + pos, h, w, 3);
}

void encode_ppm(const Tensor<float>& img, const std::string& path) {
  const int h = static_cast<int>(img.dim(1)), w = static_cast<int>(img.dim(2));
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<unsigned char> out(header.size() + static_cast<std::size_t>(hw) * 3);
  std::memcpy(out.data(), header.data(), header.size());
  unsigned char* px = out.data() + header.size();
  for (std::int64_t i = 0; i < hw; ++i) {
    for (int c = 0; c < 3; ++c) px[i * 3 + c] = to_byte(img.data[c * hw + i]);
  }
  write_file(path, out.data(), out.size());
}

// --- PNG ---------------------------------------------------------------------

constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

unsigned char paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<unsigned char>(a);
  if (pb <= pc) return static_cast<unsigned char>(b);
  return static_cast<unsigned char>(c);
}

Tensor<float> decode_png(const std::vector<unsigned char>& b, const std::string& path) {
  if (b.size() < 8 + 25 || std::memcmp(b.data(), kPngSig, 8) != 0) {
    throw DataError("not a PNG file: '" + path + "'");
  }
  std::size_t pos = 8;
  int w = 0, h = 0, channels = 0;
  bool have_header = false;
  std::vector<unsigned char> idat;
  while (pos + 8 <= b.size()) {
    const std::uint32_t len = be32(b.data() + pos);
    if (pos + 12 + len > b.size()) throw DataError("truncated PNG '" + path + "'");
    const char* type = reinterpret_cast<const char*>(b.data() + pos + 4);
    const unsigned char* data = b.data() + pos + 8;
    const std::uint32_t stored_crc = be32(b.data() + pos + 8 + len);
    const std::uint32_t crc =
        static_cast<std::uint32_t>(crc32(crc32(0, b.data() + pos + 4, 4), data, len));
    if (crc != stored_crc) throw DataError("PNG chunk CRC mismatch in '" + path + "'");
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw DataError("bad IHDR in '" + path + "'");
      w = static_cast<int>(be32(data));
      h = static_cast<int>(be32(data + 4));
      const int depth = data[8], color = data[9], interlace = data[12];
      if (depth != 8) throw DataError("unsupported PNG bit depth in '" + path + "' (want 8)");
      if (color == 2) channels = 3;
      else if (color == 6) channels = 4;
      else throw DataError("unsupported PNG color type in '" + path + "' (want RGB or RGBA)");
      if (interlace != 0) throw DataError("interlaced PNG not supported: '" + path + "'");
      have_header = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!have_header || idat.empty() || w <= 0 || h <= 0) {
    throw DataError("malformed PNG '" + path + "'");
  }

  const std::size_t stride = static_cast<std::size_t>(w) * channels;
  std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (stride + 1));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  const int rc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
  if (rc != Z_OK || raw_len != raw.size()) throw DataError("corrupt PNG stream in '" + path + "'");

  std::vector<unsigned char> px(static_cast<std::size_t>(h) * stride);
  const int bpp = channels;
  for (int y = 0; y < h; ++y) {
    const unsigned char filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
    const unsigned char* src = raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1;
    unsigned char* cur = px.data() + static_cast<std::size_t>(y) * stride;
    const unsigned char* up = y > 0 ? cur - stride : nullptr;
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = x >= static_cast<std::size_t>(bpp) ? cur[x - bpp] : 0;
      const int bb = up ? up[x] : 0;
      const int c = (up && x >= static_cast<std::size_t>(bpp)) ? up[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += bb; break;
        case 3: v += (a + bb) / 2; break;
        case 4: v += paeth(a, bb, c); break;
        default: throw DataError("bad PNG filter byte in '" + path + "'");
      }
      cur[x] = static_cast<unsigned char>(v);
    }
  }
  return from_rgb_bytes(px.data(), h, w, channels);
}

void encode_png(const Tensor<float>& img, const std::string& path) {
  const int h = static_cast<int>(img.dim(1)), w = static_cast<int>(img.dim(2));
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const std::size_t stride = static_cast<std::size_t>(w) * 3;
  std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (stride + 1));
  for (int y = 0; y < h; ++y) {
    unsigned char* row = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
    row[0] = 0;  // filter: none
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        row[1 + static_cast<std::size_t>(x) * 3 + c] =
            to_byte(img.data[c * hw + static_cast<std::int64_t>(y) * w + x]);
      }
    }
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> z(bound);
  if (compress2(z.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw DataError("PNG compression failed for '" + path + "'");
  }
  z.resize(bound);

  std::vector<unsigned char> out(kPngSig, kPngSig + 8);
  auto chunk = [&out](const char* type, const std::vector<unsigned char>& data) {
    put_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const std::uint32_t crc = static_cast<std::uint32_t>(
        crc32(0, out.data() + start, static_cast<uInt>(out.size() - start)));
    put_be32(out, crc);
  };
  std::vector<unsigned char> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(w));
  put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);  // no interlace
  chunk("IHDR", ihdr);
  chunk("IDAT", z);
  chunk("IEND", {});
  write_file(path, out.data(), out.size());
}

}  // namespace

Tensor<float> decode_image(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes, path);
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) {
    return decode_png(bytes, path);
  }
  throw DataError("unsupported image format: '" + path + "' (want PNG or binary PPM)");
}

void encode_image(const Tensor<float>& img, const std::string& path) {
  expect(img.shape.size() == 3 && img.dim(0) == 3,
         "encode_image: tensor must be [3,H,W], got " + to_string(img.shape));
  const auto dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "ppm") {
    encode_ppm(img, path);
  } else if (ext == "png") {
    encode_png(img, path);
  } else {
    throw DataError("unsupported output extension for '" + path + "' (want .png or .ppm)");
  }
}

Tensor<float> center_crop_square(const Tensor<float>& img) {
  expect(img.shape.size() == 3, "center_crop_square: tensor must be [C,H,W]");
  const int c = static_cast<int>(img.dim(0));
  const int h = static_cast<int>(img.dim(1)), w = static_cast<int>(img.dim(2));
  const int side = std::min(h, w);
  const int oy = (h - side) / 2, ox = (w - side) / 2;
  Tensor<float> out = Tensor<float>::zeros({c, side, side});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < side; ++y) {
      const float* src = img.data.data() + (static_cast<std::int64_t>(ch) * h + oy + y) * w + ox;
      std::copy(src, src + side,
                out.data.data() + (static_cast<std::int64_t>(ch) * side + y) * side);
    }
  }
  return out;
}

Tensor<float> resize_bilinear(const Tensor<float>& img, int oh, int ow) {
  expect(img.shape.size() == 3, "resize_bilinear: tensor must be [C,H,W]");
  expect(oh >= 1 && ow >= 1, "resize_bilinear: bad target size");
  const int c = static_cast<int>(img.dim(0));
  const int h = static_cast<int>(img.dim(1)), w = static_cast<int>(img.dim(2));
  Tensor<float> out = Tensor<float>::zeros({c, oh, ow});
  const double sy = static_cast<double>(h) / oh, sx = static_cast<double>(w) / ow;
  for (int ch = 0; ch < c; ++ch) {
    const float* src = img.data.data() + static_cast<std::int64_t>(ch) * h * w;
    float* dst = out.data.data() + static_cast<std::int64_t>(ch) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const double fy = std::min(std::max((y + 0.5) * sy - 0.5, 0.0), h - 1.0);
      const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int x = 0; x < ow; ++x) {
        const double fx = std::min(std::max((x + 0.5) * sx - 0.5, 0.0), w - 1.0);
        const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        const double v = (1 - wy) * ((1 - wx) * src[static_cast<std::int64_t>(y0) * w + x0] +
                                     wx * src[static_cast<std::int64_t>(y0) * w + x1]) +
                         wy * ((1 - wx) * src[static_cast<std::int64_t>(y1) * w + x0] +
                               wx * src[static_cast<std::int64_t>(y1) * w + x1]);
        dst[static_cast<std::int64_t>(y) * ow + x] = static_cast<float>(v);
      }
    }
  }
  return out;
}

}  // namespace idcgan
