#pragma once
// Image and label file I/O. Grayscale images are 8-bit binary PGM or 8-bit
// grayscale PNG; label maps are 8-bit single-channel PNG with class index =
// pixel value (255 reserved as the optional ignore label). The PNG codec is
// a deliberately small subset: bit depth 8, color types 0 and 2, no
// interlacing — enough to read back everything this project writes.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "apnet/tensor.hpp"

namespace apnet {

struct ImageU8 {
  int h = 0, w = 0, channels = 1;
  std::vector<std::uint8_t> pix;  // row-major, interleaved channels

  ImageU8() = default;
  ImageU8(int h_, int w_, int c_, std::uint8_t fill = 0)
      : h(h_), w(w_), channels(c_),
        pix(static_cast<std::size_t>(h_) * w_ * c_, fill) {}

  std::uint8_t& at(int y, int x, int c = 0) {
    return pix[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pix[(static_cast<std::size_t>(y) * w + x) * channels + c];
  }
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(is)),
                                std::istreambuf_iterator<char>());
  return buf;
}

inline void write_file(const std::string& path,
                       const std::vector<std::uint8_t>& buf) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("write failed for " + path);
}

inline void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 24));
  v.push_back(static_cast<std::uint8_t>(x >> 16));
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

inline std::uint32_t be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

constexpr std::uint8_t kPngSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

inline void push_chunk(std::vector<std::uint8_t>& out, const char type[4],
                       const std::vector<std::uint8_t>& data) {
  push_be32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0, out.data() + crc_start,
                         static_cast<uInt>(out.size() - crc_start));
  push_be32(out, static_cast<std::uint32_t>(crc));
}

inline int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PGM (binary P5)
// ---------------------------------------------------------------------------

inline void save_pgm(const std::string& path, const ImageU8& img) {
  if (img.channels != 1) throw ArgumentError("save_pgm: grayscale only");
  std::vector<std::uint8_t> out;
  const std::string head = "P5\n" + std::to_string(img.w) + " " +
                           std::to_string(img.h) + "\n255\n";
  out.insert(out.end(), head.begin(), head.end());
  out.insert(out.end(), img.pix.begin(), img.pix.end());
  detail::write_file(path, out);
}

inline ImageU8 load_pgm(const std::string& path) {
  const auto buf = detail::read_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < buf.size()) {
      if (std::isspace(buf[pos])) {
        ++pos;
      } else if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
    std::string tok;
    while (pos < buf.size() && !std::isspace(buf[pos])) tok += buf[pos++];
    return tok;
  };
  if (next_token() != "P5") throw IoError("not a binary PGM: " + path);
  ImageU8 img;
  try {
    img.w = std::stoi(next_token());
    img.h = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval != 255) throw IoError("PGM maxval must be 255: " + path);
  } catch (const std::logic_error&) {
    throw IoError("malformed PGM header: " + path);
  }
  if (img.w < 1 || img.h < 1) throw IoError("bad PGM dimensions: " + path);
  ++pos;  // single whitespace after maxval
  const std::size_t need = static_cast<std::size_t>(img.w) * img.h;
  if (buf.size() - pos < need)
    throw IoError("truncated PGM pixel data: " + path);
  img.channels = 1;
  img.pix.assign(buf.begin() + pos, buf.begin() + pos + need);
  return img;
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

inline void save_png(const std::string& path, const ImageU8& img) {
  if (img.channels != 1 && img.channels != 3)
    throw ArgumentError("save_png: 1 or 3 channels only");
  const int bpp = img.channels;
  std::vector<std::uint8_t> out(detail::kPngSig, detail::kPngSig + 8);

  std::vector<std::uint8_t> ihdr;
  detail::push_be32(ihdr, static_cast<std::uint32_t>(img.w));
  detail::push_be32(ihdr, static_cast<std::uint32_t>(img.h));
  ihdr.push_back(8);                                   // bit depth
  ihdr.push_back(img.channels == 1 ? 0 : 2);           // gray / RGB
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  detail::push_chunk(out, "IHDR", ihdr);

  // filter byte 0 per scanline
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.h) * (img.w * bpp + 1));
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);
    const std::uint8_t* row = &img.pix[static_cast<std::size_t>(y) * img.w * bpp];
    raw.insert(raw.end(), row, row + static_cast<std::size_t>(img.w) * bpp);
  }
  uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> zbuf(zlen);
  if (compress2(zbuf.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()),
                6) != Z_OK)
    throw IoError("PNG deflate failed for " + path);
  zbuf.resize(zlen);
  detail::push_chunk(out, "IDAT", zbuf);
  detail::push_chunk(out, "IEND", {});
  detail::write_file(path, out);
}

inline ImageU8 load_png(const std::string& path) {
  const auto buf = detail::read_file(path);
  if (buf.size() < 8 || std::memcmp(buf.data(), detail::kPngSig, 8) != 0)
    throw IoError("not a PNG file: " + path);

  ImageU8 img;
  int bpp = 0;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  bool saw_end = false;
  while (pos + 8 <= buf.size() && !saw_end) {
    const std::uint32_t len = detail::be32(&buf[pos]);
    if (pos + 12 + len > buf.size())
      throw IoError("truncated PNG chunk in " + path);
    const char* type = reinterpret_cast<const char*>(&buf[pos + 4]);
    const std::uint8_t* data = &buf[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw IoError("bad IHDR in " + path);
      img.w = static_cast<int>(detail::be32(data));
      img.h = static_cast<int>(detail::be32(data + 4));
      const int depth = data[8], color = data[9], interlace = data[12];
      if (depth != 8) throw IoError("unsupported PNG bit depth in " + path);
      if (color != 0 && color != 2)
        throw IoError("unsupported PNG color type in " + path);
      if (interlace != 0) throw IoError("interlaced PNG unsupported: " + path);
      img.channels = color == 0 ? 1 : 3;
      bpp = img.channels;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_end = true;
    }
    pos += 12 + len;
  }
  if (img.w < 1 || img.h < 1 || !bpp || idat.empty() || !saw_end)
    throw IoError("malformed PNG: " + path);

  const std::size_t stride = static_cast<std::size_t>(img.w) * bpp;
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.h) * (stride + 1));
  uLongf rawlen = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &rawlen, idat.data(),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      rawlen != raw.size())
    throw IoError("PNG inflate failed for " + path);

  img.pix.assign(static_cast<std::size_t>(img.h) * stride, 0);
  std::vector<std::uint8_t> prev(stride, 0);
  for (int y = 0; y < img.h; ++y) {
    const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
    const std::uint8_t* src = &raw[static_cast<std::size_t>(y) * (stride + 1) + 1];
    std::uint8_t* dst = &img.pix[static_cast<std::size_t>(y) * stride];
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
      const int b = prev[i];
      const int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += detail::paeth(a, b, c); break;
        default:
          throw IoError("unknown PNG filter type in " + path);
      }
      dst[i] = static_cast<std::uint8_t>(v & 0xff);
    }
    std::copy(dst, dst + stride, prev.begin());
  }
  return img;
}

// ---------------------------------------------------------------------------
// Dispatch + label helpers
// ---------------------------------------------------------------------------

inline ImageU8 load_image(const std::string& path) {
  const auto buf = detail::read_file(path);
  if (buf.size() >= 8 && std::memcmp(buf.data(), detail::kPngSig, 8) == 0)
    return load_png(path);
  if (buf.size() >= 2 && buf[0] == 'P' && buf[1] == '5') return load_pgm(path);
  throw IoError("unrecognized image format: " + path);
}

inline void save_label_png(const std::string& path, const LabelMap& lm) {
  ImageU8 img(lm.h, lm.w, 1);
  img.pix = lm.ids;
  save_png(path, img);
}

inline LabelMap load_label(const std::string& path) {
  const ImageU8 img = load_image(path);
  if (img.channels != 1)
    throw DataError("label file must be single-channel: " + path);
  LabelMap lm(img.h, img.w);
  lm.ids = img.pix;
  return lm;
}

// u8 image -> float-class tensor in [0, 1]
template <typename T>
Tensor4<T> image_to_tensor(const ImageU8& img) {
  Tensor4<T> t(1, img.channels, img.h, img.w);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x)
        t.at(0, c, y, x) = static_cast<T>(img.at(y, x, c)) / T(255);
  return t;
}

template <typename T>
ImageU8 tensor_to_image(const Tensor4<T>& t) {
  ImageU8 img(t.h, t.w, t.c);
  for (int c = 0; c < t.c; ++c)
    for (int y = 0; y < t.h; ++y)
      for (int x = 0; x < t.w; ++x) {
        const double v = std::min(std::max(static_cast<double>(t.at(0, c, y, x)),
                                           0.0), 1.0);
        img.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

// Fixed 256-entry class palette (bit-reversal construction): entry k takes
// bit j of channel {r,g,b} from bits 3j, 3j+1, 3j+2 of k, high bits first.
struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

inline Rgb class_color(int id) {
  Rgb c;
  int v = id & 0xff;
  for (int j = 0; v && j < 8; ++j) {
    c.r |= static_cast<std::uint8_t>(((v >> 0) & 1) << (7 - j));
    c.g |= static_cast<std::uint8_t>(((v >> 1) & 1) << (7 - j));
    c.b |= static_cast<std::uint8_t>(((v >> 2) & 1) << (7 - j));
    v >>= 3;
  }
  return c;
}

// 50/50 blend of the class color over the grayscale image; background class 0
// keeps the plain image.
inline ImageU8 overlay_labels(const ImageU8& gray, const LabelMap& lm) {
  if (gray.channels != 1 || gray.h != lm.h || gray.w != lm.w)
    throw ArgumentError("overlay_labels: need matching grayscale image");
  ImageU8 out(lm.h, lm.w, 3);
  for (int y = 0; y < lm.h; ++y)
    for (int x = 0; x < lm.w; ++x) {
      const std::uint8_t g = gray.at(y, x);
      const int id = lm.at(y, x);
      if (id == 0) {
        out.at(y, x, 0) = out.at(y, x, 1) = out.at(y, x, 2) = g;
      } else {
        const Rgb c = class_color(id);
        out.at(y, x, 0) = static_cast<std::uint8_t>((g + c.r) / 2);
        out.at(y, x, 1) = static_cast<std::uint8_t>((g + c.g) / 2);
        out.at(y, x, 2) = static_cast<std::uint8_t>((g + c.b) / 2);
      }
    }
  return out;
}

}  // namespace apnet
