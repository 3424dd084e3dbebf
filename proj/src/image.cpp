#include "celiac/image.hpp"

#include <png.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "celiac/util.hpp"

namespace celiac {

Image Image::filled(int width, int height, std::uint8_t r, std::uint8_t g,
                    std::uint8_t b) {
  Image img;
  img.width = width;
  img.height = height;
  img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

namespace {

struct PngReadHandle {
  FILE* file = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;

  ~PngReadHandle() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (file) std::fclose(file);
  }
};

// Opens the file and configures transforms so rows come out as 8-bit RGB.
void png_begin_read(PngReadHandle& h, const std::filesystem::path& path) {
  h.file = std::fopen(path.string().c_str(), "rb");
  if (!h.file) throw PipelineError("file not found: " + path.string());
  h.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!h.png) throw PipelineError("libpng init failed");
  h.info = png_create_info_struct(h.png);
  if (!h.info) throw PipelineError("libpng init failed");
  if (setjmp(png_jmpbuf(h.png)))
    throw PipelineError("corrupt image data: " + path.string());
  png_init_io(h.png, h.file);
  png_read_info(h.png, h.info);

  png_set_palette_to_rgb(h.png);
  png_set_expand_gray_1_2_4_to_8(h.png);
  if (png_get_valid(h.png, h.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(h.png);
  png_set_strip_16(h.png);
  png_set_strip_alpha(h.png);
  png_set_gray_to_rgb(h.png);
  png_read_update_info(h.png, h.info);
  if (png_get_channels(h.png, h.info) != 3)
    throw PipelineError("unsupported PNG channel layout: " + path.string());
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  PngReadHandle h;
  png_begin_read(h, path);
  if (setjmp(png_jmpbuf(h.png)))
    throw PipelineError("corrupt image data: " + path.string());

  Image img;
  img.width = static_cast<int>(png_get_image_width(h.png, h.info));
  img.height = static_cast<int>(png_get_image_height(h.png, h.info));
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] = img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3;
  png_read_image(h.png, rows.data());
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  FILE* file = std::fopen(tmp.string().c_str(), "wb");
  if (!file) throw PipelineError("cannot open for writing: " + tmp.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(file);
    throw PipelineError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(file);
    std::filesystem::remove(tmp);
    throw PipelineError("PNG write failed: " + path.string());
  }
  png_init_io(png, file);
  png_set_compression_level(png, 1);  // patch volumes dominate; favor speed
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y)
    png_write_row(png, const_cast<png_bytep>(img.pixel(0, y)));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(file);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw PipelineError("rename failed: " + path.string());
  }
}

// ---------------------------------------------------------------------------
// TIFF (single level, stripped, 8-bit RGB, compression none/deflate)
// ---------------------------------------------------------------------------

namespace {

struct TiffInfo {
  bool little_endian = true;
  int width = 0;
  int height = 0;
  int rows_per_strip = 0;
  int compression = 1;
  int predictor = 1;
  std::vector<std::uint64_t> strip_offsets;
  std::vector<std::uint64_t> strip_counts;
};

class ByteReader {
 public:
  ByteReader(std::istream& in, bool little) : in_(in), little_(little) {}

  void seek(std::uint64_t pos) { in_.seekg(static_cast<std::streamoff>(pos)); }
  std::uint16_t u16() {
    std::uint8_t b[2];
    read(b, 2);
    return little_ ? static_cast<std::uint16_t>(b[0] | (b[1] << 8))
                   : static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  std::uint32_t u32() {
    std::uint8_t b[4];
    read(b, 4);
    if (little_)
      return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
             (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
  }
  void read(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw PipelineError("corrupt image data: truncated TIFF");
  }

 private:
  std::istream& in_;
  bool little_;
};

TiffInfo parse_tiff_info(std::istream& in) {
  in.seekg(0);
  char magic[4];
  in.read(magic, 4);
  if (!in) throw PipelineError("corrupt image data: not a TIFF");
  bool little;
  if (magic[0] == 'I' && magic[1] == 'I')
    little = true;
  else if (magic[0] == 'M' && magic[1] == 'M')
    little = false;
  else
    throw PipelineError("corrupt image data: not a TIFF");

  ByteReader r(in, little);
  r.seek(2);
  if (r.u16() != 42) throw PipelineError("corrupt image data: bad TIFF magic");
  const std::uint32_t ifd_offset = r.u32();
  r.seek(ifd_offset);
  const int n_entries = r.u16();

  TiffInfo info;
  info.little_endian = little;
  int bits_ok = 0, photometric = 2, spp = 3, planar = 1;

  struct Entry {
    std::uint16_t tag, type;
    std::uint32_t count, value_or_offset;
    std::uint32_t inline_pos;  // file position of the value field
  };
  std::vector<Entry> entries;
  std::uint32_t pos = ifd_offset + 2;
  for (int i = 0; i < n_entries; ++i) {
    r.seek(pos);
    Entry e;
    e.tag = r.u16();
    e.type = r.u16();
    e.count = r.u32();
    e.inline_pos = pos + 8;
    e.value_or_offset = r.u32();
    entries.push_back(e);
    pos += 12;
  }

  auto type_size = [](std::uint16_t t) -> std::uint32_t {
    switch (t) {
      case 1: return 1;  // BYTE
      case 3: return 2;  // SHORT
      case 4: return 4;  // LONG
      default: return 0;
    }
  };
  auto read_values = [&](const Entry& e) {
    std::vector<std::uint64_t> vals;
    const std::uint32_t sz = type_size(e.type);
    if (sz == 0) throw PipelineError("unsupported TIFF field type");
    const std::uint64_t total = static_cast<std::uint64_t>(sz) * e.count;
    const std::uint64_t at = total <= 4 ? e.inline_pos : e.value_or_offset;
    r.seek(at);
    for (std::uint32_t i = 0; i < e.count; ++i) {
      if (sz == 1) {
        std::uint8_t b;
        r.read(&b, 1);
        vals.push_back(b);
      } else if (sz == 2) {
        vals.push_back(r.u16());
      } else {
        vals.push_back(r.u32());
      }
    }
    return vals;
  };

  for (const Entry& e : entries) {
    switch (e.tag) {
      case 256: info.width = static_cast<int>(read_values(e)[0]); break;
      case 257: info.height = static_cast<int>(read_values(e)[0]); break;
      case 258: {
        auto v = read_values(e);
        bits_ok = 1;
        for (auto b : v)
          if (b != 8) bits_ok = 0;
        break;
      }
      case 259: info.compression = static_cast<int>(read_values(e)[0]); break;
      case 262: photometric = static_cast<int>(read_values(e)[0]); break;
      case 273: info.strip_offsets = read_values(e); break;
      case 277: spp = static_cast<int>(read_values(e)[0]); break;
      case 278: info.rows_per_strip = static_cast<int>(read_values(e)[0]); break;
      case 279: info.strip_counts = read_values(e); break;
      case 284: planar = static_cast<int>(read_values(e)[0]); break;
      case 317: info.predictor = static_cast<int>(read_values(e)[0]); break;
      default: break;  // ignore unknown tags
    }
  }

  if (info.width <= 0 || info.height <= 0)
    throw PipelineError("corrupt image data: TIFF missing dimensions");
  if (!bits_ok || spp != 3)
    throw PipelineError("unsupported TIFF: expected 8-bit RGB");
  if (photometric != 2) throw PipelineError("unsupported TIFF: expected RGB photometric");
  if (planar != 1) throw PipelineError("unsupported TIFF: planar configuration");
  // 8 = zlib deflate, 32946 = legacy deflate code
  if (info.compression != 1 && info.compression != 8 && info.compression != 32946)
    throw PipelineError("unsupported TIFF compression (only none/deflate)");
  if (info.predictor != 1 && info.predictor != 2)
    throw PipelineError("unsupported TIFF predictor");
  if (info.rows_per_strip <= 0) info.rows_per_strip = info.height;
  if (info.strip_offsets.empty() || info.strip_offsets.size() != info.strip_counts.size())
    throw PipelineError("corrupt image data: TIFF strip tables");
  return info;
}

std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* src, std::size_t n,
                                       std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf out_len = static_cast<uLongf>(expected);
  const int rc = uncompress(out.data(), &out_len, src, static_cast<uLong>(n));
  if (rc != Z_OK || out_len != expected)
    throw PipelineError("corrupt image data: TIFF deflate strip");
  return out;
}

}  // namespace

class TiffSlideReader final : public SlideReader {
 public:
  TiffSlideReader(const std::filesystem::path& path)
      : in_(path, std::ios::binary) {
    if (!in_) throw PipelineError("file not found: " + path.string());
    info_ = parse_tiff_info(in_);
  }

  int width() const override { return info_.width; }
  int height() const override { return info_.height; }

  void read_row(std::uint8_t* row) override {
    if (next_row_ >= info_.height)
      throw PipelineError("TIFF row read past end of image");
    const int strip = next_row_ / info_.rows_per_strip;
    if (strip != current_strip_) load_strip(strip);
    const int row_in_strip = next_row_ % info_.rows_per_strip;
    const std::size_t stride = static_cast<std::size_t>(info_.width) * 3;
    std::memcpy(row, strip_data_.data() + static_cast<std::size_t>(row_in_strip) * stride,
                stride);
    ++next_row_;
  }

 private:
  void load_strip(int strip) {
    const std::size_t stride = static_cast<std::size_t>(info_.width) * 3;
    const int first_row = strip * info_.rows_per_strip;
    const int rows = std::min(info_.rows_per_strip, info_.height - first_row);
    const std::size_t decoded = static_cast<std::size_t>(rows) * stride;

    in_.clear();
    in_.seekg(static_cast<std::streamoff>(info_.strip_offsets[static_cast<std::size_t>(strip)]));
    std::vector<std::uint8_t> raw(
        static_cast<std::size_t>(info_.strip_counts[static_cast<std::size_t>(strip)]));
    in_.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in_) throw PipelineError("corrupt image data: truncated TIFF strip");

    if (info_.compression == 1) {
      if (raw.size() < decoded) throw PipelineError("corrupt image data: short TIFF strip");
      raw.resize(decoded);
      strip_data_ = std::move(raw);
    } else {
      strip_data_ = zlib_inflate(raw.data(), raw.size(), decoded);
    }
    if (info_.predictor == 2) {
      for (int r = 0; r < rows; ++r) {
        std::uint8_t* p = strip_data_.data() + static_cast<std::size_t>(r) * stride;
        for (std::size_t i = 3; i < stride; ++i)
          p[i] = static_cast<std::uint8_t>(p[i] + p[i - 3]);
      }
    }
    current_strip_ = strip;
  }

  std::ifstream in_;
  TiffInfo info_;
  int current_strip_ = -1;
  int next_row_ = 0;
  std::vector<std::uint8_t> strip_data_;
};

Image read_tiff(const std::filesystem::path& path) {
  TiffSlideReader reader(path);
  Image img;
  img.width = reader.width();
  img.height = reader.height();
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) reader.read_row(img.pixel(0, y));
  return img;
}

void write_tiff(const std::filesystem::path& path, const Image& img, bool deflate) {
  const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
  const int rows_per_strip = std::max(1, std::min(img.height, 128));
  const int n_strips = (img.height + rows_per_strip - 1) / rows_per_strip;

  std::vector<std::vector<std::uint8_t>> strips;
  for (int s = 0; s < n_strips; ++s) {
    const int first = s * rows_per_strip;
    const int rows = std::min(rows_per_strip, img.height - first);
    const std::uint8_t* src = img.pixel(0, first);
    const std::size_t n = static_cast<std::size_t>(rows) * stride;
    if (!deflate) {
      strips.emplace_back(src, src + n);
    } else {
      uLongf bound = compressBound(static_cast<uLong>(n));
      std::vector<std::uint8_t> out(bound);
      if (compress2(out.data(), &bound, src, static_cast<uLong>(n), 6) != Z_OK)
        throw PipelineError("TIFF deflate failed");
      out.resize(bound);
      strips.push_back(std::move(out));
    }
  }

  std::vector<std::uint8_t> file;
  auto put16 = [&](std::uint16_t v) {
    file.push_back(static_cast<std::uint8_t>(v & 0xFF));
    file.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) file.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  };
  auto pad_even = [&] {
    if (file.size() % 2) file.push_back(0);
  };

  // header, IFD offset patched later
  file.push_back('I');
  file.push_back('I');
  put16(42);
  put32(0);

  std::vector<std::uint32_t> offsets, counts;
  for (const auto& s : strips) {
    pad_even();
    offsets.push_back(static_cast<std::uint32_t>(file.size()));
    counts.push_back(static_cast<std::uint32_t>(s.size()));
    file.insert(file.end(), s.begin(), s.end());
  }

  pad_even();
  const std::uint32_t bits_at = static_cast<std::uint32_t>(file.size());
  put16(8);
  put16(8);
  put16(8);

  std::uint32_t offsets_at = 0, counts_at = 0;
  if (n_strips > 1) {
    pad_even();
    offsets_at = static_cast<std::uint32_t>(file.size());
    for (std::uint32_t v : offsets) put32(v);
    counts_at = static_cast<std::uint32_t>(file.size());
    for (std::uint32_t v : counts) put32(v);
  }

  pad_even();
  const std::uint32_t ifd_at = static_cast<std::uint32_t>(file.size());
  auto entry = [&](std::uint16_t tag, std::uint16_t type, std::uint32_t count,
                   std::uint32_t value) {
    put16(tag);
    put16(type);
    put32(count);
    put32(value);
  };
  put16(10);  // entry count
  entry(256, 4, 1, static_cast<std::uint32_t>(img.width));
  entry(257, 4, 1, static_cast<std::uint32_t>(img.height));
  entry(258, 3, 3, bits_at);
  entry(259, 3, 1, deflate ? 8u : 1u);
  entry(262, 3, 1, 2);
  entry(273, 4, static_cast<std::uint32_t>(n_strips),
        n_strips == 1 ? offsets[0] : offsets_at);
  entry(277, 3, 1, 3);
  entry(278, 4, 1, static_cast<std::uint32_t>(rows_per_strip));
  entry(279, 4, static_cast<std::uint32_t>(n_strips),
        n_strips == 1 ? counts[0] : counts_at);
  entry(284, 3, 1, 1);
  put32(0);  // no next IFD

  // patch header IFD offset
  file[4] = static_cast<std::uint8_t>(ifd_at & 0xFF);
  file[5] = static_cast<std::uint8_t>((ifd_at >> 8) & 0xFF);
  file[6] = static_cast<std::uint8_t>((ifd_at >> 16) & 0xFF);
  file[7] = static_cast<std::uint8_t>((ifd_at >> 24) & 0xFF);

  atomic_write_file(path, file.data(), file.size());
}

// ---------------------------------------------------------------------------
// dispatch + streaming PNG reader
// ---------------------------------------------------------------------------

class PngSlideReader final : public SlideReader {
 public:
  explicit PngSlideReader(const std::filesystem::path& path) : path_(path) {
    png_begin_read(h_, path);
    if (setjmp(png_jmpbuf(h_.png)))
      throw PipelineError("corrupt image data: " + path.string());
    if (png_get_interlace_type(h_.png, h_.info) != PNG_INTERLACE_NONE)
      throw PipelineError("interlaced PNG is not supported for streaming: " + path.string());
    width_ = static_cast<int>(png_get_image_width(h_.png, h_.info));
    height_ = static_cast<int>(png_get_image_height(h_.png, h_.info));
  }

  int width() const override { return width_; }
  int height() const override { return height_; }

  void read_row(std::uint8_t* row) override {
    if (next_row_ >= height_) throw PipelineError("PNG row read past end of image");
    if (setjmp(png_jmpbuf(h_.png)))
      throw PipelineError("corrupt image data: " + path_.string());
    png_read_row(h_.png, row, nullptr);
    ++next_row_;
  }

 private:
  std::filesystem::path path_;
  PngReadHandle h_;
  int width_ = 0, height_ = 0, next_row_ = 0;
};

namespace {

bool has_png_magic(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw PipelineError("file not found: " + path.string());
  unsigned char sig[8] = {0};
  f.read(reinterpret_cast<char*>(sig), 8);
  return !png_sig_cmp(sig, 0, static_cast<std::size_t>(f.gcount()));
}

}  // namespace

std::unique_ptr<SlideReader> SlideReader::open(const std::filesystem::path& path) {
  if (has_png_magic(path)) return std::make_unique<PngSlideReader>(path);
  return std::make_unique<TiffSlideReader>(path);
}

Image read_image(const std::filesystem::path& path) {
  if (has_png_magic(path)) return read_png(path);
  return read_tiff(path);
}

// ---------------------------------------------------------------------------
// resampling and flips
// ---------------------------------------------------------------------------

Image resize_bilinear(const Image& img, int target_w, int target_h) {
  if (target_w < 1 || target_h < 1)
    throw std::invalid_argument("resize_bilinear: target must be >= 1");
  if (target_w == img.width && target_h == img.height) return img;

  Image out;
  out.width = target_w;
  out.height = target_h;
  out.rgb.resize(static_cast<std::size_t>(target_w) * target_h * 3);
  const double sx = static_cast<double>(img.width) / target_w;
  const double sy = static_cast<double>(img.height) / target_h;
  for (int y = 0; y < target_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const std::uint8_t* p00 = img.pixel(x0, y0);
      const std::uint8_t* p10 = img.pixel(x1, y0);
      const std::uint8_t* p01 = img.pixel(x0, y1);
      const std::uint8_t* p11 = img.pixel(x1, y1);
      std::uint8_t* dst = out.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        const double top = p00[c] + (p10[c] - p00[c]) * wx;
        const double bot = p01[c] + (p11[c] - p01[c]) * wx;
        const double v = top + (bot - top) * wy;
        dst[c] = static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
      }
    }
  }
  return out;
}

Image hflip(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      std::memcpy(out.pixel(img.width - 1 - x, y), img.pixel(x, y), 3);
  return out;
}

Image vflip(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height; ++y)
    std::memcpy(out.pixel(0, img.height - 1 - y), img.pixel(0, y),
                static_cast<std::size_t>(img.width) * 3);
  return out;
}

Image rot180(const Image& img) { return hflip(vflip(img)); }

Tensor image_to_tensor(const Image& img) {
  Tensor t({1, 3, img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* p = img.pixel(x, y);
      for (int c = 0; c < 3; ++c) t.at4(0, c, y, x) = p[c] / 255.0;
    }
  return t;
}

Tensor images_to_tensor(const std::vector<Image>& imgs) {
  if (imgs.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const int h = imgs[0].height, w = imgs[0].width;
  Tensor t({static_cast<int>(imgs.size()), 3, h, w});
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    if (imgs[n].width != w || imgs[n].height != h)
      throw std::invalid_argument("images_to_tensor: mixed sizes");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::uint8_t* p = imgs[n].pixel(x, y);
        for (int c = 0; c < 3; ++c) t.at4(static_cast<int>(n), c, y, x) = p[c] / 255.0;
      }
  }
  return t;
}

}  // namespace celiac
