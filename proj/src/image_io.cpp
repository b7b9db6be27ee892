#include "decloss/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace decloss {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& why) {
  throw IoError(path + ": " + why);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) fail(path, std::strcmp(mode, "rb") == 0 ? "cannot open for reading" : "cannot open for writing");
  return f;
}

// Interleaved 8-bit rows -> [3 x H x W] doubles in [0, 1]. channels is the
// source count (1 or 3); gray replicates into all three output planes.
Tensor planes_from_rows(const std::vector<std::vector<png_byte>>& rows, Index h,
                        Index w, int channels) {
  std::vector<double> v(static_cast<std::size_t>(3 * h * w));
  for (Index y = 0; y < h; ++y) {
    const png_byte* row = rows[static_cast<std::size_t>(y)].data();
    for (Index x = 0; x < w; ++x) {
      for (Index c = 0; c < 3; ++c) {
        const png_byte b = row[x * channels + (channels == 3 ? c : 0)];
        v[static_cast<std::size_t>((c * h + y) * w + x)] = static_cast<double>(b) / 255.0;
      }
    }
  }
  return Tensor::from({3, h, w}, std::move(v));
}

// rows lives in the caller's frame: locals here may be clobbered if libpng
// longjmps, so this frame keeps only pointers assigned before the setjmp.
ImageFile load_png(const std::string& path, std::FILE* f,
                   std::vector<std::vector<png_byte>>& rows,
                   std::vector<png_bytep>& row_ptrs) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(path, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "corrupt PNG stream");
  }
  png_init_io(png, f);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);

  if (depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "16-bit depth not supported (8-bit gray or RGB only)");
  }
  if (color & PNG_COLOR_MASK_ALPHA) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "alpha channel not supported");
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "unsupported channel count " + std::to_string(channels));
  }
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  rows.assign(h, std::vector<png_byte>(rowbytes));
  row_ptrs.assign(h, nullptr);
  for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = rows[y].data();
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  ImageFile img;
  img.pixels = planes_from_rows(rows, static_cast<Index>(h), static_cast<Index>(w), channels);
  img.path = path;
  img.bit_depth = 8;
  return img;
}

// Reads one netpbm header token, skipping whitespace and '#' comments.
std::string pnm_token(const std::string& path, std::FILE* f) {
  std::string tok;
  int ch = std::fgetc(f);
  while (ch != EOF) {
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = std::fgetc(f);
    } else if (std::isspace(ch)) {
      if (!tok.empty()) break;
    } else {
      tok.push_back(static_cast<char>(ch));
    }
    if (ch != EOF) ch = std::fgetc(f);
  }
  if (tok.empty()) fail(path, "truncated header");
  return tok;
}

Index pnm_number(const std::string& path, std::FILE* f) {
  const std::string tok = pnm_token(path, f);
  Index value = 0;
  for (char c : tok) {
    if (c < '0' || c > '9') fail(path, "malformed header token '" + tok + "'");
    value = value * 10 + (c - '0');
  }
  return value;
}

ImageFile load_pnm(const std::string& path, std::FILE* f, int channels) {
  const Index w = pnm_number(path, f);
  const Index h = pnm_number(path, f);
  const Index maxval = pnm_number(path, f);
  if (w < 1 || h < 1) fail(path, "empty raster");
  if (maxval != 255) fail(path, "maxval " + std::to_string(maxval) + " not supported (255 only)");

  const std::size_t rowbytes = static_cast<std::size_t>(w) * channels;
  std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(h), std::vector<png_byte>(rowbytes));
  for (auto& row : rows) {
    if (std::fread(row.data(), 1, rowbytes, f) != rowbytes) fail(path, "truncated pixel data");
  }

  ImageFile img;
  img.pixels = planes_from_rows(rows, h, w, channels);
  img.path = path;
  img.bit_depth = 8;
  return img;
}

png_byte quantize(double v) {
  const long q = std::lround(v * 255.0);
  return static_cast<png_byte>(q < 0 ? 0 : (q > 255 ? 255 : q));
}

// [C x H x W] doubles -> interleaved 8-bit rows.
std::vector<std::vector<png_byte>> rows_from_planes(const Tensor& image) {
  const Index c = image.extent(0), h = image.extent(1), w = image.extent(2);
  std::span<const double> v = image.values();
  std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(h),
                                          std::vector<png_byte>(static_cast<std::size_t>(w * c)));
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x)
      for (Index ch = 0; ch < c; ++ch)
        rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x * c + ch)] =
            quantize(v[static_cast<std::size_t>((ch * h + y) * w + x)]);
  return rows;
}

void save_png(const Tensor& image, const std::string& path) {
  FilePtr f = open_file(path, "wb");
  const auto rows = rows_from_planes(image);  // before setjmp: no clobber risk
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(path, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(path, "libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "PNG encode failed");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.extent(2)),
               static_cast<png_uint_32>(image.extent(1)), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto& row : rows) png_write_row(png, const_cast<png_bytep>(row.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void save_pnm(const Tensor& image, const std::string& path, const char* magic) {
  FilePtr f = open_file(path, "wb");
  const Index h = image.extent(1), w = image.extent(2);
  std::fprintf(f.get(), "%s\n%lld %lld\n255\n", magic, static_cast<long long>(w),
               static_cast<long long>(h));
  auto rows = rows_from_planes(image);
  for (auto& row : rows) {
    if (std::fwrite(row.data(), 1, row.size(), f.get()) != row.size()) fail(path, "write failed");
  }
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

ImageFile load_image(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char magic[8] = {};
  const std::size_t got = std::fread(magic, 1, sizeof magic, f.get());
  std::rewind(f.get());
  if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) {
    std::vector<std::vector<png_byte>> rows;
    std::vector<png_bytep> row_ptrs;
    return load_png(path, f.get(), rows, row_ptrs);
  }
  if (got >= 2 && magic[0] == 'P' && magic[1] == '6') {
    std::fseek(f.get(), 2, SEEK_SET);
    return load_pnm(path, f.get(), 3);
  }
  if (got >= 2 && magic[0] == 'P' && magic[1] == '5') {
    std::fseek(f.get(), 2, SEEK_SET);
    return load_pnm(path, f.get(), 1);
  }
  fail(path, "unrecognized format (PNG, binary PPM, or binary PGM expected)");
}

void save_image(const Tensor& image, const std::string& path) {
  if (image.rank() != 3) throw ShapeError("save_image: expected [C x H x W], got " + shape_str(image.shape()));
  const Index c = image.extent(0);
  if (ends_with(path, ".pgm")) {
    if (c != 1) throw ShapeError("save_image: .pgm needs 1 channel, got " + std::to_string(c));
    save_pnm(image, path, "P5");
  } else if (ends_with(path, ".ppm")) {
    if (c != 3) throw ShapeError("save_image: .ppm needs 3 channels, got " + std::to_string(c));
    save_pnm(image, path, "P6");
  } else if (ends_with(path, ".png")) {
    if (c != 3) throw ShapeError("save_image: .png needs 3 channels, got " + std::to_string(c));
    save_png(image, path);
  } else {
    fail(path, "unknown output extension (.png, .ppm, or .pgm expected)");
  }
}

}  // namespace decloss
