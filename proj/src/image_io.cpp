#include "calcx/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "calcx/error.hpp"

namespace calcx {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void io_fail(const std::filesystem::path& file, const char* what) {
  throw IoError(std::string(what) + ": " + file.string());
}

}  // namespace

Image load_png(const std::filesystem::path& file) {
  FilePtr fp(std::fopen(file.string().c_str(), "rb"));
  if (!fp) io_fail(file, "cannot open PNG");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) io_fail(file, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    io_fail(file, "libpng init failed");
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_fail(file, "PNG decode error");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_byte color_type = png_get_color_type(png, info);
  png_byte bit_depth = png_get_bit_depth(png, info);
  if (color_type != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    io_fail(file, "only grayscale PNG is supported");
  }
  if (bit_depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    bit_depth = 8;
  }
#if __BYTE_ORDER__ == __ORDER_LITTLE_ENDIAN__
  if (bit_depth == 16) png_set_swap(png);
#endif
  png_read_update_info(png, info);

  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * h);
  row_ptrs.resize(h);
  for (int y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + stride * y;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(w, h);
  if (bit_depth == 16) {
    const double inv = 1.0 / 65535.0;
    for (int y = 0; y < h; ++y) {
      const auto* row = reinterpret_cast<const std::uint16_t*>(pixels.data() + stride * y);
      for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<float>(row[x] * inv);
    }
  } else {
    const double inv = 1.0 / 255.0;
    for (int y = 0; y < h; ++y) {
      const png_byte* row = pixels.data() + stride * y;
      for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<float>(row[x] * inv);
    }
  }
  return img;
}

void save_png(const Image& img, const std::filesystem::path& file, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ValueError("save_png: bit depth must be 8 or 16");
  FilePtr fp(std::fopen(file.string().c_str(), "wb"));
  if (!fp) io_fail(file, "cannot create PNG");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) io_fail(file, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    io_fail(file, "libpng init failed");
  }
  const int w = img.width(), h = img.height();
  std::vector<png_byte> pixels;
  std::vector<png_bytep> row_ptrs(h);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    io_fail(file, "PNG encode error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
#if __BYTE_ORDER__ == __ORDER_LITTLE_ENDIAN__
  if (bit_depth == 16) png_set_swap(png);
#endif

  if (bit_depth == 16) {
    pixels.resize(static_cast<std::size_t>(w) * h * 2);
    for (int y = 0; y < h; ++y) {
      auto* row = reinterpret_cast<std::uint16_t*>(pixels.data() + static_cast<std::size_t>(y) * w * 2);
      for (int x = 0; x < w; ++x) {
        const double v = std::clamp(static_cast<double>(img.at(x, y)), 0.0, 1.0);
        row[x] = static_cast<std::uint16_t>(std::floor(v * 65535.0 + 0.5));
      }
      row_ptrs[y] = pixels.data() + static_cast<std::size_t>(y) * w * 2;
    }
  } else {
    pixels.resize(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
      png_byte* row = pixels.data() + static_cast<std::size_t>(y) * w;
      for (int x = 0; x < w; ++x) {
        const double v = std::clamp(static_cast<double>(img.at(x, y)), 0.0, 1.0);
        row[x] = static_cast<png_byte>(std::floor(v * 255.0 + 0.5));
      }
      row_ptrs[y] = row;
    }
  }
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image load_pgm(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) io_fail(file, "cannot open PGM");
  auto next_token = [&in]() {
    std::string tok;
    while (in) {
      int c = in.get();
      if (c == '#') {  // comment to end of line
        while (in && in.get() != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      if (c == EOF) break;
      tok.push_back(static_cast<char>(c));
    }
    return tok;
  };
  if (next_token() != "P5") io_fail(file, "not a binary PGM (P5)");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const long maxval = std::stol(next_token());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) io_fail(file, "bad PGM header");

  Image img(w, h);
  const double inv = 1.0 / static_cast<double>(maxval);
  if (maxval < 256) {
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) io_fail(file, "truncated PGM");
    for (std::size_t i = 0; i < buf.size(); ++i) img.data()[i] = static_cast<float>(buf[i] * inv);
  } else {
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 2);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) io_fail(file, "truncated PGM");
    for (std::size_t i = 0; i < buf.size() / 2; ++i) {
      const unsigned v = (static_cast<unsigned>(buf[2 * i]) << 8) | buf[2 * i + 1];  // big-endian
      img.data()[i] = static_cast<float>(v * inv);
    }
  }
  return img;
}

Image load_image(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) io_fail(file, "cannot open image");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  in.close();
  if (magic[0] == 'P' && magic[1] == '5') return load_pgm(file);
  return load_png(file);
}

Mask mask_from_image(const Image& img, float threshold) {
  Mask m(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i) m.bits()[i] = img.data()[i] > threshold ? 1 : 0;
  return m;
}

Image mask_to_image(const Mask& mask) {
  Image img(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.size(); ++i) img.data()[i] = mask.bits()[i] ? 1.0f : 0.0f;
  return img;
}

}  // namespace calcx
