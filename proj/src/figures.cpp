#include "vidup/figures.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "vidup/errors.hpp"
#include "vidup/io.hpp"

namespace vidup::fig {

Image::Image(int w, int h, Rgb fill) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {
  if (w < 1 || h < 1) throw ConfigError("image: width and height must be >= 1");
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill.r;
    pixels[i + 1] = fill.g;
    pixels[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  pixels[i] = c.r;
  pixels[i + 1] = c.g;
  pixels[i + 2] = c.b;
}

namespace {

void on_png_error(png_structp, png_const_charp msg) { throw Error(std::string("png: ") + msg); }
void on_png_warning(png_structp, png_const_charp) {}

void append_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), n);
}

struct ReadCursor {
  const std::string* bytes;
  std::size_t pos = 0;
};

void read_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->pos + n > cur->bytes->size()) png_error(png, "truncated stream");
  std::memcpy(data, cur->bytes->data() + cur->pos, n);
  cur->pos += n;
}

}  // namespace

std::string encode_png(const Image& img) {
  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  if (!png) throw Error("png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  try {
    if (!info) throw Error("png: cannot create info");
    png_set_write_fn(png, &out, append_bytes, nullptr);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
      png_write_row(png, img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3);
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_png(const std::filesystem::path& path, const Image& img) { io::atomic_write(path, encode_png(img)); }

Image decode_png(const std::string& bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, on_png_error, on_png_warning);
  if (!png) throw Error("png: cannot create reader");
  png_infop info = png_create_info_struct(png);
  Image img;
  try {
    if (!info) throw Error("png: cannot create info");
    ReadCursor cur{&bytes};
    png_set_read_fn(png, &cur, read_bytes);
    png_read_info(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8) {
      throw Error("png: only 8-bit RGB images are supported");
    }
    img = Image(static_cast<int>(png_get_image_width(png, info)), static_cast<int>(png_get_image_height(png, info)));
    for (int y = 0; y < img.height; ++y) {
      png_read_row(png, img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3, nullptr);
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

Rgb diverging(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.5, 0.0, 1.0);
  const auto mix = [](double a, double b, double s) { return static_cast<std::uint8_t>(std::lround(a + (b - a) * s)); };
  if (t < 0.5) {
    const double s = t / 0.5;
    return {mix(33, 255, s), mix(102, 255, s), mix(172, 255, s)};
  }
  const double s = (t - 0.5) / 0.5;
  return {mix(255, 178, s), mix(255, 24, s), mix(255, 43, s)};
}

Image heatmap(const std::vector<double>& values, int rows, int cols, double lo, double hi, int cell) {
  if (rows < 1 || cols < 1 || values.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeError("heatmap: value count does not match rows x cols");
  }
  if (!(hi > lo) || cell < 1) throw ConfigError("heatmap: need hi > lo and cell >= 1");
  Image img(cols * cell, rows * cell);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const Rgb col = diverging((values[static_cast<std::size_t>(r) * cols + c] - lo) / (hi - lo));
      for (int y = 0; y < cell; ++y) {
        for (int x = 0; x < cell; ++x) img.set(c * cell + x, r * cell + y, col);
      }
    }
  }
  return img;
}

namespace {

void draw_line(Image& img, int x0, int y0, int x1, int y1, Rgb c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    img.set(x0, y0, c);
    img.set(x0, y0 + 1, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) err += dy, x0 += sx;
    if (e2 <= dx) err += dx, y0 += sy;
  }
}

constexpr std::array<Rgb, 6> kSeriesColours{
    Rgb{31, 119, 180}, Rgb{214, 39, 40}, Rgb{44, 160, 44}, Rgb{255, 127, 14}, Rgb{148, 103, 189}, Rgb{23, 190, 207}};

}  // namespace

Image line_plot(const std::vector<std::vector<double>>& series, double ymin, double ymax, int width, int height) {
  if (!(ymax > ymin)) throw ConfigError("line_plot: need ymax > ymin");
  if (width < 64 || height < 64) throw ConfigError("line_plot: image too small");
  Image img(width, height);
  const int left = 24, right = width - 12, top = 12, bottom = height - 24;
  const Rgb grid{220, 220, 220}, frame{60, 60, 60};
  for (int q = 1; q < 4; ++q) {
    const int y = bottom - (bottom - top) * q / 4;
    draw_line(img, left, y, right, y, grid);
  }
  draw_line(img, left, top, right, top, frame);
  draw_line(img, left, bottom, right, bottom, frame);
  draw_line(img, left, top, left, bottom, frame);
  draw_line(img, right, top, right, bottom, frame);

  const auto px = [&](std::size_t i, std::size_t n) {
    return n < 2 ? (left + right) / 2 : left + static_cast<int>(std::lround(double(right - left) * i / (n - 1)));
  };
  const auto py = [&](double v) {
    const double t = std::clamp((v - ymin) / (ymax - ymin), 0.0, 1.0);
    return bottom - static_cast<int>(std::lround((bottom - top) * t));
  };
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& v = series[s];
    const Rgb c = kSeriesColours[s % kSeriesColours.size()];
    for (std::size_t i = 0; i < v.size(); ++i) {
      const int x = px(i, v.size()), y = py(v[i]);
      if (i > 0) draw_line(img, px(i - 1, v.size()), py(v[i - 1]), x, y, c);
      for (int d = -2; d <= 2; ++d) img.set(x + d, y, c), img.set(x, y + d, c);
    }
  }
  return img;
}

Image perturbation_strip(const PerturbationClip& p, float xi, int scale) {
  if (p.values.rank() != 4) throw ShapeError("perturbation_strip: expected [w, H, W, C]");
  if (scale < 1) throw ConfigError("perturbation_strip: scale must be >= 1");
  const int w = p.values.dim(0), H = p.values.dim(1), W = p.values.dim(2), C = p.values.dim(3);
  Image img(w * (W * scale + 1) - 1, H * scale, Rgb{0, 0, 0});
  for (int f = 0; f < w; ++f) {
    const auto s = p.values.slice(f);
    const auto rgb8 = perturbation_to_rgb8(Tensor({H, W, C}, std::vector<float>(s.begin(), s.end())), xi);
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t i = (static_cast<std::size_t>(y) * W + x) * C;
        // Single-channel frames are rendered grey; extra channels beyond 3 are dropped.
        const Rgb c{rgb8[i], rgb8[i + (C > 1 ? 1 : 0)], rgb8[i + (C > 2 ? 2 : 0)]};
        for (int sy = 0; sy < scale; ++sy) {
          for (int sx = 0; sx < scale; ++sx) img.set(f * (W * scale + 1) + x * scale + sx, y * scale + sy, c);
        }
      }
    }
  }
  return img;
}

}  // namespace vidup::fig
