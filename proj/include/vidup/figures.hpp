#pragma once
// Small raster figures (heatmaps, line plots, perturbation strips) written as
// 8-bit RGB PNG. The CSV files remain the authoritative outputs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vidup/perturbgen.hpp"

namespace vidup::fig {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  Image() = default;
  Image(int w, int h, Rgb fill = {255, 255, 255});
  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);  // ignores out-of-range coordinates
};

// PNG bytes in memory, and an atomic file write of the same.
std::string encode_png(const Image& img);
void write_png(const std::filesystem::path& path, const Image& img);
Image decode_png(const std::string& bytes);

// Blue-white-red map of t in [0, 1] (0.5 is white).
Rgb diverging(double t);

// rows x cols matrix, values mapped linearly from [lo, hi]; each entry a cell x cell block.
Image heatmap(const std::vector<double>& values, int rows, int cols, double lo, double hi, int cell = 16);

// Each series is drawn as a polyline over x = 0..n-1 inside a framed plot
// with horizontal grid lines at quarters of [ymin, ymax].
Image line_plot(const std::vector<std::vector<double>>& series, double ymin, double ymax, int width = 480,
                int height = 320);

// Frames side by side with a 1-pixel gap, each pixel upscaled by scale.
Image perturbation_strip(const PerturbationClip& p, float xi, int scale = 4);

}  // namespace vidup::fig
