#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mpsplat {

template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), data(size_t(w) * h, fill) {}

  T& at(int x, int y) { return data[size_t(y) * width + x]; }
  const T& at(int x, int y) const { return data[size_t(y) * width + x]; }
  bool empty() const { return data.empty(); }
};

using Rgb = std::array<double, 3>;  // components in [0,1]
using ImageRgb = Image<Rgb>;
using ImageF = Image<double>;
using Bitmap = Image<uint8_t>;

ImageF to_gray(const ImageRgb& img);

// Binary PPM (P6), 8 bits per channel.
void write_ppm(const std::string& path, const ImageRgb& img);
ImageRgb read_ppm(const std::string& path);

// Binary 16-bit PGM (P5); depth stored in millimeters.
void write_pgm16(const std::string& path, const ImageF& depth_m);
ImageF read_pgm16(const std::string& path);

}  // namespace mpsplat
