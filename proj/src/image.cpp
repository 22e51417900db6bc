#include "mpsplat/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace mpsplat {

namespace {
uint8_t to_byte(double v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}
}  // namespace

ImageF to_gray(const ImageRgb& img) {
  ImageF out(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i) {
    const Rgb& c = img.data[i];
    out.data[i] = (c[0] + c[1] + c[2]) / 3.0;
  }
  return out;
}

void write_ppm(const std::string& path, const ImageRgb& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (const Rgb& c : img.data) {
    const uint8_t px[3] = {to_byte(c[0]), to_byte(c[1]), to_byte(c[2])};
    f.write(reinterpret_cast<const char*>(px), 3);
  }
}

ImageRgb read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  int w, h, maxval;
  f >> magic >> w >> h >> maxval;
  if (magic != "P6" || maxval != 255) throw std::runtime_error("unsupported PPM: " + path);
  f.get();
  ImageRgb img(w, h);
  for (Rgb& c : img.data) {
    uint8_t px[3];
    f.read(reinterpret_cast<char*>(px), 3);
    c = {px[0] / 255.0, px[1] / 255.0, px[2] / 255.0};
  }
  return img;
}

void write_pgm16(const std::string& path, const ImageF& depth_m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "P5\n" << depth_m.width << " " << depth_m.height << "\n65535\n";
  for (double d : depth_m.data) {
    const uint32_t mm = static_cast<uint32_t>(
        std::clamp(std::lround(d * 1000.0), long(0), long(65535)));
    const uint8_t px[2] = {uint8_t(mm >> 8), uint8_t(mm & 0xff)};  // big-endian per Netpbm
    f.write(reinterpret_cast<const char*>(px), 2);
  }
}

ImageF read_pgm16(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  int w, h, maxval;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 65535) throw std::runtime_error("unsupported PGM: " + path);
  f.get();
  ImageF img(w, h);
  for (double& d : img.data) {
    uint8_t px[2];
    f.read(reinterpret_cast<char*>(px), 2);
    d = double((uint32_t(px[0]) << 8) | px[1]) / 1000.0;
  }
  return img;
}

}  // namespace mpsplat
