#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ssdas {

struct RawImage {
  int h = 0, w = 0;
  std::vector<std::uint8_t> rgb;  // h*w*3, row-major, interleaved
};

struct RawMask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> cls;  // h*w, pixel value = class index
};

// Binary netpbm: images as P6 (8-bit RGB), masks as P5 (8-bit grey).
// Readers accept arbitrary whitespace and '#' comments in the header and
// require maxval 255; malformed or truncated files raise FormatError with the
// offending byte offset.
void write_ppm(const std::string& path, const RawImage& img);
RawImage read_ppm(const std::string& path);
void write_pgm(const std::string& path, const RawMask& mask);
RawMask read_pgm(const std::string& path);

}  // namespace ssdas
