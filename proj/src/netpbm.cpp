#include "ssdas/netpbm.hpp"

#include <cstdio>
#include <memory>

#include "ssdas/errors.hpp"

namespace ssdas {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::vector<std::uint8_t> slurp(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open: " + path);
  std::fseek(f.get(), 0, SEEK_END);
  const long size = std::ftell(f.get());
  std::fseek(f.get(), 0, SEEK_SET);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  if (size > 0 && std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
    throw DataError("read failed: " + path);
  return buf;
}

class HeaderParser {
 public:
  HeaderParser(const std::string& path, const std::vector<std::uint8_t>& buf)
      : path_(path), buf_(buf) {}

  void expect_magic(char c0, char c1) {
    if (buf_.size() < 2 || buf_[0] != static_cast<std::uint8_t>(c0) ||
        buf_[1] != static_cast<std::uint8_t>(c1))
      throw FormatError(path_, 0, std::string("expected magic '") + c0 + c1 + "'");
    pos_ = 2;
  }

  // Whitespace and '#'-to-end-of-line comments between tokens.
  int next_int() {
    skip_separators();
    if (pos_ >= buf_.size()) throw FormatError(path_, pos_, "unexpected end of header");
    if (!is_digit(buf_[pos_])) throw FormatError(path_, pos_, "expected an integer");
    long v = 0;
    while (pos_ < buf_.size() && is_digit(buf_[pos_])) {
      v = v * 10 + (buf_[pos_] - '0');
      if (v > 1'000'000'000) throw FormatError(path_, pos_, "integer too large");
      ++pos_;
    }
    return static_cast<int>(v);
  }

  // Exactly one whitespace byte separates the maxval from the payload.
  std::size_t payload_offset() {
    if (pos_ >= buf_.size() || !is_space(buf_[pos_]))
      throw FormatError(path_, pos_, "expected single whitespace before payload");
    return pos_ + 1;
  }

 private:
  static bool is_space(std::uint8_t c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  }
  static bool is_digit(std::uint8_t c) { return c >= '0' && c <= '9'; }

  void skip_separators() {
    while (pos_ < buf_.size()) {
      if (is_space(buf_[pos_])) {
        ++pos_;
      } else if (buf_[pos_] == '#') {
        while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& path_;
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
};

void write_binary(const std::string& path, const char* magic, int w, int h,
                  const std::vector<std::uint8_t>& payload) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot open for writing: " + path);
  if (std::fprintf(f.get(), "%s\n%d %d\n255\n", magic, w, h) < 0 ||
      std::fwrite(payload.data(), 1, payload.size(), f.get()) != payload.size())
    throw DataError("write failed: " + path);
}

std::vector<std::uint8_t> parse_payload(const std::string& path, const char* magic, int channels,
                                        int* out_h, int* out_w) {
  const auto buf = slurp(path);
  HeaderParser hp(path, buf);
  hp.expect_magic(magic[0], magic[1]);
  const int w = hp.next_int();
  const int h = hp.next_int();
  const int maxval = hp.next_int();
  if (w <= 0 || h <= 0) throw FormatError(path, 2, "non-positive dimensions");
  if (maxval != 255) throw FormatError(path, 2, "unsupported maxval (must be 255)");
  const std::size_t start = hp.payload_offset();
  const std::size_t expect = static_cast<std::size_t>(w) * h * channels;
  if (buf.size() - start < expect)
    throw FormatError(path, buf.size(), "truncated payload: expected " + std::to_string(expect) +
                                            " bytes, got " + std::to_string(buf.size() - start));
  *out_h = h;
  *out_w = w;
  return {buf.begin() + static_cast<std::ptrdiff_t>(start),
          buf.begin() + static_cast<std::ptrdiff_t>(start + expect)};
}

}  // namespace

void write_ppm(const std::string& path, const RawImage& img) {
  write_binary(path, "P6", img.w, img.h, img.rgb);
}

RawImage read_ppm(const std::string& path) {
  RawImage img;
  img.rgb = parse_payload(path, "P6", 3, &img.h, &img.w);
  return img;
}

void write_pgm(const std::string& path, const RawMask& mask) {
  write_binary(path, "P5", mask.w, mask.h, mask.cls);
}

RawMask read_pgm(const std::string& path) {
  RawMask mask;
  mask.cls = parse_payload(path, "P5", 1, &mask.h, &mask.w);
  return mask;
}

}  // namespace ssdas
