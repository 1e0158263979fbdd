#include "mg/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace mg {

namespace {

constexpr long long kMaxDim = 1 << 15;        // per-axis sanity bound
constexpr long long kMaxPixels = 1LL << 26;   // total sanity bound

bool is_pnm_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

class Cursor {
 public:
  Cursor(const std::string& bytes, const std::string& name) : bytes_(bytes), name_(name) {}

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(name_ + ": " + message, pos_);
  }

  /// Skip whitespace and '#' comments (to end of line), header style.
  void skip_separators() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (is_pnm_space(c)) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  long long integer(const char* what, long long max_value) {
    skip_separators();
    if (pos_ >= bytes_.size()) fail(std::string("unexpected end of file before ") + what);
    if (bytes_[pos_] < '0' || bytes_[pos_] > '9') {
      fail(std::string("expected digit for ") + what);
    }
    long long value = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > max_value) fail(std::string(what) + " exceeds limit");
      ++pos_;
    }
    return value;
  }

  char take() {
    if (pos_ >= bytes_.size()) fail("unexpected end of file");
    return bytes_[pos_++];
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& bytes() const { return bytes_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  const std::string& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

Image parse_pgm(const std::string& bytes, const std::string& name) {
  Cursor cur(bytes, name);
  if (cur.remaining() < 2) cur.fail("missing magic number");
  const char m0 = cur.take();
  const char m1 = cur.take();
  if (m0 != 'P' || (m1 != '2' && m1 != '5')) {
    throw ParseError(name + ": unsupported magic (want P2 or P5)", 0);
  }
  const bool binary = m1 == '5';

  const long long width = cur.integer("width", kMaxDim);
  const long long height = cur.integer("height", kMaxDim);
  if (width < 1 || height < 1) cur.fail("dimensions must be >= 1");
  if (width * height > kMaxPixels) cur.fail("image too large");
  const long long maxval = cur.integer("maxval", 1LL << 20);
  if (maxval < 1 || maxval > 65535) cur.fail("maxval must be in [1, 65535]");

  Image img(static_cast<int>(height), static_cast<int>(width));
  const double inv_maxval = 1.0 / static_cast<double>(maxval);

  if (binary) {
    // Exactly one whitespace byte separates the header from the raster.
    const char sep = cur.take();
    if (!is_pnm_space(sep)) cur.fail("expected single whitespace before raster");
    const std::size_t sample_size = maxval > 255 ? 2 : 1;
    const std::size_t need = static_cast<std::size_t>(width * height) * sample_size;
    if (cur.remaining() < need) cur.fail("truncated raster payload");
    const std::string& buf = cur.bytes();
    std::size_t p = cur.pos();
    for (double& v : img.data) {
      unsigned value = static_cast<unsigned char>(buf[p]);
      if (sample_size == 2) {
        value = (value << 8) | static_cast<unsigned char>(buf[p + 1]);  // big-endian
      }
      if (value > static_cast<unsigned>(maxval)) {
        throw ParseError(name + ": sample exceeds maxval", p);
      }
      v = value * inv_maxval;
      p += sample_size;
    }
    cur.advance(need);
    if (cur.remaining() != 0) cur.fail("trailing bytes after raster");
  } else {
    for (double& v : img.data) {
      const long long value = cur.integer("sample", 65535);
      if (value > maxval) cur.fail("sample exceeds maxval");
      v = value * inv_maxval;
    }
    cur.skip_separators();
    if (cur.remaining() != 0) cur.fail("trailing data after last sample");
  }
  return img;
}

Image read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_pgm: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_pgm(bytes, path);
}

std::string encode_pgm(const Image& img, int maxval, bool binary) {
  if (maxval < 1 || maxval > 65535) {
    throw std::invalid_argument("encode_pgm: maxval must be in [1, 65535]");
  }
  std::string out = binary ? "P5\n" : "P2\n";
  out += std::to_string(img.width) + " " + std::to_string(img.height) + "\n";
  out += std::to_string(maxval) + "\n";

  auto quantize = [maxval](double v) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned>(std::lround(clamped * maxval));
  };

  if (binary) {
    const bool wide = maxval > 255;
    out.reserve(out.size() + img.data.size() * (wide ? 2 : 1));
    for (double v : img.data) {
      const unsigned q = quantize(v);
      if (wide) out.push_back(static_cast<char>((q >> 8) & 0xFF));
      out.push_back(static_cast<char>(q & 0xFF));
    }
  } else {
    int on_line = 0;
    for (std::size_t n = 0; n < img.data.size(); ++n) {
      out += std::to_string(quantize(img.data[n]));
      // Keep lines short per the format's 70-character guidance.
      if (++on_line == 12 || n + 1 == img.data.size()) {
        out.push_back('\n');
        on_line = 0;
      } else {
        out.push_back(' ');
      }
    }
  }
  return out;
}

void write_pgm(const Image& img, const std::string& path, int maxval, bool binary) {
  const std::string bytes = encode_pgm(img, maxval, binary);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("write_pgm: cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_pgm: write failed for '" + path + "'");
}

}  // namespace mg
