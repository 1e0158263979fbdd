#include "mg/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "mg/errors.hpp"

namespace mg {

namespace {

constexpr char kMagic[8] = {'M', 'G', 'T', 'E', 'N', 'S', '\r', '\n'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kMaxElements = 1ULL << 28;  // 2 GiB of doubles, sanity bound

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  std::uint32_t u32() {
    need(4, "u32");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + i]);
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8, "u64");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + i]);
    pos_ += 8;
    return v;
  }

  std::string str(std::uint32_t n) {
    need(n, "string");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void raw_doubles(std::vector<double>& out, std::uint64_t count) {
    need(count * sizeof(double), "tensor payload");
    out.resize(count);
    std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
  }

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

  void need(std::uint64_t n, const char* what) {
    if (pos_ + n > bytes_.size()) {
      throw ParseError(path_ + ": truncated checkpoint while reading " + std::string(what), pos_);
    }
  }

 private:
  const std::string& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.size()));
  for (const auto& [name, tensor] : ckpt) {
    std::uint64_t count = 1;
    for (std::uint64_t d : tensor.shape) count *= d;
    if (count != tensor.data.size()) {
      throw std::invalid_argument("save_checkpoint: tensor '" + name +
                                  "' shape does not match data size");
    }
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<std::uint32_t>(tensor.shape.size()));
    for (std::uint64_t d : tensor.shape) put_u64(out, d);
    const std::size_t base = out.size();
    out.resize(base + tensor.data.size() * sizeof(double));
    std::memcpy(out.data() + base, tensor.data.data(), tensor.data.size() * sizeof(double));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r(bytes, path);
  r.need(sizeof(kMagic), "magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path + ": bad checkpoint magic", 0);
  }
  r.str(sizeof(kMagic));
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version),
                     r.pos() - 4);
  }
  const std::uint32_t count = r.u32();

  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw ParseError(path + ": implausible tensor rank", r.pos() - 4);
    TensorEntry tensor;
    std::uint64_t elems = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint64_t d = r.u64();
      tensor.shape.push_back(d);
      if (d == 0 || elems > kMaxElements / std::max<std::uint64_t>(d, 1)) {
        throw ParseError(path + ": implausible tensor shape", r.pos() - 8);
      }
      elems *= d;
    }
    r.raw_doubles(tensor.data, elems);
    if (!ckpt.emplace(name, std::move(tensor)).second) {
      throw ParseError(path + ": duplicate tensor name '" + name + "'", r.pos());
    }
  }
  if (!r.at_end()) {
    throw ParseError(path + ": trailing bytes after last tensor", r.pos());
  }
  return ckpt;
}

}  // namespace mg
