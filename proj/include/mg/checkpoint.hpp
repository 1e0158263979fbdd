#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mg {

/// Named double tensors with explicit shapes; the unit of model persistence.
struct TensorEntry {
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

using Checkpoint = std::map<std::string, TensorEntry>;

/// Flat little-endian binary layout, bit-exact on round trip:
///   bytes 0..7   magic "MGTENS\r\n"
///   u32          version (currently 1)
///   u32          tensor count
///   per tensor (in map order, i.e. sorted by name):
///     u32 name length, name bytes,
///     u32 rank, u64 dims[rank],
///     f64 data[prod(dims)] as raw IEEE-754 bytes.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

/// Throws ParseError (see mg/pgm.hpp) on malformed files.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mg
