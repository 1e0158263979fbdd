#pragma once

#include <string>

#include "mg/errors.hpp"
#include "mg/image.hpp"

namespace mg {

/// Parse a PGM (P2 ASCII or P5 binary) byte buffer. Intensities are mapped to
/// [0, 1] by maxval division; maxval may be anything in [1, 65535], with
/// two-byte big-endian samples above 255. Malformed input throws ParseError
/// with the failing byte offset; no input may crash the parser.
Image parse_pgm(const std::string& bytes, const std::string& name = "<memory>");

Image read_pgm(const std::string& path);

/// Clamp to [0, 1], quantize to round(v * maxval), and write. Binary (P5) by
/// default; maxval must be in [1, 65535].
void write_pgm(const Image& img, const std::string& path, int maxval = 255, bool binary = true);

std::string encode_pgm(const Image& img, int maxval = 255, bool binary = true);

}  // namespace mg
