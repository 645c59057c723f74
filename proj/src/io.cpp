// Copyright 2026 The uncertseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "uncertseg/io.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace uncertseg {

namespace {

constexpr char kMagic[4] = {'T', 'N', 'S', 'R'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() > 255) throw FormatError("tensor rank exceeds 255");
  std::vector<std::uint8_t> out;
  out.reserve(6 + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  out.push_back(kTensorFileVersion);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > UINT32_MAX) throw FormatError("tensor dimension exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 6) throw FormatError("tensor file truncated in header");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("bad tensor file magic (expected TNSR)");
  }
  if (bytes[4] != kTensorFileVersion) {
    throw FormatError("unsupported tensor file version " + std::to_string(bytes[4]));
  }
  const std::size_t ndim = bytes[5];
  std::size_t pos = 6;
  if (bytes.size() < pos + 4 * ndim) throw FormatError("tensor file truncated in dims");
  Shape shape(ndim);
  for (std::size_t i = 0; i < ndim; ++i, pos += 4) shape[i] = get_u32(&bytes[pos]);
  const std::size_t numel = shape_numel(shape);
  const std::size_t remaining = bytes.size() - pos;
  if (remaining != 4 * numel) {
    throw FormatError("tensor payload has " + std::to_string(remaining) + " bytes, dims " +
                      shape_str(shape) + " require " + std::to_string(4 * numel));
  }
  std::vector<float> data(numel);
  for (std::size_t i = 0; i < numel; ++i, pos += 4) {
    data[i] = std::bit_cast<float>(get_u32(&bytes[pos]));
  }
  return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  write_file(path, encode_tensor(t));
}

Tensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

std::vector<std::uint8_t> encode_pgm(const Tensor& image) {
  std::size_t h = 0, w = 0;
  if (image.rank() == 2) {
    h = image.dim(0);
    w = image.dim(1);
  } else if (image.rank() == 3 && image.dim(0) == 1) {
    h = image.dim(1);
    w = image.dim(2);
  } else {
    throw std::invalid_argument("export_pgm: expected [H,W] or [1,H,W], got " +
                                shape_str(image.shape()));
  }
  const std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(header.size() + h * w);
  for (float v : image.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw std::domain_error("export_pgm: value " + std::to_string(v) + " outside [0,1]");
    }
    out.push_back(static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5)));
  }
  return out;
}

void export_pgm(const Tensor& image, const std::filesystem::path& path) {
  write_file(path, encode_pgm(image));
}

PgmImage parse_pgm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto fail = [](const std::string& why) -> FormatError { return FormatError("PGM: " + why); };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw fail("missing P5 magic");
  pos = 2;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("expected whitespace");
    skip_ws();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw fail("expected a number");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      if (v > (1u << 30)) throw fail("number too large");
      ++pos;
    }
    return v;
  };
  PgmImage img;
  img.width = read_uint();
  img.height = read_uint();
  const std::size_t maxval = read_uint();
  if (img.width == 0 || img.height == 0) throw fail("zero dimension");
  if (maxval == 0 || maxval > 255) throw fail("maxval must be in 1..255 for 8-bit data");
  img.maxval = static_cast<unsigned>(maxval);
  // exactly one whitespace byte separates the header from the raster
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("missing raster separator");
  ++pos;
  if (bytes.size() - pos != img.width * img.height) throw fail("raster size mismatch");
  img.pixels.assign(bytes.begin() + static_cast<long>(pos), bytes.end());
  for (auto p : img.pixels) {
    if (p > img.maxval) throw fail("pixel exceeds maxval");
  }
  return img;
}

}  // namespace uncertseg
