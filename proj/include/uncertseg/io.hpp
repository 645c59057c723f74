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


#pragma once

// On-disk formats: the TNSR tensor container and binary PGM (P5) images.
//
// TNSR layout (all integers little-endian):
//   bytes 0..3   "TNSR"
//   byte  4      version (1)
//   byte  5      ndim
//   4*ndim bytes dims as u32
//   4*numel      payload, f32 row-major

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "uncertseg/tensor.hpp"

namespace uncertseg {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint8_t kTensorFileVersion = 1;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
/// Throws FormatError on bad magic/version, truncation or trailing bytes.
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// 8-bit P5 PGM; pixel = floor(255*v + 0.5) (round half up). Accepts
/// [H,W] or [1,H,W]. Throws std::domain_error for values outside [0,1].
std::vector<std::uint8_t> encode_pgm(const Tensor& image);
void export_pgm(const Tensor& image, const std::filesystem::path& path);

struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 0;
  std::vector<std::uint8_t> pixels;
};

/// Strict P5 parser (comments allowed in the header, maxval 1..255).
/// Throws FormatError when the bytes are not a valid 8-bit P5 file.
PgmImage parse_pgm(const std::vector<std::uint8_t>& bytes);

}  // namespace uncertseg
