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

#include <cstdint>
#include <vector>

#include "uncertseg/tensor.hpp"

namespace uncertseg {

/// Binary H x W segmentation plus the threshold that produced it.
struct SegmentationMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major, values 0/1
  float threshold = 0.5f;
  /// Set when Otsu had nothing to separate (a single occupied histogram bin).
  bool degenerate = false;

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  std::size_t count() const;
};

/// Interprets a 0/1 tensor ([H,W] or [1,H,W]) as a mask.
SegmentationMask mask_from_tensor(const Tensor& t);
Tensor mask_to_tensor(const SegmentationMask& m);

inline constexpr int kOtsuBins = 256;

/// Histogram bin of a probability: bins are (k/256, (k+1)/256] with 0 in
/// bin 0, so "bin(v) > k" is exactly "v > (k+1)/256".
int otsu_bin(float v);

/// Foreground iff prob > threshold.
SegmentationMask threshold_mask(const Tensor& prob, float threshold);

/// Otsu binarization of a probability map ([H,W] or [1,H,W], values in
/// [0,1]) over a 256-bin histogram. The cut after bin k (threshold
/// (k+1)/256) maximizing between-class variance is chosen, lowest k on
/// ties; comparisons are exact integer arithmetic. A map whose values fall
/// in a single bin yields an all-background mask with threshold = the mean
/// value and degenerate = true.
SegmentationMask otsu_threshold(const Tensor& prob);

/// Per-column (A-scan) layer-interruption score 1 - max_row prob.
std::vector<float> disruption_scores(const Tensor& prob);

/// 1 for columns without any foreground pixel, else 0.
std::vector<std::uint8_t> disruption_labels(const SegmentationMask& truth);

}  // namespace uncertseg
