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


#include "uncertseg/postprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace uncertseg {

namespace {

std::pair<std::size_t, std::size_t> map_dims(const Tensor& t, const char* op) {
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  if (t.rank() == 3 && t.dim(0) == 1) return {t.dim(1), t.dim(2)};
  throw std::invalid_argument(std::string(op) + ": expected [H,W] or [1,H,W], got " +
                              shape_str(t.shape()));
}

void require_unit_range(const Tensor& t, const char* op) {
  for (float v : t.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw std::domain_error(std::string(op) + ": probability outside [0,1]");
    }
  }
}

}  // namespace

std::size_t SegmentationMask::count() const {
  return static_cast<std::size_t>(std::count(pixels.begin(), pixels.end(), std::uint8_t{1}));
}

SegmentationMask mask_from_tensor(const Tensor& t) {
  const auto [h, w] = map_dims(t, "mask_from_tensor");
  SegmentationMask m{h, w, std::vector<std::uint8_t>(h * w), 0.5f, false};
  for (std::size_t i = 0; i < t.size(); ++i) m.pixels[i] = t[i] > 0.5f ? 1 : 0;
  return m;
}

Tensor mask_to_tensor(const SegmentationMask& m) {
  Tensor t({m.height, m.width});
  for (std::size_t i = 0; i < m.pixels.size(); ++i) t[i] = m.pixels[i];
  return t;
}

int otsu_bin(float v) {
  const auto b = static_cast<int>(std::ceil(static_cast<double>(v) * kOtsuBins)) - 1;
  return std::clamp(b, 0, kOtsuBins - 1);
}

SegmentationMask threshold_mask(const Tensor& prob, float threshold) {
  const auto [h, w] = map_dims(prob, "threshold_mask");
  SegmentationMask m{h, w, std::vector<std::uint8_t>(h * w), threshold, false};
  for (std::size_t i = 0; i < prob.size(); ++i) m.pixels[i] = prob[i] > threshold ? 1 : 0;
  return m;
}

SegmentationMask otsu_threshold(const Tensor& prob) {
  const auto [h, w] = map_dims(prob, "otsu_threshold");
  require_unit_range(prob, "otsu_threshold");
  // keeps the 128-bit cross products below overflow
  if (prob.size() > (std::size_t{1} << 19)) {
    throw std::invalid_argument("otsu_threshold: map larger than 2^19 pixels");
  }
  std::array<std::int64_t, kOtsuBins> hist{};
  for (float v : prob.data()) ++hist[otsu_bin(v)];

  using i128 = __int128;
  const std::int64_t total_n = static_cast<std::int64_t>(prob.size());
  std::int64_t total_s = 0;
  for (int k = 0; k < kOtsuBins; ++k) total_s += hist[k] * k;

  // Between-class variance for the cut after bin k is proportional to
  // (S0*n1 - S1*n0)^2 / (n0*n1); candidates are compared by cross-multiplying.
  int best_k = -1;
  i128 best_num = 0, best_den = 1;
  std::int64_t n0 = 0, s0 = 0;
  for (int k = 0; k < kOtsuBins - 1; ++k) {
    n0 += hist[k];
    s0 += hist[k] * k;
    const std::int64_t n1 = total_n - n0, s1 = total_s - s0;
    if (n0 == 0 || n1 == 0) continue;
    const i128 diff = static_cast<i128>(s0) * n1 - static_cast<i128>(s1) * n0;
    const i128 num = diff * diff;
    const i128 den = static_cast<i128>(n0) * n1;
    if (best_k < 0 || num * best_den > best_num * den) {
      best_k = k;
      best_num = num;
      best_den = den;
    }
  }
  if (best_k < 0 || best_num == 0) {
    SegmentationMask m{h, w, std::vector<std::uint8_t>(h * w, 0), 0.0f, true};
    double sum = 0.0;
    for (float v : prob.data()) sum += v;
    m.threshold = prob.size() ? static_cast<float>(sum / static_cast<double>(prob.size())) : 0.0f;
    return m;
  }
  SegmentationMask m{h, w, std::vector<std::uint8_t>(h * w), 0.0f, false};
  for (std::size_t i = 0; i < prob.size(); ++i) m.pixels[i] = otsu_bin(prob[i]) > best_k ? 1 : 0;
  m.threshold = static_cast<float>(best_k + 1) / static_cast<float>(kOtsuBins);
  return m;
}

std::vector<float> disruption_scores(const Tensor& prob) {
  const auto [h, w] = map_dims(prob, "disruption_scores");
  std::vector<float> col_max(w, 0.0f);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) col_max[c] = std::max(col_max[c], prob[r * w + c]);
  }
  std::vector<float> scores(w);
  for (std::size_t c = 0; c < w; ++c) scores[c] = 1.0f - col_max[c];
  return scores;
}

std::vector<std::uint8_t> disruption_labels(const SegmentationMask& truth) {
  std::vector<std::uint8_t> labels(truth.width, 1);
  for (std::size_t r = 0; r < truth.height; ++r) {
    for (std::size_t c = 0; c < truth.width; ++c) {
      if (truth.at(r, c)) labels[c] = 0;
    }
  }
  return labels;
}

}  // namespace uncertseg
