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
#include <span>
#include <string>
#include <vector>

#include "uncertseg/postprocess.hpp"
#include "uncertseg/tensor.hpp"

namespace uncertseg {

/// 2|A n B| / (|A| + |B|); two empty masks score 1.0.
double dice(const SegmentationMask& pred, const SegmentationMask& truth);

/// Overlap counts that can be pooled over many B-scans before forming Dice.
struct DiceCounts {
  std::uint64_t intersection = 0;
  std::uint64_t pred = 0;
  std::uint64_t truth = 0;

  void add(const SegmentationMask& pred, const SegmentationMask& truth);
  double value() const;
};

struct PrPoint {
  double recall;
  double precision;
  float threshold;  // scores >= threshold are called positive
};

struct PrCurve {
  std::vector<PrPoint> points;  // one per distinct score, descending threshold
};

struct PrResult {
  PrCurve curve;
  double average_precision = 0.0;
};

/// Precision/recall sweep over every distinct score (ties form one block)
/// and its area as average precision: sum_i (R_i - R_{i-1}) * P_i.
/// Throws std::invalid_argument when no label is positive.
PrResult pr_auc(std::span<const float> scores, std::span<const std::uint8_t> labels);

struct ScoredColumns {
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
};

/// Pools A-scans from every entry and computes average precision with
/// disrupted (label 1) as the positive class.
double disruption_auc(std::span<const ScoredColumns> entries);

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares y = slope*x + intercept. Constant x throws;
/// constant y gives r_squared = 0.
RegressionFit linear_fit(std::span<const double> x, std::span<const double> y);

/// Model output and ground truth for one volume; tensors are [B,H,W].
struct VolumeOutcome {
  std::string id;
  Tensor mean_prob;
  Tensor epistemic_std;
  Tensor truth;
};

struct VolumeScore {
  std::string id;
  double dice = 0.0;
  double mean_uncertainty = 0.0;
};

struct EvalReport {
  std::vector<VolumeScore> volumes;
  double photoreceptor_auc = 0.0;
  double disruption_auc = 0.0;
  double dice_mean = 0.0;
  double dice_std = 0.0;  // sample standard deviation across volumes
  RegressionFit dice_vs_uncertainty;  // x = mean uncertainty, y = Dice
  bool has_fit = false;

  /// key=value lines in fixed order followed by nothing else.
  std::string to_text() const;
  /// CSV: id,dice,mean_uncertainty
  std::string volumes_csv() const;
  /// Scatter of (mean uncertainty, Dice) with the OLS line.
  std::string scatter_svg(const std::string& title) const;
};

/// Dice per volume on per-B-scan Otsu masks pooled over the volume,
/// photoreceptor AUC over all pixels of all volumes, disruption AUC over all
/// A-scans, mean uncertainty per volume and the Dice-vs-uncertainty fit
/// (omitted when fewer than two volumes or constant uncertainty).
EvalReport evaluate(std::span<const VolumeOutcome> outcomes);

}  // namespace uncertseg
