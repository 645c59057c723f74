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
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "uncertseg/rng.hpp"
#include "uncertseg/tensor.hpp"

namespace uncertseg {

enum class Disease { DME, RVO, EarlyAMD, LateAMDGA };

std::string to_string(Disease d);
Disease parse_disease(const std::string& name);
inline constexpr Disease kAllDiseases[] = {Disease::DME, Disease::RVO, Disease::EarlyAMD,
                                           Disease::LateAMDGA};

/// Rendering parameters for one synthetic OCT volume. Rates are expected
/// fractions of A-scans; run lengths are mean contiguous run sizes in
/// columns (geometric lengths).
struct GeneratorParams {
  std::size_t bscans = 49;
  std::size_t height = 128;
  std::size_t width = 128;
  /// Band thickness bounds as fractions of the image height.
  double thickness_min = 0.05;
  double thickness_max = 0.09;
  double disruption_rate = 0.05;
  double disruption_mean_run = 6.0;
  double shadow_rate = 0.06;
  double shadow_mean_run = 3.0;
  /// Multiplicative speckle standard deviation.
  double noise_level = 0.25;
  /// Softness (pixels) of the band's upper and lower intensity edges.
  double edge_softness = 0.7;
  /// Mean number of cyst-like dark blobs per B-scan (DME/RVO style).
  double cysts_per_bscan = 0.0;
  /// Fraction of the en-face area covered by a band-loss (atrophy) patch.
  double atrophy_fraction = 0.0;
  /// Count shadow columns as disruptions (mask removed) instead of keeping
  /// the layer under them.
  bool shadows_as_disruptions = false;
  Disease disease = Disease::DME;

  void validate() const;
};

struct Volume {
  std::string id;
  Disease disease = Disease::DME;
  double severity = 0.0;
  std::uint64_t seed = 0;
  Tensor bscans;  // [B,H,W] in [0,1]
  Tensor masks;   // [B,H,W] 0/1
  /// Ground-truth disrupted A-scans per B-scan (1 = no layer in column).
  std::vector<std::vector<std::uint8_t>> disrupted_columns;
  /// Columns darkened by a vessel shadow, per B-scan.
  std::vector<std::vector<std::uint8_t>> shadow_columns;

  std::size_t count() const { return bscans.empty() ? 0 : bscans.dim(0); }
  /// B-scan `i` as [H,W] copies.
  Tensor bscan(std::size_t i) const;
  Tensor mask(std::size_t i) const;
};

/// Two-state Markov run process over `length` columns with stationary
/// on-fraction `rate` and mean on-run `mean_run`; the first column is drawn
/// from the stationary distribution, so every column is on with
/// probability exactly `rate`.
std::vector<std::uint8_t> sample_runs(std::size_t length, double rate, double mean_run, Rng& rng);

/// Renders a volume: a bright photoreceptor band with smoothly varying depth
/// and thickness, removed over disrupted column runs (and atrophy patches),
/// vertical shadow stripes that darken but keep the layer, cyst-like dark
/// blobs above the band, and multiplicative speckle. Deterministic per
/// seed. Throws std::invalid_argument for a disruption rate >= 1 or
/// geometry not divisible by 16.
Volume generate_volume(const GeneratorParams& params, std::uint64_t seed,
                       const std::string& id = "vol");

/// Disease-dependent parameters at a given severity in [0,1]; higher
/// severity means more noise, softer edges, more disruptions/shadows.
GeneratorParams params_for(Disease disease, double severity, std::size_t height,
                           std::size_t width, std::size_t bscans = 49);

struct CorpusConfig {
  std::size_t volumes = 60;
  std::size_t height = 128;
  std::size_t width = 128;
  std::size_t bscans = 49;
  std::uint64_t seed = 7;
  bool shadows_as_disruptions = false;
};

/// Per-disease volume counts: one sixth late AMD (GA), the rest split
/// 16:24:10 between DME, RVO and early AMD (60 -> 16/24/10/10).
std::map<Disease, std::size_t> corpus_disease_counts(std::size_t volumes);

/// Generates the corpus; volume i gets seed Rng::derive(config.seed, i) and
/// a severity drawn from that seed.
std::vector<Volume> generate_corpus(const CorpusConfig& config, int threads = 1);

struct SplitCounts {
  std::size_t train = 31;
  std::size_t val = 4;
  std::size_t testA = 15;
  std::size_t testB = 10;

  /// The 31/4/15 proportions rescaled to `non_ga` volumes, testB = `ga`.
  static SplitCounts scaled(std::size_t non_ga, std::size_t ga);
};

struct VolumeInfo {
  std::string id;
  Disease disease = Disease::DME;
};

struct SplitManifest {
  std::vector<std::string> train, val, testA, testB;

  const std::vector<std::string>& split(const std::string& name) const;
  /// Per-split disease counts, keyed by split name.
  std::map<std::string, std::map<Disease, std::size_t>> proportions(
      const std::vector<VolumeInfo>& volumes) const;

  std::string to_text(const std::vector<VolumeInfo>& volumes) const;
  static SplitManifest parse(const std::string& text);
};

/// Stratified assignment: testB takes late-AMD (GA) volumes only; the other
/// diseases are spread over train/val/testA in proportion to the split
/// sizes (controlled rounding, every cell within +-1 of its quota).
/// Throws when there are not enough volumes.
SplitManifest make_splits(const std::vector<VolumeInfo>& volumes, const SplitCounts& counts,
                          Rng& rng);

// ------------------------------------------------------------ dataset I/O

/// Writes <dir>/<id>_image.tnsr, <id>_mask.tnsr for each volume, plus
/// volumes.tsv (id, disease, severity, seed).
void save_volumes(const std::filesystem::path& dir, const std::vector<Volume>& volumes);
std::vector<VolumeInfo> load_volume_index(const std::filesystem::path& dir);
/// Loads image and mask for one id; disrupted columns are rebuilt from the
/// mask.
Volume load_volume(const std::filesystem::path& dir, const std::string& id);

}  // namespace uncertseg
