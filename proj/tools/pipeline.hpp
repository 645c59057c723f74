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

// Split-level inference helpers shared by the command-line tool and the
// acceptance suite.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uncertseg/bayes.hpp"
#include "uncertseg/data.hpp"
#include "uncertseg/metrics.hpp"
#include "uncertseg/model.hpp"

namespace uncertseg {

/// FNV-1a over the bytes of a volume id.
std::uint64_t id_hash(const std::string& id);

/// MC seed for B-scan `index` of volume `id`. Keyed by id rather than by
/// position so a volume gets the same samples whatever split it sits in.
std::uint64_t mc_seed(std::uint64_t seed, const std::string& id, std::size_t index);

/// How a split is pushed through a network.
struct InferenceConfig {
  int T = 10;
  /// Deterministic Eval-mode forward pass instead of MC sampling. The
  /// uncertainty maps are then all zero.
  bool eval_mode = false;
  std::uint64_t seed = 1;
  int threads = 1;
};

/// Per-volume stacked [B,H,W] mean probability and epistemic std, with the
/// ground-truth masks attached. The network is copied; its mode is not
/// touched.
std::vector<VolumeOutcome> infer_split(const Network& net, std::span<const Volume> volumes,
                                       const InferenceConfig& config);

struct SweepRow {
  int T;
  EvalReport report;
};

/// One MC run per B-scan of max(Ts) samples, evaluated after each count in
/// Ts. Row k matches evaluate(infer_split(net, volumes, {Ts[k], ...})).
std::vector<SweepRow> sweep_T(const Network& net, std::span<const Volume> volumes,
                              std::span<const int> Ts, std::uint64_t seed, int threads = 1);

/// T,photoreceptor_auc,disruption_auc,dice_mean
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace uncertseg
