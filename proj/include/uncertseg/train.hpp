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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "uncertseg/data.hpp"
#include "uncertseg/model.hpp"

namespace uncertseg {

struct TrainConfig {
  Variant variant = Variant::U2Net;
  /// Channels of the first encoder block; 64 is the published plan.
  std::size_t base_width = 64;
  float lr0 = 1e-4f;
  std::size_t batch_size = 2;
  float weight_decay = 5e-4f;
  int max_epochs = 160;
  int plateau_window = 15;
  double plateau_min_improvement = 1e-4;
  float lr_factor = 0.5f;
  std::uint64_t seed = 1;
  /// Aleatoric noise draws per step (BU-Net only).
  int noise_samples = 10;

  void validate() const;
  ArchitectureSpec architecture() const { return ArchitectureSpec::make(variant, base_width); }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_dice;
  std::vector<float> lr;  // rate used during each epoch
  int best_epoch = -1;    // argmax val_dice, first on ties

  std::size_t epochs() const { return val_dice.size(); }
  /// epoch,loss,val_dice,lr
  std::string to_csv() const;
};

/// Learning rate for the next epoch. Once `plateau_window` epochs have run
/// at the current rate (and at least one epoch precedes the window), the
/// rate is multiplied by lr_factor when
///   max(val_dice over the window) - max(val_dice before the window)
/// is below plateau_min_improvement. The window restarts after a reduction.
float plateau_scheduler(const TrainHistory& history, const TrainConfig& config);

/// Produces the foreground probability map [H,W] for B-scan `index` of a
/// volume.
using ProbabilityFn = std::function<Tensor(const Volume&, std::size_t index)>;

/// Mean over volumes of volume-level Dice (per-B-scan Otsu masks, counts
/// pooled over the volume).
double validation_dice(const ProbabilityFn& predict, std::span<const Volume> volumes);

/// Eval-mode variant; the network's mode is restored afterwards.
double validation_dice(Network& net, std::span<const Volume> volumes);

struct EpochSummary {
  int epoch;
  double train_loss;
  double val_dice;
  float lr;
  bool best;
};

struct TrainResult {
  Network best;
  Network last;
  TrainHistory history;
};

/// Mini-batch training over shuffled B-scans with Adam, plateau LR schedule
/// and best-validation-Dice model selection. Throws std::domain_error when
/// the loss becomes non-finite.
TrainResult train(const TrainConfig& config, std::span<const Volume> train_set,
                  std::span<const Volume> val_set,
                  const std::function<void(const EpochSummary&)>& on_epoch = {});

/// One optimizer step on a batch; returns the loss before the update.
/// Exposed for tests of single-step behaviour.
double train_step(Network& net, const Tensor& images, const Tensor& targets,
                  const TrainConfig& config, float lr, long step, Rng& dropout_rng,
                  Rng& noise_rng);

}  // namespace uncertseg
