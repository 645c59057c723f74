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


#include "uncertseg/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "uncertseg/bayes.hpp"
#include "uncertseg/checkpoint.hpp"
#include "uncertseg/metrics.hpp"
#include "uncertseg/postprocess.hpp"

namespace uncertseg {

void TrainConfig::validate() const {
  if (base_width == 0 || !(lr0 > 0.0f) || batch_size == 0 || weight_decay < 0.0f ||
      max_epochs < 1 || plateau_window < 1 || plateau_min_improvement < 0.0 ||
      !(lr_factor > 0.0f && lr_factor <= 1.0f) || noise_samples < 1) {
    throw std::invalid_argument("train config: all hyperparameters must be positive");
  }
}

std::string TrainHistory::to_csv() const {
  std::ostringstream o;
  o << "epoch,loss,val_dice,lr\n";
  for (std::size_t e = 0; e < val_dice.size(); ++e) {
    o << e << ',' << format_double(train_loss[e]) << ',' << format_double(val_dice[e]) << ','
      << format_float(lr[e]) << '\n';
  }
  return o.str();
}

float plateau_scheduler(const TrainHistory& history, const TrainConfig& config) {
  if (history.lr.empty()) return config.lr0;
  if (history.lr.size() != history.val_dice.size()) {
    throw std::invalid_argument("plateau_scheduler: lr and val_dice lengths differ");
  }
  const std::size_t n = history.val_dice.size();
  const float current = history.lr.back();
  std::size_t since = n - 1;
  while (since > 0 && history.lr[since - 1] == current) --since;
  const auto window = static_cast<std::size_t>(config.plateau_window);
  if (n - since < window || n <= window) return current;
  const std::size_t start = n - window;
  const auto& d = history.val_dice;
  const double before = *std::max_element(d.begin(), d.begin() + static_cast<long>(start));
  const double within = *std::max_element(d.begin() + static_cast<long>(start), d.end());
  if (within - before < config.plateau_min_improvement) return current * config.lr_factor;
  return current;
}

double validation_dice(const ProbabilityFn& predict, std::span<const Volume> volumes) {
  if (volumes.empty()) throw std::invalid_argument("validation_dice: empty split");
  double total = 0.0;
  for (const Volume& v : volumes) {
    DiceCounts counts;
    for (std::size_t b = 0; b < v.count(); ++b) {
      counts.add(otsu_threshold(predict(v, b)), mask_from_tensor(v.mask(b)));
    }
    total += counts.value();
  }
  return total / static_cast<double>(volumes.size());
}

double validation_dice(Network& net, std::span<const Volume> volumes) {
  const Mode saved = net.mode();
  net.set_mode(Mode::Eval);
  // Eval mode treats batch entries independently, so B-scans are pushed
  // through in chunks and sliced back out.
  constexpr std::size_t kChunk = 8;
  const Volume* cached_volume = nullptr;
  std::size_t cached_chunk = 0;
  Tensor cached;
  auto predict = [&](const Volume& v, std::size_t b) {
    const std::size_t h = v.bscans.dim(1), w = v.bscans.dim(2), hw = h * w;
    const std::size_t chunk = b / kChunk;
    if (cached_volume != &v || cached_chunk != chunk) {
      const std::size_t first = chunk * kChunk;
      const std::size_t n = std::min(kChunk, v.count() - first);
      Tensor batch({n, 1, h, w});
      std::copy_n(v.bscans.ptr() + first * hw, n * hw, batch.ptr());
      Rng unused(0);
      cached = ops::foreground_probability(net.predict(batch, unused));
      cached_volume = &v;
      cached_chunk = chunk;
    }
    const auto first = cached.vec().begin() + static_cast<long>((b % kChunk) * hw);
    return Tensor({h, w}, std::vector<float>(first, first + static_cast<long>(hw)));
  };
  const double d = validation_dice(predict, volumes);
  net.set_mode(saved);
  return d;
}

double train_step(Network& net, const Tensor& images, const Tensor& targets,
                  const TrainConfig& config, float lr, long step, Rng& dropout_rng,
                  Rng& noise_rng) {
  net.set_mode(Mode::Train);
  Trace trace;
  const Tensor logits = net.forward(images, dropout_rng, &trace);
  const ops::LossResult loss = config.variant == Variant::BUNet
                                   ? bunet_loss(logits, targets, config.noise_samples, noise_rng)
                                   : ops::softmax_cross_entropy(logits, targets);
  if (!std::isfinite(loss.loss)) {
    throw std::domain_error("training diverged: loss is " + std::to_string(loss.loss) +
                            " at step " + std::to_string(step));
  }
  net.backward(trace, loss.grad);
  AdamConfig adam;
  adam.lr = lr;
  adam.weight_decay = config.weight_decay;
  adam_step(net.parameters(), adam, step);
  return loss.loss;
}

TrainResult train(const TrainConfig& config, std::span<const Volume> train_set,
                  std::span<const Volume> val_set,
                  const std::function<void(const EpochSummary&)>& on_epoch) {
  config.validate();
  if (train_set.empty() || val_set.empty()) {
    throw std::invalid_argument("train: train and validation splits must be non-empty");
  }
  const std::size_t h = train_set[0].bscans.dim(1), w = train_set[0].bscans.dim(2);
  std::vector<std::pair<std::size_t, std::size_t>> samples;
  for (std::size_t v = 0; v < train_set.size(); ++v) {
    if (train_set[v].bscans.dim(1) != h || train_set[v].bscans.dim(2) != w) {
      throw std::invalid_argument("train: all volumes must share one B-scan geometry");
    }
    for (std::size_t b = 0; b < train_set[v].count(); ++b) samples.emplace_back(v, b);
  }

  Network net = Network::build(config.architecture(), Rng::derive(config.seed, 0));
  Rng shuffle_rng(Rng::derive(config.seed, 1));
  Rng dropout_rng(Rng::derive(config.seed, 2));
  Rng noise_rng(Rng::derive(config.seed, 3));

  TrainResult result{net, net, {}};
  TrainHistory& hist = result.history;
  float lr = config.lr0;
  long step = 0;
  const std::size_t hw = h * w;
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    for (std::size_t i = samples.size(); i > 1; --i) {
      std::swap(samples[i - 1], samples[shuffle_rng.below(i)]);
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < samples.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, samples.size() - start);
      Tensor images({n, 1, h, w});
      Tensor targets({n, h, w});
      for (std::size_t k = 0; k < n; ++k) {
        const auto [v, b] = samples[start + k];
        std::copy_n(train_set[v].bscans.ptr() + b * hw, hw, images.ptr() + k * hw);
        std::copy_n(train_set[v].masks.ptr() + b * hw, hw, targets.ptr() + k * hw);
      }
      loss_sum += train_step(net, images, targets, config, lr, ++step, dropout_rng, noise_rng);
      ++batches;
    }
    const double val = validation_dice(net, val_set);
    hist.train_loss.push_back(loss_sum / static_cast<double>(batches));
    hist.val_dice.push_back(val);
    hist.lr.push_back(lr);
    const bool best = hist.best_epoch < 0 || val > hist.val_dice[static_cast<std::size_t>(hist.best_epoch)];
    if (best) {
      hist.best_epoch = epoch;
      result.best = net;
    }
    if (on_epoch) on_epoch({epoch, hist.train_loss.back(), val, lr, best});
    lr = plateau_scheduler(hist, config);
  }
  result.last = net;
  result.best.set_mode(Mode::Eval);
  result.last.set_mode(Mode::Eval);
  return result;
}

}  // namespace uncertseg
