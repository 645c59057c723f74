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
#include <map>
#include <string>
#include <vector>

#include "uncertseg/ops.hpp"
#include "uncertseg/optim.hpp"
#include "uncertseg/rng.hpp"
#include "uncertseg/tensor.hpp"

namespace uncertseg {

enum class Variant { UNet, U2Net, BUNet };

std::string to_string(Variant v);
/// Accepts "unet", "u2net", "bunet" (case-insensitive).
Variant parse_variant(const std::string& name);

/// Network operating mode.
///   Train     - dropout active, batch norm uses batch statistics.
///   Eval      - dropout inactive, batch norm uses running statistics.
///   McSample  - dropout ACTIVE, batch norm uses running statistics.
enum class Mode { Train, Eval, McSample };

/// Block indices: 0..3 encoder, 4 bottleneck, 5..8 decoder (5 is the
/// decoder block fed by the bottleneck).
inline constexpr std::size_t kEncoderBlocks = 5;
inline constexpr std::size_t kDecoderBlocks = 4;
inline constexpr std::size_t kBlockCount = kEncoderBlocks + kDecoderBlocks;
inline constexpr std::size_t kBottleneckBlock = kEncoderBlocks - 1;

struct ArchitectureSpec {
  Variant variant = Variant::U2Net;
  std::vector<std::size_t> encoder_channels{64, 128, 256, 512, 1024};
  std::vector<std::size_t> decoder_channels{512, 256, 128, 64};
  /// block index -> dropout rate applied after that block.
  std::map<std::size_t, float> dropout_plan;
  std::size_t input_channels = 1;
  std::size_t output_channels = 2;

  /// The published channel plan scaled so the first encoder block has
  /// `base_width` channels (64 reproduces 64..1024 / 512..64), with the
  /// dropout plan and output channels implied by `variant`.
  static ArchitectureSpec make(Variant variant, std::size_t base_width = 64);

  void validate() const;
};

/// Dropout placement implied by a variant:
///   UNet        - 0.5 at the bottleneck only.
///   U2Net/BUNet - 0.1 after every block except the first encoder block and
///                 the last decoder block; 0.5 at the bottleneck.
std::map<std::size_t, float> default_dropout_plan(Variant variant);

struct DropoutSite {
  std::size_t block;
  std::string name;
  float rate;
};

std::string block_name(std::size_t block);

/// Per-call activations recorded by a train-mode forward pass.
struct Trace {
  struct Unit {
    Tensor input;  // conv input
    ops::BatchNormCache bn;
    Tensor bn_out;  // leaky ReLU input
  };
  struct Block {
    Unit units[2];
    std::vector<float> dropout_mask;
  };
  std::vector<Block> blocks;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<Shape> pool_input_shapes;
  Tensor head_input;
  bool trainable = false;
};

/// U-Net style encoder/decoder: 5 encoder blocks (the last is the
/// bottleneck) with 2x2 max-pooling between them, 4 decoder blocks each
/// preceded by nearest-neighbour upsampling and skip concatenation
/// [skip, upsampled], then a 1x1 convolution to output_channels logits.
/// Every block is (conv3x3 -> batchnorm -> leaky ReLU) x 2, followed by
/// dropout where the plan says so.
class Network {
 public:
  /// Weights: He-normal (fan-in) conv weights, zero biases, gamma 1,
  /// beta 0; running mean 0 / variance 1. Bit-reproducible per seed.
  static Network build(const ArchitectureSpec& spec, std::uint64_t seed);

  const ArchitectureSpec& spec() const { return spec_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  /// Logits [N, output_channels, H, W]. In Train mode batch statistics are
  /// used and folded into the running statistics; pass `trace` to enable
  /// backward(). Throws unless H and W are divisible by 16.
  Tensor forward(const Tensor& batch, Rng& rng, Trace* trace = nullptr);

  /// Read-only forward for Eval / McSample modes; safe to call
  /// concurrently with distinct Rng objects.
  Tensor predict(const Tensor& batch, Rng& rng) const;

  /// Accumulates parameter gradients from d loss / d logits.
  void backward(const Trace& trace, const Tensor& grad_logits);

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  /// Running statistics (name, tensor), ordered.
  std::vector<std::pair<std::string, Tensor>>& buffers() { return buffers_; }
  const std::vector<std::pair<std::string, Tensor>>& buffers() const { return buffers_; }

  void zero_grad();
  std::size_t count_parameters() const;

  std::vector<DropoutSite> dropout_sites() const;
  /// Overrides one block's dropout rate (0 removes the site).
  void set_dropout_rate(std::size_t block, float rate);
  void disable_dropout();

 private:
  struct Unit {
    std::size_t weight, bias, gamma, beta;  // parameter indices
    std::size_t running_mean, running_var;  // buffer indices
  };
  struct Block {
    Unit units[2];
    std::size_t in_channels = 0, out_channels = 0;
  };

  Network() = default;
  Tensor run(const Tensor& batch, Mode mode, Rng& rng, Trace* trace) const;
  Tensor run_block(std::size_t b, const Tensor& x, Mode mode, Rng& rng,
                   Trace::Block* trace) const;
  Tensor backward_block(std::size_t b, const Trace::Block& trace, const Tensor& grad);
  void check_input(const Tensor& batch) const;

  ArchitectureSpec spec_;
  Mode mode_ = Mode::Train;
  std::vector<Parameter> params_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
  std::vector<Block> blocks_;
  std::size_t head_weight_ = 0, head_bias_ = 0;
};

/// Aleatoric-head loss for the BU-Net: channels 0..1 are class logits,
/// channel 2 is log V. Each of `noise_samples` draws perturbs both logit
/// channels with independent N(0, V) noise; the loss is the mean over
/// draws of softmax cross-entropy. Gradient w.r.t. all three channels.
ops::LossResult bunet_loss(const Tensor& output, const Tensor& target, int noise_samples,
                           Rng& rng);

}  // namespace uncertseg
