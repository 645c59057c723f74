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

// Differentiable operators. Each forward op is a pure function of its inputs
// (plus an Rng for dropout). Backward functions take whatever the forward
// returned as cache and produce input/parameter gradients. All tensors are
// NCHW float32.

#include <cstdint>
#include <vector>

#include "uncertseg/rng.hpp"
#include "uncertseg/tensor.hpp"

namespace uncertseg::ops {

inline constexpr float kLeakySlope = 0.01f;
inline constexpr float kBatchNormEps = 1e-5f;
inline constexpr float kBatchNormMomentum = 0.1f;

// ---------------------------------------------------------------- conv2d

/// Stride-1 zero-padded cross-correlation. weight is [Cout,Cin,k,k] with k
/// in {1,3}; bias is [Cout]. Output spatial size is H+2p-k+1 (== H for the
/// (k=3,p=1) and (k=1,p=0) cases the networks use).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int padding);

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight,
                            const Tensor& grad_output, int padding);

// --------------------------------------------------------------- maxpool2

struct MaxPoolResult {
  Tensor output;
  /// Flat input offset of the selected element for every output element.
  std::vector<std::uint32_t> argmax;
};

/// Non-overlapping 2x2 max. Ties go to the first element in row-major
/// window order. Throws on odd H or W.
MaxPoolResult maxpool2(const Tensor& input);

Tensor maxpool2_backward(const Tensor& grad_output,
                         const std::vector<std::uint32_t>& argmax,
                         const Shape& input_shape);

// ------------------------------------------------------- upsample_nearest2

Tensor upsample_nearest2(const Tensor& input);
/// Sums the four replicated gradient contributions back onto each source.
Tensor upsample_nearest2_backward(const Tensor& grad_output);

// -------------------------------------------------------------- batchnorm

struct BatchNormCache {
  Tensor xhat;                 // normalized input
  std::vector<float> invstd;   // per channel 1/sqrt(var + eps)
  std::vector<double> mean;    // batch mean per channel
  std::vector<double> var;     // biased batch variance per channel
  std::size_t count = 0;       // N*H*W
};

struct BatchNormResult {
  Tensor output;
  BatchNormCache cache;
};

/// Train-mode batch normalization using batch statistics.
BatchNormResult batchnorm_train(const Tensor& input, const Tensor& gamma,
                                const Tensor& beta,
                                float eps = kBatchNormEps);

/// Eval/MC-mode batch normalization using running statistics.
Tensor batchnorm_infer(const Tensor& input, const Tensor& gamma,
                       const Tensor& beta, const Tensor& running_mean,
                       const Tensor& running_var, float eps = kBatchNormEps);

/// running <- (1-m)*running + m*batch; the variance uses the unbiased
/// (count-1) estimator.
void batchnorm_update_running(const BatchNormCache& cache, Tensor& running_mean,
                              Tensor& running_var,
                              float momentum = kBatchNormMomentum);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchNormGrads batchnorm_backward(const Tensor& grad_output,
                                  const BatchNormCache& cache,
                                  const Tensor& gamma);

// ------------------------------------------------------------- leaky_relu

Tensor leaky_relu(const Tensor& input, float slope = kLeakySlope);
/// Uses the slope branch at x == 0.
Tensor leaky_relu_backward(const Tensor& input, const Tensor& grad_output,
                           float slope = kLeakySlope);

// ---------------------------------------------------------------- dropout

struct DropoutResult {
  Tensor output;
  /// Per-element multiplier: 0 or 1/(1-p). Empty when inactive.
  std::vector<float> mask;
};

/// Inverted dropout. Inactive (or p == 0) returns the input unchanged and
/// consumes no randomness. Throws on p outside [0, 1).
DropoutResult dropout(const Tensor& input, float p, Rng& rng, bool active);
Tensor dropout_backward(const Tensor& grad_output,
                        const std::vector<float>& mask);

// ------------------------------------------------------------ concatenate

/// Channel concatenation [a, b] of two NCHW tensors with equal N, H, W.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits a channel gradient back into the parts for a (first `ca`
/// channels) and b.
std::pair<Tensor, Tensor> split_channels(const Tensor& grad, std::size_t ca);

// ------------------------------------------------------------------ loss

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits, same shape as the logits
};

/// Per-pixel C-class softmax + negative log-likelihood, averaged over all
/// N*H*W pixels. Targets are class indices stored as floats, [N,H,W].
/// Only the first C = `classes` channels of `logits` are read; the gradient
/// of any extra channel is zero.
LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& target,
                                 std::size_t classes = 2);

/// Foreground (class 1) softmax probability of a two-class logit map:
/// [N,C>=2,H,W] -> [N,H,W].
Tensor foreground_probability(const Tensor& logits);

}  // namespace uncertseg::ops
