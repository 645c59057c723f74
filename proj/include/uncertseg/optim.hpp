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

#include <span>
#include <string>

#include "uncertseg/tensor.hpp"

namespace uncertseg {

/// A trainable tensor with its gradient and Adam moment estimates.
/// value, grad, m and v always share one shape; m and v start at zero.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;

  void zero_grad() { grad.zero(); }
};

struct AdamConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 5e-4f;
};

/// One Adam update with L2-coupled weight decay (grad += wd * value before
/// the moment updates). `step` is the 1-based iteration index used for
/// bias correction. Gradients are zeroed afterwards.
void adam_step(std::span<Parameter> params, const AdamConfig& config, long step);

}  // namespace uncertseg
