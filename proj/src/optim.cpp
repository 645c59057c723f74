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


#include "uncertseg/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace uncertseg {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)),
      value(std::move(value_)),
      grad(Tensor::like(value)),
      m(Tensor::like(value)),
      v(Tensor::like(value)) {}

void adam_step(std::span<Parameter> params, const AdamConfig& config, long step) {
  if (step < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
  const double bc1 = 1.0 - std::pow(static_cast<double>(config.beta1), static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(static_cast<double>(config.beta2), static_cast<double>(step));
  const auto step_size = static_cast<float>(config.lr / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const float b1 = config.beta1, b2 = config.beta2, wd = config.weight_decay;
  for (Parameter& p : params) {
    float* x = p.value.ptr();
    float* g = p.grad.ptr();
    float* m = p.m.ptr();
    float* v = p.v.ptr();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float gi = g[i] + wd * x[i];
      m[i] = b1 * m[i] + (1.0f - b1) * gi;
      v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
      x[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + config.eps);
      g[i] = 0.0f;
    }
  }
}

}  // namespace uncertseg
