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

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "uncertseg/model.hpp"
#include "uncertseg/tensor.hpp"

namespace uncertseg {

/// Monte-Carlo dropout estimate for one B-scan.
struct McResult {
  Tensor mean_prob;      // [H,W] mean foreground probability
  Tensor epistemic_std;  // [H,W] population std (1/T) across samples
  int T = 0;
};

/// Runs T stochastic forward passes of `net` in McSample mode (dropout on,
/// batch norm on running statistics) and reduces the foreground
/// probabilities pixel-wise. Sample i draws its dropout masks from
/// Rng::stream(seed, i); samples are reduced in index order (Welford, double
/// precision) so the result is bit-identical for any `threads`.
/// `bscan` is [H,W], [1,H,W] or [1,1,H,W]. Throws when T < 1.
McResult mc_predict(const Network& net, const Tensor& bscan, int T, std::uint64_t seed,
                    int threads = 1);

/// One MC run of max(Ts) samples, snapshotted after each requested count.
/// Entry k equals mc_predict(net, bscan, Ts[k], seed) exactly.
std::vector<McResult> mc_predict_prefixes(const Network& net, const Tensor& bscan,
                                          std::span<const int> Ts, std::uint64_t seed,
                                          int threads = 1);

/// Deterministic Eval-mode foreground probability, [H,W].
Tensor predict_eval(const Network& net, const Tensor& bscan);

/// Divides by the map maximum; an all-zero map is returned unchanged.
Tensor normalize_uncertainty(const Tensor& map);

/// Mean over every pixel of every map. Throws on an empty list.
double mean_uncertainty(std::span<const Tensor> maps);

/// Runs fn(i) for i in [0, n) on up to `threads` workers (1 = inline).
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Thread count from UNCERTSEG_THREADS, or `fallback` when unset/invalid.
int threads_from_env(int fallback = 1);

}  // namespace uncertseg
