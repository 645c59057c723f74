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


#include "uncertseg/bayes.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace uncertseg {

namespace {

Tensor as_batch(const Tensor& bscan) {
  if (bscan.rank() == 2) return bscan.reshaped({1, 1, bscan.dim(0), bscan.dim(1)});
  if (bscan.rank() == 3 && bscan.dim(0) == 1) {
    return bscan.reshaped({1, 1, bscan.dim(1), bscan.dim(2)});
  }
  if (bscan.rank() == 4 && bscan.dim(0) == 1 && bscan.dim(1) == 1) return bscan;
  throw std::invalid_argument("expected a single B-scan [H,W], [1,H,W] or [1,1,H,W], got " +
                              shape_str(bscan.shape()));
}

Tensor sample_probability(const Network& net, const Tensor& batch, std::uint64_t seed,
                          std::size_t index) {
  Rng rng = Rng::stream(seed, index);
  Tensor logits = net.predict(batch, rng);
  return ops::foreground_probability(logits).reshaped({batch.dim(2), batch.dim(3)});
}

}  // namespace

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

int threads_from_env(int fallback) {
  const char* env = std::getenv("UNCERTSEG_THREADS");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1 || v > 1024) return fallback;
  return static_cast<int>(v);
}

std::vector<McResult> mc_predict_prefixes(const Network& net, const Tensor& bscan,
                                          std::span<const int> Ts, std::uint64_t seed,
                                          int threads) {
  if (Ts.empty()) throw std::invalid_argument("mc_predict: no sample counts requested");
  for (int t : Ts) {
    if (t < 1) throw std::invalid_argument("mc_predict: T must be >= 1, got " + std::to_string(t));
  }
  if (net.mode() != Mode::McSample) {
    throw std::logic_error("mc_predict: network must be in McSample mode");
  }
  const Tensor batch = as_batch(bscan);
  const std::size_t h = batch.dim(2), w = batch.dim(3), hw = h * w;
  const int max_t = *std::max_element(Ts.begin(), Ts.end());

  std::vector<double> mean(hw, 0.0), m2(hw, 0.0);
  std::vector<McResult> out(Ts.size());
  const std::size_t chunk = static_cast<std::size_t>(std::max(threads, 1));
  std::vector<Tensor> samples(chunk);
  for (std::size_t start = 0; start < static_cast<std::size_t>(max_t); start += chunk) {
    const std::size_t count = std::min(chunk, static_cast<std::size_t>(max_t) - start);
    parallel_for(count, threads, [&](std::size_t j) {
      samples[j] = sample_probability(net, batch, seed, start + j);
    });
    for (std::size_t j = 0; j < count; ++j) {
      const double k = static_cast<double>(start + j + 1);
      const Tensor& p = samples[j];
      for (std::size_t i = 0; i < hw; ++i) {
        const double delta = p[i] - mean[i];
        mean[i] += delta / k;
        m2[i] += delta * (p[i] - mean[i]);
      }
      const int done = static_cast<int>(start + j + 1);
      for (std::size_t r = 0; r < Ts.size(); ++r) {
        if (Ts[r] != done) continue;
        McResult res{Tensor({h, w}), Tensor({h, w}), done};
        for (std::size_t i = 0; i < hw; ++i) {
          res.mean_prob[i] = static_cast<float>(std::clamp(mean[i], 0.0, 1.0));
          res.epistemic_std[i] = static_cast<float>(std::sqrt(std::max(m2[i], 0.0) / done));
        }
        out[r] = std::move(res);
      }
    }
  }
  return out;
}

McResult mc_predict(const Network& net, const Tensor& bscan, int T, std::uint64_t seed,
                    int threads) {
  const int Ts[] = {T};
  return std::move(mc_predict_prefixes(net, bscan, Ts, seed, threads)[0]);
}

Tensor predict_eval(const Network& net, const Tensor& bscan) {
  if (net.mode() != Mode::Eval) throw std::logic_error("predict_eval: network must be in Eval mode");
  const Tensor batch = as_batch(bscan);
  Rng unused(0);
  return ops::foreground_probability(net.predict(batch, unused)).reshaped({batch.dim(2), batch.dim(3)});
}

Tensor normalize_uncertainty(const Tensor& map) {
  float mx = 0.0f;
  for (float v : map.data()) mx = std::max(mx, v);
  if (mx <= 0.0f) return map;
  Tensor out = Tensor::like(map);
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] / mx;
  return out;
}

double mean_uncertainty(std::span<const Tensor> maps) {
  if (maps.empty()) throw std::invalid_argument("mean_uncertainty: empty list");
  double sum = 0.0;
  std::size_t n = 0;
  for (const Tensor& m : maps) {
    for (float v : m.data()) sum += v;
    n += m.size();
  }
  if (n == 0) throw std::invalid_argument("mean_uncertainty: maps hold no pixels");
  return sum / static_cast<double>(n);
}

}  // namespace uncertseg
