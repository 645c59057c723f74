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


#include "pipeline.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "uncertseg/checkpoint.hpp"

namespace uncertseg {

std::uint64_t id_hash(const std::string& id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mc_seed(std::uint64_t seed, const std::string& id, std::size_t index) {
  return Rng::derive(seed, id_hash(id), index);
}

namespace {

VolumeOutcome empty_outcome(const Volume& v) {
  const Shape s = v.bscans.shape();
  return VolumeOutcome{v.id, Tensor(s), Tensor(s), v.masks};
}

void put(Tensor& stack, std::size_t b, const Tensor& map) {
  std::copy_n(map.ptr(), map.size(), stack.ptr() + b * map.size());
}

}  // namespace

std::vector<VolumeOutcome> infer_split(const Network& net, std::span<const Volume> volumes,
                                       const InferenceConfig& config) {
  if (!config.eval_mode && config.T < 1) throw std::invalid_argument("inference: T must be >= 1");
  Network local = net;
  local.set_mode(config.eval_mode ? Mode::Eval : Mode::McSample);
  std::vector<VolumeOutcome> out;
  out.reserve(volumes.size());
  for (const Volume& v : volumes) {
    VolumeOutcome o = empty_outcome(v);
    for (std::size_t b = 0; b < v.count(); ++b) {
      if (config.eval_mode) {
        put(o.mean_prob, b, predict_eval(local, v.bscan(b)));
      } else {
        McResult r = mc_predict(local, v.bscan(b), config.T, mc_seed(config.seed, v.id, b),
                                config.threads);
        put(o.mean_prob, b, r.mean_prob);
        put(o.epistemic_std, b, r.epistemic_std);
      }
    }
    out.push_back(std::move(o));
  }
  return out;
}

std::vector<SweepRow> sweep_T(const Network& net, std::span<const Volume> volumes,
                              std::span<const int> Ts, std::uint64_t seed, int threads) {
  if (Ts.empty()) throw std::invalid_argument("sweep_T: no sample counts");
  Network local = net;
  local.set_mode(Mode::McSample);
  std::vector<std::vector<VolumeOutcome>> per_t(Ts.size());
  for (const Volume& v : volumes) {
    for (auto& outs : per_t) outs.push_back(empty_outcome(v));
    for (std::size_t b = 0; b < v.count(); ++b) {
      auto runs = mc_predict_prefixes(local, v.bscan(b), Ts, mc_seed(seed, v.id, b), threads);
      for (std::size_t k = 0; k < Ts.size(); ++k) {
        put(per_t[k].back().mean_prob, b, runs[k].mean_prob);
        put(per_t[k].back().epistemic_std, b, runs[k].epistemic_std);
      }
    }
  }
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < Ts.size(); ++k) rows.push_back({Ts[k], evaluate(per_t[k])});
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream o;
  o << "T,photoreceptor_auc,disruption_auc,dice_mean\n";
  for (const auto& r : rows) {
    o << r.T << ',' << format_double(r.report.photoreceptor_auc) << ','
      << format_double(r.report.disruption_auc) << ',' << format_double(r.report.dice_mean)
      << '\n';
  }
  return o.str();
}

}  // namespace uncertseg
