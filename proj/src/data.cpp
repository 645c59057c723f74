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


#include "uncertseg/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "uncertseg/bayes.hpp"
#include "uncertseg/checkpoint.hpp"
#include "uncertseg/io.hpp"

namespace uncertseg {

std::string to_string(Disease d) {
  switch (d) {
    case Disease::DME:
      return "DME";
    case Disease::RVO:
      return "RVO";
    case Disease::EarlyAMD:
      return "earlyAMD";
    case Disease::LateAMDGA:
      return "lateAMD-GA";
  }
  return "unknown";
}

Disease parse_disease(const std::string& name) {
  for (Disease d : kAllDiseases) {
    if (to_string(d) == name) return d;
  }
  throw std::invalid_argument("unknown disease tag '" + name + "'");
}

void GeneratorParams::validate() const {
  if (bscans == 0) throw std::invalid_argument("generator: need at least one B-scan");
  if (height == 0 || width == 0 || height % 16 != 0 || width % 16 != 0) {
    throw std::invalid_argument("generator: geometry " + std::to_string(height) + "x" +
                                std::to_string(width) + " must be a positive multiple of 16");
  }
  if (!(disruption_rate >= 0.0 && disruption_rate < 1.0)) {
    throw std::invalid_argument("generator: disruption rate must be in [0, 1)");
  }
  if (!(shadow_rate >= 0.0 && shadow_rate < 1.0)) {
    throw std::invalid_argument("generator: shadow rate must be in [0, 1)");
  }
  if (!(thickness_min > 0.0 && thickness_min <= thickness_max && thickness_max < 0.3)) {
    throw std::invalid_argument("generator: band thickness range must satisfy 0 < min <= max < 0.3");
  }
  if (noise_level < 0.0 || edge_softness <= 0.0 || cysts_per_bscan < 0.0 ||
      !(atrophy_fraction >= 0.0 && atrophy_fraction < 1.0) || disruption_mean_run < 1.0 ||
      shadow_mean_run < 1.0) {
    throw std::invalid_argument("generator: invalid noise/edge/cyst/atrophy/run parameter");
  }
}

Tensor Volume::bscan(std::size_t i) const {
  const std::size_t h = bscans.dim(1), w = bscans.dim(2);
  const auto first = bscans.vec().begin() + static_cast<long>(i * h * w);
  return Tensor({h, w}, std::vector<float>(first, first + static_cast<long>(h * w)));
}

Tensor Volume::mask(std::size_t i) const {
  const std::size_t h = masks.dim(1), w = masks.dim(2);
  const auto first = masks.vec().begin() + static_cast<long>(i * h * w);
  return Tensor({h, w}, std::vector<float>(first, first + static_cast<long>(h * w)));
}

std::vector<std::uint8_t> sample_runs(std::size_t length, double rate, double mean_run, Rng& rng) {
  std::vector<std::uint8_t> on(length, 0);
  if (rate <= 0.0 || length == 0) return on;
  const double run = std::max(1.0, mean_run);
  const double stay = 1.0 - 1.0 / run;
  const double start = std::min(1.0, rate / (run * (1.0 - rate)));
  bool state = rng.bernoulli(rate);
  for (std::size_t c = 0; c < length; ++c) {
    on[c] = state ? 1 : 0;
    state = state ? rng.bernoulli(stay) : rng.bernoulli(start);
  }
  return on;
}

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform_double(); }

std::size_t poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  const double limit = std::exp(-mean);
  std::size_t k = 0;
  double p = rng.uniform_double();
  while (p > limit && k < 1000) {
    ++k;
    p *= rng.uniform_double();
  }
  return k;
}

double smoothstep_logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Cyst {
  double row, col, rrow, rcol;
};

}  // namespace

Volume generate_volume(const GeneratorParams& params, std::uint64_t seed, const std::string& id) {
  params.validate();
  const std::size_t nb = params.bscans, H = params.height, W = params.width;
  const double h = static_cast<double>(H);
  Rng rng(seed);

  // Volume-level shape of the retina.
  const double base = uniform(rng, 0.52, 0.62);
  const double curvature = uniform(rng, -0.25, 0.15);
  const double tilt = uniform(rng, -0.08, 0.08);
  const double scan_curvature = uniform(rng, -0.1, 0.1);
  const double thick0 = uniform(rng, params.thickness_min, params.thickness_max);
  const double thick_amp = uniform(rng, 0.05, 0.25);
  const double thick_freq = uniform(rng, 0.5, 2.5);
  const double thick_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double wobble_amp = uniform(rng, 0.0, 0.015);
  const double wobble_freq = uniform(rng, 1.0, 3.0);
  const double wobble_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double retina_frac = uniform(rng, 0.2, 0.28);
  const double fovea_u = uniform(rng, 0.4, 0.6);
  const double fovea_v = uniform(rng, 0.4, 0.6);
  const double band_level = uniform(rng, 0.7, 0.85);

  double atrophy_u = 0.5, atrophy_v = 0.5, atrophy_ru = 0.0, atrophy_rv = 0.0;
  if (params.atrophy_fraction > 0.0) {
    const double radius = std::sqrt(params.atrophy_fraction / std::numbers::pi);
    const double aspect = uniform(rng, 0.8, 1.25);
    atrophy_ru = radius * aspect;
    atrophy_rv = radius / aspect;
    atrophy_u = uniform(rng, 0.25, 0.75);
    atrophy_v = uniform(rng, 0.25, 0.75);
  }

  Volume vol;
  vol.id = id;
  vol.disease = params.disease;
  vol.seed = seed;
  vol.bscans = Tensor({nb, H, W});
  vol.masks = Tensor({nb, H, W});
  vol.disrupted_columns.resize(nb);
  vol.shadow_columns.resize(nb);

  std::vector<int> top(W), thickness(W), ilm(W);
  std::vector<double> shadow_factor(W);
  for (std::size_t b = 0; b < nb; ++b) {
    const double v = (static_cast<double>(b) + 0.5) / static_cast<double>(nb);
    std::vector<std::uint8_t> disrupted =
        sample_runs(W, params.disruption_rate, params.disruption_mean_run, rng);
    std::vector<std::uint8_t> shadow = sample_runs(W, params.shadow_rate, params.shadow_mean_run, rng);
    std::vector<std::uint8_t> atrophy(W, 0);
    for (std::size_t c = 0; c < W; ++c) {
      const double u = (static_cast<double>(c) + 0.5) / static_cast<double>(W);
      if (atrophy_ru > 0.0) {
        const double du = (u - atrophy_u) / atrophy_ru, dv = (v - atrophy_v) / atrophy_rv;
        if (du * du + dv * dv <= 1.0) atrophy[c] = 1;
      }
      shadow_factor[c] = shadow[c] ? uniform(rng, 0.25, 0.5) : 1.0;
      if (atrophy[c]) disrupted[c] = 1;
      if (params.shadows_as_disruptions && shadow[c]) disrupted[c] = 1;

      const double center =
          h * (base + curvature * (u - 0.5) * (u - 0.5) + tilt * (u - 0.5) +
               scan_curvature * (v - 0.5) * (v - 0.5) +
               wobble_amp * std::sin(2.0 * std::numbers::pi * wobble_freq * u + wobble_phase + 2.0 * v));
      const double thick =
          h * thick0 *
          (1.0 + thick_amp * std::sin(2.0 * std::numbers::pi * thick_freq * u + thick_phase + 3.0 * v));
      const int px = std::max(2, static_cast<int>(std::lround(thick)));
      int t = static_cast<int>(std::lround(center - px / 2.0));
      t = std::clamp(t, 4, static_cast<int>(H) - px - 2);
      top[c] = t;
      thickness[c] = px;
      const double pit =
          1.0 - 0.5 * std::exp(-((u - fovea_u) * (u - fovea_u) + (v - fovea_v) * (v - fovea_v)) / 0.01);
      ilm[c] = std::max(1, t - static_cast<int>(std::lround(h * retina_frac * pit)));
    }

    std::vector<Cyst> cysts;
    const std::size_t ncysts = poisson(rng, params.cysts_per_bscan);
    for (std::size_t k = 0; k < ncysts; ++k) {
      const auto c = static_cast<std::size_t>(rng.below(W));
      const double lo = ilm[c] + 2.0, hi = top[c] - 2.0;
      const double row = hi > lo ? uniform(rng, lo, hi) : lo;
      const double rrow = uniform(rng, 1.0, 4.0) * h / 128.0;
      const double rcol = uniform(rng, 2.0, 8.0) * static_cast<double>(W) / 128.0;
      cysts.push_back({row, static_cast<double>(c), std::max(rrow, 0.75), std::max(rcol, 1.0)});
    }

    float* img = vol.bscans.ptr() + b * H * W;
    float* msk = vol.masks.ptr() + b * H * W;
    for (std::size_t c = 0; c < W; ++c) {
      const int t = top[c], px = thickness[c], bottom = t + px;
      const double inner_span = std::max(1, t - ilm[c]);
      for (std::size_t r = 0; r < H; ++r) {
        const int ri = static_cast<int>(r);
        const double rc = static_cast<double>(r) + 0.5;
        double tissue;
        if (ri < ilm[c]) {
          tissue = 0.03;
        } else if (ri < t) {
          const double d = (ri - ilm[c]) / inner_span;
          tissue = 0.2 + 0.4 * std::exp(-6.0 * d) + 0.05 * std::sin(5.0 * std::numbers::pi * d);
          if (d > 0.7) tissue *= 0.5;
        } else {
          tissue = 0.05 + 0.35 * std::exp(-(rc - bottom) / (0.1 * h));
          if (atrophy[c] && ri >= bottom) tissue = std::min(1.0, tissue * 1.8);
        }
        const double s = smoothstep_logistic((rc - t) / params.edge_softness) *
                         smoothstep_logistic((bottom - rc) / params.edge_softness);
        const double level = disrupted[c] ? 0.18 : band_level;
        double value = tissue * (1.0 - s) + level * s;
        if (ri >= ilm[c]) value *= shadow_factor[c];
        for (const Cyst& cy : cysts) {
          const double dr = (rc - cy.row) / cy.rrow;
          const double dc = (static_cast<double>(c) + 0.5 - cy.col) / cy.rcol;
          if (dr * dr + dc * dc <= 1.0 && ri < t) value *= 0.2;
        }
        img[r * W + c] = static_cast<float>(value);
        msk[r * W + c] = (!disrupted[c] && ri >= t && ri < bottom) ? 1.0f : 0.0f;
      }
    }
    for (std::size_t i = 0; i < H * W; ++i) {
      const double noisy = img[i] * (1.0 + params.noise_level * rng.normal()) + 0.02 * rng.normal();
      img[i] = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
    }
    vol.disrupted_columns[b] = std::move(disrupted);
    vol.shadow_columns[b] = std::move(shadow);
  }
  return vol;
}

GeneratorParams params_for(Disease disease, double severity, std::size_t height, std::size_t width,
                           std::size_t bscans) {
  const double s = std::clamp(severity, 0.0, 1.0);
  const double col_scale = static_cast<double>(width) / 128.0;
  GeneratorParams p;
  p.bscans = bscans;
  p.height = height;
  p.width = width;
  p.disease = disease;
  p.noise_level = 0.15 + 0.45 * s;
  p.edge_softness = 0.5 + 1.5 * s;
  p.disruption_rate = 0.01 + 0.07 * s;
  p.disruption_mean_run = std::max(2.0, 6.0 * col_scale);
  p.shadow_rate = 0.03 + 0.07 * s;
  p.shadow_mean_run = std::max(1.5, 3.0 * col_scale);
  switch (disease) {
    case Disease::DME:
      p.cysts_per_bscan = 0.5 + 2.5 * s;
      break;
    case Disease::RVO:
      p.cysts_per_bscan = 0.3 + 1.5 * s;
      p.shadow_rate += 0.03;
      break;
    case Disease::EarlyAMD:
      p.disruption_rate += 0.02;
      p.thickness_max = 0.11;
      break;
    case Disease::LateAMDGA:
      p.atrophy_fraction = 0.05 + 0.15 * s;
      p.disruption_rate += 0.02;
      break;
  }
  return p;
}

std::map<Disease, std::size_t> corpus_disease_counts(std::size_t volumes) {
  const std::size_t ga = (volumes + 3) / 6;
  const std::size_t rest = volumes - ga;
  const std::array<std::size_t, 3> weights = {16, 24, 10};
  std::array<std::size_t, 3> counts{};
  std::array<std::pair<double, std::size_t>, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(rest * weights[i]) / 50.0;
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    assigned += counts[i];
    remainders[i] = {quota - std::floor(quota), i};
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < rest; ++k, ++assigned) ++counts[remainders[k % 3].second];
  return {{Disease::DME, counts[0]},
          {Disease::RVO, counts[1]},
          {Disease::EarlyAMD, counts[2]},
          {Disease::LateAMDGA, ga}};
}

std::vector<Volume> generate_corpus(const CorpusConfig& config, int threads) {
  const auto counts = corpus_disease_counts(config.volumes);
  std::vector<Disease> tags;
  for (Disease d : kAllDiseases) tags.insert(tags.end(), counts.at(d), d);
  std::vector<Volume> volumes(tags.size());
  parallel_for(tags.size(), threads, [&](std::size_t i) {
    const std::uint64_t seed = Rng::derive(config.seed, i);
    Rng severity_rng(splitmix64(seed));
    const double severity = severity_rng.uniform_double();
    GeneratorParams p = params_for(tags[i], severity, config.height, config.width, config.bscans);
    p.shadows_as_disruptions = config.shadows_as_disruptions;
    char id[16];
    std::snprintf(id, sizeof id, "vol%03zu", i);
    volumes[i] = generate_volume(p, seed, id);
    volumes[i].severity = severity;
  });
  return volumes;
}

SplitCounts SplitCounts::scaled(std::size_t non_ga, std::size_t ga) {
  SplitCounts c;
  c.train = static_cast<std::size_t>(std::lround(static_cast<double>(non_ga) * 31.0 / 50.0));
  c.val = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(non_ga) * 4.0 / 50.0)));
  if (c.train + c.val > non_ga) throw std::invalid_argument("split counts: too few volumes");
  c.testA = non_ga - c.train - c.val;
  c.testB = ga;
  return c;
}

const std::vector<std::string>& SplitManifest::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "testA") return testA;
  if (name == "testB") return testB;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, val, testA, testB)");
}

std::map<std::string, std::map<Disease, std::size_t>> SplitManifest::proportions(
    const std::vector<VolumeInfo>& volumes) const {
  std::map<std::string, Disease> tag;
  for (const auto& v : volumes) tag[v.id] = v.disease;
  std::map<std::string, std::map<Disease, std::size_t>> out;
  for (const char* name : {"train", "val", "testA", "testB"}) {
    auto& counts = out[name];
    for (Disease d : kAllDiseases) counts[d] = 0;
    for (const auto& id : split(name)) {
      const auto it = tag.find(id);
      if (it == tag.end()) throw std::invalid_argument("split manifest names unknown volume " + id);
      ++counts[it->second];
    }
  }
  return out;
}

std::string SplitManifest::to_text(const std::vector<VolumeInfo>& volumes) const {
  std::ostringstream o;
  o << "# uncertseg split manifest v1\n";
  for (const char* name : {"train", "val", "testA", "testB"}) {
    o << name;
    for (const auto& id : split(name)) o << ' ' << id;
    o << '\n';
  }
  for (const auto& [name, counts] : proportions(volumes)) {
    o << "# proportion " << name;
    for (const auto& [d, n] : counts) o << ' ' << to_string(d) << '=' << n;
    o << '\n';
  }
  return o.str();
}

SplitManifest SplitManifest::parse(const std::string& text) {
  SplitManifest m;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line == "# uncertseg split manifest v1") {
      header = true;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name, id;
    ls >> name;
    std::vector<std::string>* dst = nullptr;
    if (name == "train") dst = &m.train;
    if (name == "val") dst = &m.val;
    if (name == "testA") dst = &m.testA;
    if (name == "testB") dst = &m.testB;
    if (!dst) throw FormatError("split manifest: unknown split '" + name + "'");
    while (ls >> id) dst->push_back(id);
  }
  if (!header) throw FormatError("split manifest: missing header line");
  return m;
}

SplitManifest make_splits(const std::vector<VolumeInfo>& volumes, const SplitCounts& counts,
                          Rng& rng) {
  std::map<Disease, std::vector<std::string>> by_disease;
  for (const auto& v : volumes) by_disease[v.disease].push_back(v.id);
  auto shuffle = [&](std::vector<std::string>& ids) {
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  };

  SplitManifest m;
  auto& ga = by_disease[Disease::LateAMDGA];
  if (ga.size() < counts.testB) {
    throw std::invalid_argument("make_splits: need " + std::to_string(counts.testB) +
                                " late-AMD volumes for testB, have " + std::to_string(ga.size()));
  }
  shuffle(ga);
  m.testB.assign(ga.begin(), ga.begin() + static_cast<long>(counts.testB));

  const std::vector<Disease> strata = {Disease::DME, Disease::RVO, Disease::EarlyAMD};
  const std::array<std::size_t, 3> split_sizes = {counts.train, counts.val, counts.testA};
  std::size_t available = 0;
  for (Disease d : strata) available += by_disease[d].size();
  const std::size_t needed = counts.train + counts.val + counts.testA;
  if (available < needed) {
    throw std::invalid_argument("make_splits: need " + std::to_string(needed) +
                                " non-GA volumes, have " + std::to_string(available));
  }
  // Volumes beyond the requested total are dropped proportionally first.
  // quota[d][s] = n_d * size_s / needed, rounded with row/column totals kept.
  std::vector<std::size_t> used(strata.size());
  {
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < strata.size(); ++i) {
      const double q = static_cast<double>(by_disease[strata[i]].size() * needed) /
                       static_cast<double>(available);
      used[i] = static_cast<std::size_t>(std::floor(q));
      assigned += used[i];
      rem.push_back({q - std::floor(q), i});
    }
    std::stable_sort(rem.begin(), rem.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < needed; ++k, ++assigned) ++used[rem[k % rem.size()].second];
  }
  std::vector<std::array<std::size_t, 3>> cell(strata.size());
  std::vector<std::size_t> row_left(strata.size());
  std::array<std::size_t, 3> col_left = split_sizes;
  std::vector<std::tuple<double, std::size_t, std::size_t>> fractions;
  for (std::size_t i = 0; i < strata.size(); ++i) {
    std::size_t row_sum = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double q = static_cast<double>(used[i] * split_sizes[s]) / static_cast<double>(needed);
      cell[i][s] = static_cast<std::size_t>(std::floor(q));
      row_sum += cell[i][s];
      col_left[s] -= cell[i][s];
      fractions.emplace_back(q - std::floor(q), i, s);
    }
    row_left[i] = used[i] - row_sum;
  }
  std::stable_sort(fractions.begin(), fractions.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  for (const auto& [frac, i, s] : fractions) {
    if (row_left[i] > 0 && col_left[s] > 0) {
      ++cell[i][s];
      --row_left[i];
      --col_left[s];
    }
  }
  for (std::size_t i = 0; i < strata.size(); ++i) {
    for (std::size_t s = 0; s < 3 && row_left[i] > 0; ++s) {
      while (row_left[i] > 0 && col_left[s] > 0) {
        ++cell[i][s];
        --row_left[i];
        --col_left[s];
      }
    }
  }
  std::array<std::vector<std::string>*, 3> dst = {&m.train, &m.val, &m.testA};
  for (std::size_t i = 0; i < strata.size(); ++i) {
    auto& ids = by_disease[strata[i]];
    shuffle(ids);
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < cell[i][s]; ++k) dst[s]->push_back(ids[pos++]);
    }
  }
  for (auto* v : dst) std::sort(v->begin(), v->end());
  std::sort(m.testB.begin(), m.testB.end());
  return m;
}

void save_volumes(const std::filesystem::path& dir, const std::vector<Volume>& volumes) {
  std::filesystem::create_directories(dir);
  std::ostringstream index;
  index << "id\tdisease\tseverity\tseed\n";
  for (const Volume& v : volumes) {
    save_tensor(dir / (v.id + "_image.tnsr"), v.bscans);
    save_tensor(dir / (v.id + "_mask.tnsr"), v.masks);
    index << v.id << '\t' << to_string(v.disease) << '\t' << format_double(v.severity) << '\t'
          << v.seed << '\n';
  }
  write_text(dir / "volumes.tsv", index.str());
}

std::vector<VolumeInfo> load_volume_index(const std::filesystem::path& dir) {
  const auto path = dir / "volumes.tsv";
  if (!std::filesystem::exists(path)) throw std::runtime_error("missing volume index " + path.string());
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  if (line != "id\tdisease\tseverity\tseed") throw FormatError("volumes.tsv: bad header");
  std::vector<VolumeInfo> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    VolumeInfo info;
    std::string disease;
    std::getline(ls, info.id, '\t');
    std::getline(ls, disease, '\t');
    info.disease = parse_disease(disease);
    out.push_back(info);
  }
  return out;
}

Volume load_volume(const std::filesystem::path& dir, const std::string& id) {
  Volume v;
  v.id = id;
  v.bscans = load_tensor(dir / (id + "_image.tnsr"));
  v.masks = load_tensor(dir / (id + "_mask.tnsr"));
  if (v.bscans.rank() != 3 || v.masks.shape() != v.bscans.shape()) {
    throw FormatError("volume " + id + ": image/mask must be matching [B,H,W] tensors");
  }
  const std::size_t nb = v.bscans.dim(0), h = v.bscans.dim(1), w = v.bscans.dim(2);
  v.disrupted_columns.assign(nb, std::vector<std::uint8_t>(w, 1));
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        if (v.masks[(b * h + r) * w + c] > 0.5f) v.disrupted_columns[b][c] = 0;
      }
    }
  }
  return v;
}

}  // namespace uncertseg
