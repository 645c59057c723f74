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


#include "uncertseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "uncertseg/checkpoint.hpp"

namespace uncertseg {

double dice(const SegmentationMask& pred, const SegmentationMask& truth) {
  DiceCounts c;
  c.add(pred, truth);
  return c.value();
}

void DiceCounts::add(const SegmentationMask& p, const SegmentationMask& t) {
  if (p.height != t.height || p.width != t.width) {
    throw std::invalid_argument("dice: mask shapes differ");
  }
  for (std::size_t i = 0; i < p.pixels.size(); ++i) {
    intersection += p.pixels[i] & t.pixels[i];
    pred += p.pixels[i];
    truth += t.pixels[i];
  }
}

double DiceCounts::value() const {
  if (pred + truth == 0) return 1.0;
  return 2.0 * static_cast<double>(intersection) / static_cast<double>(pred + truth);
}

PrResult pr_auc(std::span<const float> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("pr_auc: length mismatch");
  const auto positives =
      static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; }));
  if (positives == 0) throw std::invalid_argument("pr_auc: no positive labels, recall undefined");

  std::vector<std::pair<float, std::uint8_t>> order(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) order[i] = {scores[i], labels[i] ? 1 : 0};
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  PrResult r;
  std::size_t tp = 0, fp = 0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    const float s = order[i].first;
    for (; i < order.size() && order[i].first == s; ++i) {
      (order[i].second ? tp : fp) += 1;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    r.average_precision += (recall - prev_recall) * precision;
    prev_recall = recall;
    r.curve.points.push_back({recall, precision, s});
  }
  return r;
}

double disruption_auc(std::span<const ScoredColumns> entries) {
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
  for (const auto& e : entries) {
    if (e.scores.size() != e.labels.size()) {
      throw std::invalid_argument("disruption_auc: scores/labels length mismatch");
    }
    scores.insert(scores.end(), e.scores.begin(), e.scores.end());
    labels.insert(labels.end(), e.labels.begin(), e.labels.end());
  }
  if (std::none_of(labels.begin(), labels.end(), [](auto l) { return l != 0; })) {
    throw std::invalid_argument("disruption_auc: no disrupted A-scans in the pooled set");
  }
  return pr_auc(scores, labels).average_precision;
}

RegressionFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("linear_fit: length mismatch");
  if (x.size() < 2) throw std::invalid_argument("linear_fit: need at least two points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("linear_fit: x is constant");
  RegressionFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (syy == 0.0) {
    fit.r_squared = 0.0;
    return fit;
  }
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += e * e;
  }
  fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  return fit;
}

EvalReport evaluate(std::span<const VolumeOutcome> outcomes) {
  if (outcomes.empty()) throw std::invalid_argument("evaluate: no volumes");
  EvalReport report;
  std::vector<float> pixel_scores;
  std::vector<std::uint8_t> pixel_labels;
  std::vector<ScoredColumns> columns;
  for (const VolumeOutcome& v : outcomes) {
    if (v.mean_prob.rank() != 3 || v.mean_prob.shape() != v.truth.shape() ||
        v.epistemic_std.shape() != v.truth.shape()) {
      throw std::invalid_argument("evaluate: volume " + v.id +
                                  " needs matching [B,H,W] prob/std/truth tensors");
    }
    const std::size_t b = v.truth.dim(0), h = v.truth.dim(1), w = v.truth.dim(2);
    DiceCounts counts;
    double usum = 0.0;
    for (std::size_t s = 0; s < b; ++s) {
      const auto first = static_cast<long>(s * h * w);
      const auto last = first + static_cast<long>(h * w);
      Tensor prob({h, w}, std::vector<float>(v.mean_prob.vec().begin() + first,
                                             v.mean_prob.vec().begin() + last));
      Tensor truth({h, w}, std::vector<float>(v.truth.vec().begin() + first,
                                              v.truth.vec().begin() + last));
      const SegmentationMask gt = mask_from_tensor(truth);
      counts.add(otsu_threshold(prob), gt);
      columns.push_back({disruption_scores(prob), disruption_labels(gt)});
      pixel_scores.insert(pixel_scores.end(), prob.data().begin(), prob.data().end());
      for (std::uint8_t px : gt.pixels) pixel_labels.push_back(px);
    }
    for (float u : v.epistemic_std.data()) usum += u;
    report.volumes.push_back(
        {v.id, counts.value(), usum / static_cast<double>(v.epistemic_std.size())});
  }
  report.photoreceptor_auc = pr_auc(pixel_scores, pixel_labels).average_precision;
  report.disruption_auc = disruption_auc(columns);

  std::vector<double> d, u;
  for (const auto& vs : report.volumes) {
    d.push_back(vs.dice);
    u.push_back(vs.mean_uncertainty);
  }
  const auto n = static_cast<double>(d.size());
  report.dice_mean = std::accumulate(d.begin(), d.end(), 0.0) / n;
  if (d.size() > 1) {
    double ss = 0.0;
    for (double x : d) ss += (x - report.dice_mean) * (x - report.dice_mean);
    report.dice_std = std::sqrt(ss / (n - 1.0));
  }
  const bool u_varies = std::adjacent_find(u.begin(), u.end(), std::not_equal_to<>()) != u.end();
  if (d.size() >= 2 && u_varies) {
    report.dice_vs_uncertainty = linear_fit(u, d);
    report.has_fit = true;
  }
  return report;
}

std::string EvalReport::to_text() const {
  std::ostringstream o;
  o << "volumes=" << volumes.size() << '\n';
  o << "photoreceptor_auc=" << format_double(photoreceptor_auc) << '\n';
  o << "dice_mean=" << format_double(dice_mean) << '\n';
  o << "dice_std=" << format_double(dice_std) << '\n';
  o << "disruption_auc=" << format_double(disruption_auc) << '\n';
  double umean = 0.0;
  for (const auto& v : volumes) umean += v.mean_uncertainty;
  o << "mean_uncertainty=" << format_double(volumes.empty() ? 0.0 : umean / volumes.size()) << '\n';
  if (has_fit) {
    o << "fit_slope=" << format_double(dice_vs_uncertainty.slope) << '\n';
    o << "fit_intercept=" << format_double(dice_vs_uncertainty.intercept) << '\n';
    o << "fit_r_squared=" << format_double(dice_vs_uncertainty.r_squared) << '\n';
  } else {
    o << "fit=none\n";
  }
  return o.str();
}

std::string EvalReport::volumes_csv() const {
  std::ostringstream o;
  o << "id,dice,mean_uncertainty\n";
  for (const auto& v : volumes) {
    o << v.id << ',' << format_double(v.dice) << ',' << format_double(v.mean_uncertainty) << '\n';
  }
  return o.str();
}

std::string EvalReport::scatter_svg(const std::string& title) const {
  constexpr double kW = 480, kH = 360, kMargin = 50;
  double umin = 0.0, umax = 1e-12, dmin = 1.0, dmax = 0.0;
  if (!volumes.empty()) {
    umin = umax = volumes[0].mean_uncertainty;
    for (const auto& v : volumes) {
      umin = std::min(umin, v.mean_uncertainty);
      umax = std::max(umax, v.mean_uncertainty);
      dmin = std::min(dmin, v.dice);
      dmax = std::max(dmax, v.dice);
    }
  }
  if (umax - umin < 1e-12) umax = umin + 1e-12;
  if (dmax - dmin < 1e-6) {
    dmin -= 0.01;
    dmax += 0.01;
  }
  const auto px = [&](double u) { return kMargin + (u - umin) / (umax - umin) * (kW - 2 * kMargin); };
  const auto py = [&](double d) { return kH - kMargin - (d - dmin) / (dmax - dmin) * (kH - 2 * kMargin); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n";
  o << "<title>" << title << "</title>\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  o << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - kMargin
    << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << kMargin << "\" y1=\"" << kMargin << "\" x2=\"" << kMargin << "\" y2=\""
    << kH - kMargin << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">mean uncertainty</text>\n";
  o << "<text x=\"14\" y=\"" << kH / 2 << "\" transform=\"rotate(-90 14 " << kH / 2
    << ")\" text-anchor=\"middle\">Dice</text>\n";
  for (const auto& v : volumes) {
    o << "<circle class=\"volume\" cx=\"" << px(v.mean_uncertainty) << "\" cy=\"" << py(v.dice)
      << "\" r=\"4\" fill=\"steelblue\"><title>" << v.id << "</title></circle>\n";
  }
  if (has_fit) {
    const auto& f = dice_vs_uncertainty;
    o << "<line class=\"fit\" x1=\"" << px(umin) << "\" y1=\"" << py(f.slope * umin + f.intercept)
      << "\" x2=\"" << px(umax) << "\" y2=\"" << py(f.slope * umax + f.intercept)
      << "\" stroke=\"crimson\"/>\n";
    o << "<text x=\"" << kW - kMargin << "\" y=\"" << kMargin - 10
      << "\" text-anchor=\"end\">R2=" << format_double(f.r_squared) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace uncertseg
