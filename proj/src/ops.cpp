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


#include "uncertseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace uncertseg::ops {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_rank4(const Tensor& t, const char* op) {
  if (t.rank() != 4) {
    throw std::invalid_argument(std::string(op) + ": expected NCHW tensor, got " +
                                shape_str(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, k, oh, ow;
  int pad;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weight, int padding) {
  require_rank4(input, "conv2d");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw std::invalid_argument("conv2d: weight must be [Cout,Cin,k,k], got " +
                                shape_str(weight.shape()));
  }
  if (weight.dim(1) != input.dim(1)) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(input.dim(1)) +
                                " channels but weight expects " +
                                std::to_string(weight.dim(1)));
  }
  const std::size_t k = weight.dim(2);
  if (k != 1 && k != 3) throw std::invalid_argument("conv2d: kernel size must be 1 or 3");
  if (padding < 0) throw std::invalid_argument("conv2d: negative padding");
  const auto oh = static_cast<long>(input.dim(2)) + 2 * padding - static_cast<long>(k) + 1;
  const auto ow = static_cast<long>(input.dim(3)) + 2 * padding - static_cast<long>(k) + 1;
  if (oh <= 0 || ow <= 0) throw std::invalid_argument("conv2d: input smaller than kernel");
  return {input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), k,
          static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), padding};
}

// Column buffer [Cin*k*k, OH*OW] for one image.
void im2col(const float* img, const ConvGeometry& g, float* col) {
  const long pad = g.pad;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const float* plane = img + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        float* row = col + ((c * g.k + ky) * g.k + kx) * g.oh * g.ow;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy + ky) - pad;
          float* out = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(out, out + g.ow, 0.0f);
            continue;
          }
          const float* src = plane + iy * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox + kx) - pad;
            out[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, const ConvGeometry& g, float* img) {
  const long pad = g.pad;
  for (std::size_t c = 0; c < g.cin; ++c) {
    float* plane = img + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const float* row = col + ((c * g.k + ky) * g.k + kx) * g.oh * g.ow;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy + ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          float* dst = plane + iy * g.w;
          const float* in = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox + kx) - pad;
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += in[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.k == 1 && g.pad == 0; }

}  // namespace

// ---------------------------------------------------------------- conv2d

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int padding) {
  const ConvGeometry g = conv_geometry(input, weight, padding);
  if (bias.size() != g.cout) throw std::invalid_argument("conv2d: bias must have Cout elements");
  Tensor out({g.n, g.cout, g.oh, g.ow});
  const std::size_t kdim = g.cin * g.k * g.k;
  const std::size_t pix = g.oh * g.ow;
  ConstMapMat wmat(weight.ptr(), static_cast<long>(g.cout), static_cast<long>(kdim));
  Eigen::Map<const Eigen::VectorXf> bvec(bias.ptr(), static_cast<long>(g.cout));
  std::vector<float> col(is_pointwise(g) ? 0 : kdim * pix);
  for (std::size_t n = 0; n < g.n; ++n) {
    const float* img = input.ptr() + n * g.cin * g.h * g.w;
    const float* colp = img;
    if (!is_pointwise(g)) {
      im2col(img, g, col.data());
      colp = col.data();
    }
    ConstMapMat cmat(colp, static_cast<long>(kdim), static_cast<long>(pix));
    MapMat omat(out.ptr() + n * g.cout * pix, static_cast<long>(g.cout), static_cast<long>(pix));
    omat.noalias() = wmat * cmat;
    omat.colwise() += bvec;
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight,
                            const Tensor& grad_output, int padding) {
  const ConvGeometry g = conv_geometry(input, weight, padding);
  if (grad_output.shape() != Shape{g.n, g.cout, g.oh, g.ow}) {
    throw std::invalid_argument("conv2d_backward: grad_output shape mismatch");
  }
  Conv2dGrads grads{Tensor::like(input), Tensor::like(weight), Tensor({g.cout})};
  const std::size_t kdim = g.cin * g.k * g.k;
  const std::size_t pix = g.oh * g.ow;
  ConstMapMat wmat(weight.ptr(), static_cast<long>(g.cout), static_cast<long>(kdim));
  MapMat dw(grads.weight.ptr(), static_cast<long>(g.cout), static_cast<long>(kdim));
  std::vector<float> col(is_pointwise(g) ? 0 : kdim * pix);
  std::vector<float> dcol(is_pointwise(g) ? 0 : kdim * pix);
  for (std::size_t n = 0; n < g.n; ++n) {
    const float* img = input.ptr() + n * g.cin * g.h * g.w;
    float* dimg = grads.input.ptr() + n * g.cin * g.h * g.w;
    ConstMapMat dy(grad_output.ptr() + n * g.cout * pix, static_cast<long>(g.cout),
                   static_cast<long>(pix));
    // Plain loop: Eigen's vectorized reductions peel by address alignment,
    // which makes the summation order (and the bits) depend on the heap.
    for (std::size_t o = 0; o < g.cout; ++o) {
      const float* row = grad_output.ptr() + (n * g.cout + o) * pix;
      double acc = 0.0;
      for (std::size_t p = 0; p < pix; ++p) acc += row[p];
      grads.bias[o] += static_cast<float>(acc);
    }
    if (is_pointwise(g)) {
      ConstMapMat xmat(img, static_cast<long>(kdim), static_cast<long>(pix));
      dw.noalias() += dy * xmat.transpose();
      MapMat dx(dimg, static_cast<long>(kdim), static_cast<long>(pix));
      dx.noalias() = wmat.transpose() * dy;
      continue;
    }
    im2col(img, g, col.data());
    ConstMapMat cmat(col.data(), static_cast<long>(kdim), static_cast<long>(pix));
    dw.noalias() += dy * cmat.transpose();
    MapMat dc(dcol.data(), static_cast<long>(kdim), static_cast<long>(pix));
    dc.noalias() = wmat.transpose() * dy;
    col2im_add(dcol.data(), g, dimg);
  }
  return grads;
}

// --------------------------------------------------------------- maxpool2

MaxPoolResult maxpool2(const Tensor& input) {
  require_rank4(input, "maxpool2");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw std::invalid_argument("maxpool2: spatial dims must be even, got " +
                                shape_str(input.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  MaxPoolResult r{Tensor({n, c, oh, ow}), std::vector<std::uint32_t>(n * c * oh * ow)};
  const float* x = input.ptr();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
        const std::size_t i0 = base + 2 * y * w + 2 * xx;
        const std::size_t cand[4] = {i0, i0 + 1, i0 + w, i0 + w + 1};
        std::size_t best = cand[0];
        for (int j = 1; j < 4; ++j) {
          if (x[cand[j]] > x[best]) best = cand[j];
        }
        r.output[o] = x[best];
        r.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return r;
}

Tensor maxpool2_backward(const Tensor& grad_output, const std::vector<std::uint32_t>& argmax,
                         const Shape& input_shape) {
  if (argmax.size() != grad_output.size()) {
    throw std::invalid_argument("maxpool2_backward: argmax/grad size mismatch");
  }
  Tensor dx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += grad_output[i];
  return dx;
}

// ------------------------------------------------------- upsample_nearest2

Tensor upsample_nearest2(const Tensor& input) {
  require_rank4(input, "upsample_nearest2");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const float* src = input.ptr() + plane * h * w;
    float* dst = out.ptr() + plane * 4 * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      float* r0 = dst + (2 * y) * (2 * w);
      float* r1 = r0 + 2 * w;
      for (std::size_t x = 0; x < w; ++x) {
        const float v = src[y * w + x];
        r0[2 * x] = r0[2 * x + 1] = v;
        r1[2 * x] = r1[2 * x + 1] = v;
      }
    }
  }
  return out;
}

Tensor upsample_nearest2_backward(const Tensor& grad_output) {
  require_rank4(grad_output, "upsample_nearest2_backward");
  const std::size_t n = grad_output.dim(0), c = grad_output.dim(1);
  const std::size_t h = grad_output.dim(2) / 2, w = grad_output.dim(3) / 2;
  Tensor dx({n, c, h, w});
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const float* src = grad_output.ptr() + plane * 4 * h * w;
    float* dst = dx.ptr() + plane * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      const float* r0 = src + (2 * y) * (2 * w);
      const float* r1 = r0 + 2 * w;
      for (std::size_t x = 0; x < w; ++x) {
        dst[y * w + x] = (r0[2 * x] + r0[2 * x + 1]) + (r1[2 * x] + r1[2 * x + 1]);
      }
    }
  }
  return dx;
}

// -------------------------------------------------------------- batchnorm

BatchNormResult batchnorm_train(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                                float eps) {
  require_rank4(input, "batchnorm");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.size() != c || beta.size() != c) {
    throw std::invalid_argument("batchnorm: gamma/beta must have C elements");
  }
  const std::size_t count = n * hw;
  if (count < 2) throw std::invalid_argument("batchnorm: train mode needs N*H*W >= 2");
  BatchNormResult r{Tensor::like(input), {}};
  auto& cache = r.cache;
  cache.xhat = Tensor::like(input);
  cache.invstd.resize(c);
  cache.mean.assign(c, 0.0);
  cache.var.assign(c, 0.0);
  cache.count = count;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const float* p = input.ptr() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) sum += p[i];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const float* p = input.ptr() + (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double d = p[i] - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(count);
    const auto invstd = static_cast<float>(1.0 / std::sqrt(var + eps));
    cache.mean[ch] = mean;
    cache.var[ch] = var;
    cache.invstd[ch] = invstd;
    const auto m = static_cast<float>(mean);
    const float g = gamma[ch], bt = beta[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      const float* p = input.ptr() + off;
      float* xh = cache.xhat.ptr() + off;
      float* out = r.output.ptr() + off;
      for (std::size_t i = 0; i < hw; ++i) {
        xh[i] = (p[i] - m) * invstd;
        out[i] = g * xh[i] + bt;
      }
    }
  }
  return r;
}

Tensor batchnorm_infer(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                       const Tensor& running_mean, const Tensor& running_var, float eps) {
  require_rank4(input, "batchnorm");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c ||
      running_var.size() != c) {
    throw std::invalid_argument("batchnorm: per-channel tensors must have C elements");
  }
  Tensor out = Tensor::like(input);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float invstd = 1.0f / std::sqrt(running_var[ch] + eps);
    const float scale = gamma[ch] * invstd;
    const float shift = beta[ch] - running_mean[ch] * scale;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      const float* p = input.ptr() + off;
      float* o = out.ptr() + off;
      for (std::size_t i = 0; i < hw; ++i) o[i] = p[i] * scale + shift;
    }
  }
  return out;
}

void batchnorm_update_running(const BatchNormCache& cache, Tensor& running_mean,
                              Tensor& running_var, float momentum) {
  const std::size_t c = cache.mean.size();
  if (running_mean.size() != c || running_var.size() != c) {
    throw std::invalid_argument("batchnorm: running stats size mismatch");
  }
  const double unbias = static_cast<double>(cache.count) / static_cast<double>(cache.count - 1);
  for (std::size_t ch = 0; ch < c; ++ch) {
    running_mean[ch] = (1.0f - momentum) * running_mean[ch] +
                       momentum * static_cast<float>(cache.mean[ch]);
    running_var[ch] = (1.0f - momentum) * running_var[ch] +
                      momentum * static_cast<float>(cache.var[ch] * unbias);
  }
}

BatchNormGrads batchnorm_backward(const Tensor& grad_output, const BatchNormCache& cache,
                                  const Tensor& gamma) {
  const Tensor& xhat = cache.xhat;
  if (grad_output.shape() != xhat.shape()) {
    throw std::invalid_argument("batchnorm_backward: grad shape mismatch");
  }
  const std::size_t n = xhat.dim(0), c = xhat.dim(1), hw = xhat.dim(2) * xhat.dim(3);
  BatchNormGrads g{Tensor::like(xhat), Tensor({c}), Tensor({c})};
  const auto count = static_cast<double>(cache.count);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      const float* dy = grad_output.ptr() + off;
      const float* xh = xhat.ptr() + off;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += static_cast<double>(dy[i]) * xh[i];
      }
    }
    g.gamma[ch] = static_cast<float>(sum_dy_xhat);
    g.beta[ch] = static_cast<float>(sum_dy);
    // dx = gamma*invstd/M * (M*dy - sum(dy) - xhat*sum(dy*xhat))
    const auto mean_dy = static_cast<float>(sum_dy / count);
    const auto mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
    const float scale = gamma[ch] * cache.invstd[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      const float* dy = grad_output.ptr() + off;
      const float* xh = xhat.ptr() + off;
      float* dx = g.input.ptr() + off;
      for (std::size_t i = 0; i < hw; ++i) {
        dx[i] = scale * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
      }
    }
  }
  return g;
}

// ------------------------------------------------------------- leaky_relu

Tensor leaky_relu(const Tensor& input, float slope) {
  if (slope < 0.0f) throw std::invalid_argument("leaky_relu: negative slope");
  Tensor out = Tensor::like(input);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const float v = input[i];
    out[i] = v > 0.0f ? v : slope * v;
  }
  return out;
}

Tensor leaky_relu_backward(const Tensor& input, const Tensor& grad_output, float slope) {
  if (input.shape() != grad_output.shape()) {
    throw std::invalid_argument("leaky_relu_backward: shape mismatch");
  }
  Tensor dx = Tensor::like(input);
  for (std::size_t i = 0; i < input.size(); ++i) {
    dx[i] = input[i] > 0.0f ? grad_output[i] : slope * grad_output[i];
  }
  return dx;
}

// ---------------------------------------------------------------- dropout

DropoutResult dropout(const Tensor& input, float p, Rng& rng, bool active) {
  if (!(p >= 0.0f && p < 1.0f)) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(p));
  }
  if (!active || p == 0.0f) return {input, {}};
  DropoutResult r{Tensor::like(input), std::vector<float>(input.size())};
  const float keep_scale = 1.0f / (1.0f - p);
  for (std::size_t i = 0; i < input.size(); ++i) {
    const float m = rng.uniform() < p ? 0.0f : keep_scale;
    r.mask[i] = m;
    r.output[i] = input[i] * m;
  }
  return r;
}

Tensor dropout_backward(const Tensor& grad_output, const std::vector<float>& mask) {
  if (mask.empty()) return grad_output;
  if (mask.size() != grad_output.size()) {
    throw std::invalid_argument("dropout_backward: mask size mismatch");
  }
  Tensor dx = Tensor::like(grad_output);
  for (std::size_t i = 0; i < mask.size(); ++i) dx[i] = grad_output[i] * mask[i];
  return dx;
}

// ------------------------------------------------------------ concatenate

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw std::invalid_argument("concat_channels: incompatible shapes " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    float* dst = out.ptr() + i * (ca + cb) * hw;
    std::copy_n(a.ptr() + i * ca * hw, ca * hw, dst);
    std::copy_n(b.ptr() + i * cb * hw, cb * hw, dst + ca * hw);
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& grad, std::size_t ca) {
  require_rank4(grad, "split_channels");
  const std::size_t n = grad.dim(0), c = grad.dim(1), hw = grad.dim(2) * grad.dim(3);
  if (ca > c) throw std::invalid_argument("split_channels: split point beyond channels");
  const std::size_t cb = c - ca;
  Tensor a({n, ca, grad.dim(2), grad.dim(3)});
  Tensor b({n, cb, grad.dim(2), grad.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    const float* src = grad.ptr() + i * c * hw;
    std::copy_n(src, ca * hw, a.ptr() + i * ca * hw);
    std::copy_n(src + ca * hw, cb * hw, b.ptr() + i * cb * hw);
  }
  return {std::move(a), std::move(b)};
}

// ------------------------------------------------------------------ loss

LossResult softmax_cross_entropy(const Tensor& logits, const Tensor& target, std::size_t classes) {
  require_rank4(logits, "softmax_cross_entropy");
  const std::size_t n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (classes < 2 || classes > c) {
    throw std::invalid_argument("softmax_cross_entropy: logits have too few channels");
  }
  if (target.size() != n * h * w) {
    throw std::invalid_argument("softmax_cross_entropy: target must be [N,H,W] matching logits " +
                                shape_str(logits.shape()));
  }
  const std::size_t hw = h * w;
  const double count = static_cast<double>(n * hw);
  LossResult r{0.0, Tensor::like(logits)};
  std::vector<double> z(classes);
  for (std::size_t b = 0; b < n; ++b) {
    const float* lp = logits.ptr() + b * c * hw;
    float* gp = r.grad.ptr() + b * c * hw;
    for (std::size_t i = 0; i < hw; ++i) {
      const auto label = static_cast<std::size_t>(target[b * hw + i]);
      if (label >= classes) {
        throw std::invalid_argument("softmax_cross_entropy: target label out of range");
      }
      double zmax = lp[i];
      for (std::size_t k = 0; k < classes; ++k) {
        z[k] = lp[k * hw + i];
        zmax = std::max(zmax, z[k]);
      }
      double sum = 0.0;
      for (std::size_t k = 0; k < classes; ++k) sum += std::exp(z[k] - zmax);
      const double lse = zmax + std::log(sum);
      r.loss += lse - z[label];
      for (std::size_t k = 0; k < classes; ++k) {
        const double prob = std::exp(z[k] - lse);
        gp[k * hw + i] = static_cast<float>((prob - (k == label ? 1.0 : 0.0)) / count);
      }
    }
  }
  r.loss /= count;
  return r;
}

Tensor foreground_probability(const Tensor& logits) {
  require_rank4(logits, "foreground_probability");
  const std::size_t n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (c < 2) throw std::invalid_argument("foreground_probability: need two logit channels");
  const std::size_t hw = h * w;
  Tensor p({n, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    const float* l0 = logits.ptr() + b * c * hw;
    const float* l1 = l0 + hw;
    for (std::size_t i = 0; i < hw; ++i) {
      // sigmoid(l1 - l0), branch keeps exp() argument non-positive
      const float d = l1[i] - l0[i];
      p[b * hw + i] = d >= 0.0f ? 1.0f / (1.0f + std::exp(-d))
                                : std::exp(d) / (1.0f + std::exp(d));
    }
  }
  return p;
}

}  // namespace uncertseg::ops
