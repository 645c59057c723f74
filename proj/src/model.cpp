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


#include "uncertseg/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace uncertseg {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::UNet:
      return "unet";
    case Variant::U2Net:
      return "u2net";
    case Variant::BUNet:
      return "bunet";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "unet" || s == "u-net") return Variant::UNet;
  if (s == "u2net" || s == "u2-net") return Variant::U2Net;
  if (s == "bunet" || s == "bu-net") return Variant::BUNet;
  throw std::invalid_argument("unknown architecture '" + name + "' (expected unet, u2net, bunet)");
}

std::map<std::size_t, float> default_dropout_plan(Variant variant) {
  std::map<std::size_t, float> plan;
  if (variant == Variant::UNet) {
    plan[kBottleneckBlock] = 0.5f;
    return plan;
  }
  for (std::size_t b = 1; b + 1 < kBlockCount; ++b) plan[b] = 0.1f;
  plan[kBottleneckBlock] = 0.5f;
  return plan;
}

ArchitectureSpec ArchitectureSpec::make(Variant variant, std::size_t base_width) {
  if (base_width == 0) throw std::invalid_argument("base width must be positive");
  ArchitectureSpec spec;
  spec.variant = variant;
  spec.encoder_channels.clear();
  spec.decoder_channels.clear();
  for (std::size_t i = 0; i < kEncoderBlocks; ++i) spec.encoder_channels.push_back(base_width << i);
  for (std::size_t i = 0; i < kDecoderBlocks; ++i) {
    spec.decoder_channels.push_back(base_width << (kDecoderBlocks - 1 - i));
  }
  spec.dropout_plan = default_dropout_plan(variant);
  spec.output_channels = variant == Variant::BUNet ? 3 : 2;
  return spec;
}

void ArchitectureSpec::validate() const {
  if (encoder_channels.size() != kEncoderBlocks || decoder_channels.size() != kDecoderBlocks) {
    throw std::invalid_argument("architecture needs 5 encoder and 4 decoder channel counts");
  }
  const auto zero = [](std::size_t c) { return c == 0; };
  if (std::any_of(encoder_channels.begin(), encoder_channels.end(), zero) ||
      std::any_of(decoder_channels.begin(), decoder_channels.end(), zero) ||
      input_channels == 0) {
    throw std::invalid_argument("architecture channel counts must be positive");
  }
  const std::size_t expected_out = variant == Variant::BUNet ? 3 : 2;
  if (output_channels != expected_out) {
    throw std::invalid_argument(to_string(variant) + " needs " + std::to_string(expected_out) +
                                " output channels");
  }
  for (const auto& [block, rate] : dropout_plan) {
    if (block >= kBlockCount) throw std::invalid_argument("dropout plan names a missing block");
    if (!(rate >= 0.0f && rate < 1.0f)) throw std::invalid_argument("dropout rate outside [0,1)");
  }
}

std::string block_name(std::size_t block) {
  if (block < kEncoderBlocks) return "enc" + std::to_string(block);
  return "dec" + std::to_string(block - kEncoderBlocks);
}

Network Network::build(const ArchitectureSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net;
  net.spec_ = spec;
  Rng rng(seed);

  auto add_conv = [&](const std::string& name, std::size_t cout, std::size_t cin, std::size_t k,
                      std::size_t& widx, std::size_t& bidx) {
    Tensor w({cout, cin, k, k});
    const double stddev = std::sqrt(2.0 / static_cast<double>(cin * k * k));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<float>(rng.normal() * stddev);
    widx = net.params_.size();
    net.params_.emplace_back(name + ".weight", std::move(w));
    bidx = net.params_.size();
    net.params_.emplace_back(name + ".bias", Tensor({cout}));
  };

  auto add_unit = [&](const std::string& name, std::size_t cin, std::size_t cout) {
    Unit u{};
    add_conv(name + ".conv", cout, cin, 3, u.weight, u.bias);
    u.gamma = net.params_.size();
    net.params_.emplace_back(name + ".bn.gamma", Tensor({cout}, 1.0f));
    u.beta = net.params_.size();
    net.params_.emplace_back(name + ".bn.beta", Tensor({cout}));
    u.running_mean = net.buffers_.size();
    net.buffers_.emplace_back(name + ".bn.running_mean", Tensor({cout}));
    u.running_var = net.buffers_.size();
    net.buffers_.emplace_back(name + ".bn.running_var", Tensor({cout}, 1.0f));
    return u;
  };

  std::size_t in = spec.input_channels;
  for (std::size_t e = 0; e < kEncoderBlocks; ++e) {
    Block blk;
    blk.in_channels = in;
    blk.out_channels = spec.encoder_channels[e];
    blk.units[0] = add_unit(block_name(e) + ".0", in, blk.out_channels);
    blk.units[1] = add_unit(block_name(e) + ".1", blk.out_channels, blk.out_channels);
    net.blocks_.push_back(blk);
    in = blk.out_channels;
  }
  for (std::size_t d = 0; d < kDecoderBlocks; ++d) {
    const std::size_t b = kEncoderBlocks + d;
    Block blk;
    blk.in_channels = spec.encoder_channels[kEncoderBlocks - 2 - d] + in;
    blk.out_channels = spec.decoder_channels[d];
    blk.units[0] = add_unit(block_name(b) + ".0", blk.in_channels, blk.out_channels);
    blk.units[1] = add_unit(block_name(b) + ".1", blk.out_channels, blk.out_channels);
    net.blocks_.push_back(blk);
    in = blk.out_channels;
  }
  add_conv("head", spec.output_channels, in, 1, net.head_weight_, net.head_bias_);
  return net;
}

void Network::check_input(const Tensor& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != spec_.input_channels) {
    throw std::invalid_argument("forward: expected [N," + std::to_string(spec_.input_channels) +
                                ",H,W] input, got " + shape_str(batch.shape()));
  }
  const std::size_t h = batch.dim(2), w = batch.dim(3);
  if (h % 16 != 0 || w % 16 != 0 || h == 0 || w == 0) {
    const auto pad = [](std::size_t v) { return (16 - v % 16) % 16; };
    throw std::invalid_argument("forward: spatial size " + std::to_string(h) + "x" +
                                std::to_string(w) +
                                " must be divisible by 16; pad by " + std::to_string(pad(h)) +
                                " rows and " + std::to_string(pad(w)) + " columns");
  }
}

Tensor Network::run_block(std::size_t b, const Tensor& x, Mode mode, Rng& rng,
                          Trace::Block* trace) const {
  const Block& blk = blocks_[b];
  Tensor h = x;
  for (int u = 0; u < 2; ++u) {
    const Unit& unit = blk.units[u];
    Tensor conv = ops::conv2d(h, params_[unit.weight].value, params_[unit.bias].value, 1);
    Tensor normed;
    if (mode == Mode::Train) {
      auto bn = ops::batchnorm_train(conv, params_[unit.gamma].value, params_[unit.beta].value);
      normed = std::move(bn.output);
      if (trace) {
        trace->units[u].input = std::move(h);
        trace->units[u].bn = std::move(bn.cache);
        trace->units[u].bn_out = normed;
      }
    } else {
      normed = ops::batchnorm_infer(conv, params_[unit.gamma].value, params_[unit.beta].value,
                                    buffers_[unit.running_mean].second,
                                    buffers_[unit.running_var].second);
    }
    h = ops::leaky_relu(normed);
  }
  const auto it = spec_.dropout_plan.find(b);
  if (it != spec_.dropout_plan.end()) {
    auto dr = ops::dropout(h, it->second, rng, mode != Mode::Eval);
    if (trace) trace->dropout_mask = std::move(dr.mask);
    h = std::move(dr.output);
  }
  return h;
}

Tensor Network::run(const Tensor& batch, Mode mode, Rng& rng, Trace* trace) const {
  check_input(batch);
  if (trace) {
    *trace = Trace{};
    trace->blocks.resize(kBlockCount);
    trace->trainable = mode == Mode::Train;
  }
  std::vector<Tensor> skips;
  Tensor x = batch;
  for (std::size_t e = 0; e < kEncoderBlocks; ++e) {
    Tensor h = run_block(e, x, mode, rng, trace ? &trace->blocks[e] : nullptr);
    if (e == kBottleneckBlock) {
      x = std::move(h);
      break;
    }
    auto pooled = ops::maxpool2(h);
    if (trace) {
      trace->pool_argmax.push_back(std::move(pooled.argmax));
      trace->pool_input_shapes.push_back(h.shape());
    }
    skips.push_back(std::move(h));
    x = std::move(pooled.output);
  }
  for (std::size_t d = 0; d < kDecoderBlocks; ++d) {
    const std::size_t b = kEncoderBlocks + d;
    Tensor cat = ops::concat_channels(skips[kEncoderBlocks - 2 - d], ops::upsample_nearest2(x));
    x = run_block(b, cat, mode, rng, trace ? &trace->blocks[b] : nullptr);
  }
  Tensor logits = ops::conv2d(x, params_[head_weight_].value, params_[head_bias_].value, 0);
  if (trace) trace->head_input = std::move(x);
  return logits;
}

Tensor Network::forward(const Tensor& batch, Rng& rng, Trace* trace) {
  if (mode_ != Mode::Train) {
    Tensor out = run(batch, mode_, rng, trace);
    return out;
  }
  Trace local;
  Trace& t = trace ? *trace : local;
  Tensor out = run(batch, Mode::Train, rng, &t);
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    for (int u = 0; u < 2; ++u) {
      const Unit& unit = blocks_[b].units[u];
      ops::batchnorm_update_running(t.blocks[b].units[u].bn, buffers_[unit.running_mean].second,
                                    buffers_[unit.running_var].second);
    }
  }
  return out;
}

Tensor Network::predict(const Tensor& batch, Rng& rng) const {
  if (mode_ == Mode::Train) {
    throw std::logic_error("predict: network is in train mode; use Eval or McSample");
  }
  return run(batch, mode_, rng, nullptr);
}

Tensor Network::backward_block(std::size_t b, const Trace::Block& trace, const Tensor& grad) {
  const Block& blk = blocks_[b];
  Tensor g = ops::dropout_backward(grad, trace.dropout_mask);
  for (int u = 1; u >= 0; --u) {
    const Unit& unit = blk.units[u];
    const Trace::Unit& tu = trace.units[u];
    g = ops::leaky_relu_backward(tu.bn_out, g);
    auto bn = ops::batchnorm_backward(g, tu.bn, params_[unit.gamma].value);
    auto accumulate = [](Tensor& dst, const Tensor& src) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    accumulate(params_[unit.gamma].grad, bn.gamma);
    accumulate(params_[unit.beta].grad, bn.beta);
    auto conv = ops::conv2d_backward(tu.input, params_[unit.weight].value, bn.input, 1);
    accumulate(params_[unit.weight].grad, conv.weight);
    accumulate(params_[unit.bias].grad, conv.bias);
    g = std::move(conv.input);
  }
  return g;
}

void Network::backward(const Trace& trace, const Tensor& grad_logits) {
  if (!trace.trainable) {
    throw std::logic_error("backward: trace was not recorded by a train-mode forward pass");
  }
  auto accumulate = [](Tensor& dst, const Tensor& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  };
  auto head = ops::conv2d_backward(trace.head_input, params_[head_weight_].value, grad_logits, 0);
  accumulate(params_[head_weight_].grad, head.weight);
  accumulate(params_[head_bias_].grad, head.bias);
  Tensor g = std::move(head.input);

  std::vector<Tensor> skip_grads(kEncoderBlocks - 1);
  for (std::size_t d = kDecoderBlocks; d-- > 0;) {
    const std::size_t b = kEncoderBlocks + d;
    Tensor gcat = backward_block(b, trace.blocks[b], g);
    const std::size_t skip = kEncoderBlocks - 2 - d;
    auto [gskip, gup] = ops::split_channels(gcat, spec_.encoder_channels[skip]);
    skip_grads[skip] = std::move(gskip);
    g = ops::upsample_nearest2_backward(gup);
  }
  for (std::size_t e = kEncoderBlocks; e-- > 0;) {
    if (e != kBottleneckBlock) {
      Tensor gp = ops::maxpool2_backward(g, trace.pool_argmax[e], trace.pool_input_shapes[e]);
      accumulate(gp, skip_grads[e]);
      g = std::move(gp);
    }
    g = backward_block(e, trace.blocks[e], g);
  }
}

void Network::zero_grad() {
  for (Parameter& p : params_) p.zero_grad();
}

std::size_t Network::count_parameters() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

std::vector<DropoutSite> Network::dropout_sites() const {
  std::vector<DropoutSite> sites;
  for (const auto& [block, rate] : spec_.dropout_plan) {
    if (rate > 0.0f) sites.push_back({block, block_name(block), rate});
  }
  return sites;
}

void Network::set_dropout_rate(std::size_t block, float rate) {
  if (block >= kBlockCount) throw std::out_of_range("set_dropout_rate: no such block");
  if (!(rate >= 0.0f && rate < 1.0f)) throw std::invalid_argument("dropout rate outside [0,1)");
  if (rate == 0.0f) {
    spec_.dropout_plan.erase(block);
  } else {
    spec_.dropout_plan[block] = rate;
  }
}

void Network::disable_dropout() { spec_.dropout_plan.clear(); }

ops::LossResult bunet_loss(const Tensor& output, const Tensor& target, int noise_samples,
                           Rng& rng) {
  if (output.rank() != 4 || output.dim(1) != 3) {
    throw std::invalid_argument("bunet_loss: expected [N,3,H,W] output, got " +
                                shape_str(output.shape()));
  }
  if (noise_samples < 1) throw std::invalid_argument("bunet_loss: noise_samples must be >= 1");
  const std::size_t n = output.dim(0), h = output.dim(2), w = output.dim(3), hw = h * w;
  ops::LossResult total{0.0, Tensor::like(output)};
  Tensor noisy({n, 2, h, w});
  Tensor eps({n, 2, h, w});
  Tensor sigma({n, 1, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < hw; ++i) {
      sigma[b * hw + i] = std::exp(0.5f * output[(b * 3 + 2) * hw + i]);
    }
  }
  const float inv_samples = 1.0f / static_cast<float>(noise_samples);
  for (int s = 0; s < noise_samples; ++s) {
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < hw; ++i) {
          const auto e = static_cast<float>(rng.normal());
          const std::size_t k = (b * 2 + c) * hw + i;
          eps[k] = e;
          noisy[k] = output[(b * 3 + c) * hw + i] + sigma[b * hw + i] * e;
        }
      }
    }
    auto ce = ops::softmax_cross_entropy(noisy, target);
    total.loss += ce.loss;
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t i = 0; i < hw; ++i) {
        float dlogvar = 0.0f;
        for (std::size_t c = 0; c < 2; ++c) {
          const std::size_t k = (b * 2 + c) * hw + i;
          total.grad[(b * 3 + c) * hw + i] += ce.grad[k] * inv_samples;
          // d(sigma*eps)/d logvar = 0.5 * sigma * eps
          dlogvar += ce.grad[k] * eps[k];
        }
        total.grad[(b * 3 + 2) * hw + i] += 0.5f * sigma[b * hw + i] * dlogvar * inv_samples;
      }
    }
  }
  total.loss /= noise_samples;
  return total;
}

}  // namespace uncertseg
