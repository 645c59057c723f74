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


#include "uncertseg/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>
#include <vector>

#include "uncertseg/io.hpp"

namespace uncertseg {

namespace {

constexpr const char* kFormatLine = "format uncertseg-checkpoint 1";

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(v[i]);
  }
  return s;
}

std::string entry_file(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%03zu.tnsr", index);
  return buf;
}

float parse_float(const std::string& s) {
  float v = 0.0f;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw FormatError("checkpoint: bad number '" + s + "'");
  }
  return v;
}

struct Manifest {
  ArchitectureSpec spec;
  std::vector<std::pair<std::string, std::string>> params;   // name, file
  std::vector<std::pair<std::string, std::string>> buffers;  // name, file
  std::map<std::string, std::string> metadata;
  std::size_t declared_sites = 0;
};

Manifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.txt";
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("checkpoint manifest not found: " + path.string());
  }
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line) || line != kFormatLine) {
    throw FormatError("checkpoint: unrecognized manifest header in " + path.string());
  }
  Manifest m;
  m.spec.dropout_plan.clear();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    auto read_sizes = [&] {
      std::vector<std::size_t> v;
      std::size_t x;
      while (ls >> x) v.push_back(x);
      return v;
    };
    if (key == "variant") {
      std::string v;
      ls >> v;
      m.spec.variant = parse_variant(v);
    } else if (key == "encoder_channels") {
      m.spec.encoder_channels = read_sizes();
    } else if (key == "decoder_channels") {
      m.spec.decoder_channels = read_sizes();
    } else if (key == "input_channels") {
      ls >> m.spec.input_channels;
    } else if (key == "output_channels") {
      ls >> m.spec.output_channels;
    } else if (key == "dropout_sites") {
      ls >> m.declared_sites;
    } else if (key == "dropout") {
      std::string name, rate;
      ls >> name >> rate;
      std::size_t block = kBlockCount;
      for (std::size_t b = 0; b < kBlockCount; ++b) {
        if (block_name(b) == name) block = b;
      }
      if (block == kBlockCount) throw FormatError("checkpoint: unknown block " + name);
      m.spec.dropout_plan[block] = parse_float(rate);
    } else if (key == "param" || key == "buffer") {
      std::string name, file;
      ls >> name >> file;
      (key == "param" ? m.params : m.buffers).emplace_back(name, file);
    } else if (key == "meta") {
      std::string k, rest;
      ls >> k;
      std::getline(ls >> std::ws, rest);
      m.metadata[k] = rest;
    } else {
      throw FormatError("checkpoint: unknown manifest key '" + key + "'");
    }
  }
  if (m.declared_sites != m.spec.dropout_plan.size()) {
    throw FormatError("checkpoint: dropout_sites count disagrees with dropout lines");
  }
  return m;
}

}  // namespace

std::string format_float(float v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void save_checkpoint(const std::filesystem::path& dir, const Network& net,
                     const std::map<std::string, std::string>& metadata) {
  std::filesystem::create_directories(dir);
  const ArchitectureSpec& spec = net.spec();
  std::ostringstream m;
  m << kFormatLine << '\n';
  m << "variant " << to_string(spec.variant) << '\n';
  m << "encoder_channels " << join(spec.encoder_channels) << '\n';
  m << "decoder_channels " << join(spec.decoder_channels) << '\n';
  m << "input_channels " << spec.input_channels << '\n';
  m << "output_channels " << spec.output_channels << '\n';
  const auto sites = net.dropout_sites();
  m << "dropout_sites " << sites.size() << '\n';
  for (const auto& site : sites) m << "dropout " << site.name << ' ' << format_float(site.rate) << '\n';
  for (const auto& [k, v] : metadata) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw std::invalid_argument("checkpoint metadata must be single-line, key without spaces");
    }
    m << "meta " << k << ' ' << v << '\n';
  }
  std::size_t index = 0;
  for (const Parameter& p : net.parameters()) {
    const std::string file = entry_file(index++);
    save_tensor(dir / file, p.value);
    m << "param " << p.name << ' ' << file << '\n';
  }
  for (const auto& [name, t] : net.buffers()) {
    const std::string file = entry_file(index++);
    save_tensor(dir / file, t);
    m << "buffer " << name << ' ' << file << '\n';
  }
  write_text(dir / "manifest.txt", m.str());
}

Network load_checkpoint(const std::filesystem::path& dir) {
  Manifest m = read_manifest(dir);
  Network net = Network::build(m.spec, 0);
  auto& params = net.parameters();
  auto& buffers = net.buffers();
  if (m.params.size() != params.size() || m.buffers.size() != buffers.size()) {
    throw FormatError("checkpoint: entry count does not match the architecture");
  }
  auto restore = [&](const std::string& expected, const std::pair<std::string, std::string>& entry,
                     Tensor& dst) {
    if (entry.first != expected) {
      throw FormatError("checkpoint: expected entry " + expected + ", found " + entry.first);
    }
    Tensor t = load_tensor(dir / entry.second);
    if (t.shape() != dst.shape()) {
      throw FormatError("checkpoint: shape mismatch for " + expected + ": " +
                        shape_str(t.shape()) + " vs " + shape_str(dst.shape()));
    }
    dst = std::move(t);
  };
  for (std::size_t i = 0; i < params.size(); ++i) restore(params[i].name, m.params[i], params[i].value);
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    restore(buffers[i].first, m.buffers[i], buffers[i].second);
  }
  return net;
}

std::map<std::string, std::string> load_checkpoint_metadata(const std::filesystem::path& dir) {
  return read_manifest(dir).metadata;
}

}  // namespace uncertseg
