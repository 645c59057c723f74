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

#include <filesystem>
#include <map>
#include <string>

#include "uncertseg/model.hpp"

namespace uncertseg {

/// A checkpoint is a directory holding `manifest.txt` plus one TNSR file per
/// parameter and running-statistics buffer. The manifest records the
/// architecture, the dropout sites and the ordered tensor entries:
///
///   format uncertseg-checkpoint 1
///   variant u2net
///   encoder_channels 8 16 32 64 128
///   ...
///   dropout_sites 7
///   dropout enc1 0.1
///   ...
///   param enc0.0.conv.weight t000.tnsr
///   buffer enc0.0.bn.running_mean t050.tnsr
///
/// `metadata` lines are written as `meta <key> <value>` and returned by
/// load_checkpoint_metadata.
void save_checkpoint(const std::filesystem::path& dir, const Network& net,
                     const std::map<std::string, std::string>& metadata = {});

Network load_checkpoint(const std::filesystem::path& dir);

std::map<std::string, std::string> load_checkpoint_metadata(const std::filesystem::path& dir);

/// Shortest round-trippable decimal form of a float.
std::string format_float(float v);
std::string format_double(double v);

}  // namespace uncertseg
