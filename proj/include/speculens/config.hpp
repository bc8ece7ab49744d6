/*
 * Copyright 2026 The Speculens Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "speculens/geometry.hpp"
#include "speculens/highlight.hpp"
#include "speculens/pseudo_gt.hpp"
#include "speculens/trainer.hpp"

namespace speculens {

// --- Config text ---------------------------------------------------------------
// A subset of TOML: [section] headers, key = value lines and # comments.
// Values are integers, floats, booleans, "strings" and flat [arrays].

struct ConfigValue;
using ConfigArray = std::vector<ConfigValue>;

struct ConfigValue {
  std::variant<std::int64_t, double, bool, std::string, ConfigArray> data;
  /// Line in the source text, for messages.
  int line = 0;
};

/// section -> key -> value. Top-level keys live in section "".
using ConfigDocument = std::map<std::string, std::map<std::string, ConfigValue>>;

/// Throws ConfigError with the line number on malformed input or duplicate keys.
ConfigDocument parse_config_text(const std::string& text);

// --- Pipeline settings -----------------------------------------------------------

enum class MaskSource { orig, trans };
const char* mask_source_name(MaskSource s);
/// Throws ConfigError for anything but "orig" or "trans".
MaskSource parse_mask_source(const std::string& name);

struct EvalSettings {
  SamplingConfig sampling;
  /// Evaluate with single-frame windows.
  bool single_frame = false;
  /// 64-bit inference.
  bool double_precision = true;
};

struct GeometrySettings {
  PoseEvalConfig pose;
  /// Grid step for flow correspondences.
  int flow_stride = 8;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  DetectorConfig detector;
  /// Offset, dilation, split fraction and frame size of the pseudo-GT dataset.
  DatasetConfig pseudo_gt;
  ModelConfig model;
  TrainConfig train;
  EvalSettings eval;
  GeometrySettings geometry;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Reads a document into a PipelineConfig. Unknown sections or keys, wrong
/// value types and a missing top-level `seed` throw ConfigError naming the
/// key. The seed is copied into every section that takes one.
PipelineConfig pipeline_config_from(const ConfigDocument& doc);
PipelineConfig parse_pipeline_config(const std::string& text);
/// Throws IoError when the file cannot be read.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Every setting, defaults included, in the same text format. Parsing the echo
/// gives back an equal configuration.
std::string config_text(const PipelineConfig& cfg);

/// Writes <dir>/config.toml (the effective config) and <dir>/VERSION.
void write_run_metadata(const std::filesystem::path& dir, const PipelineConfig& cfg);

}  // namespace speculens
