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

#include <stdexcept>

namespace speculens {

/// Incompatible shapes. The message names the offending axis.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range scalar argument (factor < 1, non-scalar loss, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value or missing required setting.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File could not be read or written. The message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric has no pixels/items to average over.
class UndefinedMetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Degenerate point configuration for a geometric solver.
class DegeneracyError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Robust estimation found no acceptable model.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace speculens
