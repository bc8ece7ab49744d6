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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "speculens/imaging.hpp"

namespace speculens {

/// PSNR reported for a zero error.
inline constexpr double kPsnrCap = 100.0;

/// Mean squared error on the 8-bit scale over the masked pixels of all three
/// channels. Throws UndefinedMetricError for an empty mask.
double masked_mse(const Frame& y, const Frame& y_hat, const Mask& m);

/// 10 log10(255^2 / mse), capped at kPsnrCap.
double psnr_from_mse(double mse);
double masked_psnr(const Frame& y, const Frame& y_hat, const Mask& m);

/// Mean of per-group means. Empty groups are skipped; throws
/// UndefinedMetricError when every group is empty.
double two_level_mean(const std::vector<std::vector<double>>& groups);

using DisparityMap = Plane;

struct DisparityPair {
  DisparityMap estimate;
  DisparityMap ground_truth;
  Mask valid;
  Mask occluded;
};

struct DisparityErrors {
  /// Fraction of evaluated pixels with |error| > 3 px.
  double bad3 = 0;
  double rms = 0;
  double epe = 0;
  std::size_t count = 0;
};

DisparityErrors disparity_errors(const DisparityPair& pair, bool include_occluded);

/// Linear interpolation between closest ranks: position p/100 * (n - 1).
double percentile(std::vector<double> values, double p);

struct DeltaSummary {
  double mean_orig = 0, mean_inp = 0;
  double mean = 0, min = 0, max = 0, p25 = 0, median = 0, p75 = 0, iqr = 0;
  /// 100 * mean / mean_orig; absent when mean_orig is zero.
  std::optional<double> mean_percent;
  std::size_t count = 0;
};

/// Statistics of delta = orig - inp.
DeltaSummary delta_summary(const std::vector<double>& orig, const std::vector<double>& inp);

// --- Reports ------------------------------------------------------------------

/// Shortest text that reads back to the same double.
std::string format_number(double v);

/// A table of per-item rows plus optional summary rows, written as CSV.
struct MetricReport {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  void write_csv(const std::filesystem::path& path) const;
  std::string to_csv() const;
};

/// Columns: statistic, orig, inp, delta ... one row per DeltaSummary field.
MetricReport delta_report(const std::string& metric, const DeltaSummary& s);
void append_delta_rows(MetricReport& report, const std::string& metric, const DeltaSummary& s);

// --- Disparity files -----------------------------------------------------------

/// 16-bit PNG (value / 256, zero meaning invalid) or PFM.
DisparityMap load_disparity(const std::filesystem::path& path);
/// Ground-truth validity: finite and > 0.
Mask disparity_validity(const DisparityMap& gt);

/// Reads a CSV manifest with columns experiment, modality, gt, occlusion,
/// est_orig, est_inp (paths relative to the manifest) and returns one row per
/// (experiment, modality, occluded) with orig, inp and delta values of bad3,
/// rms and epe. An empty occlusion path means no occluded pixels.
MetricReport evaluate_disparity_manifest(const std::filesystem::path& manifest);

}  // namespace speculens
