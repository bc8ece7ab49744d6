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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <spdlog/fmt/fmt.h>

#include "speculens/metrics.hpp"

namespace speculens {

using Eigen::Index;

double masked_mse(const Frame& y, const Frame& y_hat, const Mask& m) {
  if (y.height() != y_hat.height() || y.width() != y_hat.width() || m.rows() != y.height() || m.cols() != y.width()) {
    throw DimensionError("masked_mse: frame and mask sizes differ");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) {
      if (!m(r, c)) continue;
      for (int ch = 0; ch < 3; ++ch) {
        const double d = 255.0 * y[ch](r, c) - 255.0 * y_hat[ch](r, c);
        sum += d * d;
      }
      n += 3;
    }
  if (n == 0) throw UndefinedMetricError("masked_mse: empty mask");
  return sum / static_cast<double>(n);
}

double psnr_from_mse(double mse) {
  if (mse < 0.0 || std::isnan(mse)) throw ParameterError("psnr_from_mse: invalid MSE");
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double masked_psnr(const Frame& y, const Frame& y_hat, const Mask& m) { return psnr_from_mse(masked_mse(y, y_hat, m)); }

double two_level_mean(const std::vector<std::vector<double>>& groups) {
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& g : groups) {
    if (g.empty()) continue;
    total += std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    ++used;
  }
  if (used == 0) throw UndefinedMetricError("two_level_mean: no non-empty groups");
  return total / static_cast<double>(used);
}

DisparityErrors disparity_errors(const DisparityPair& p, bool include_occluded) {
  const Index h = p.ground_truth.rows(), w = p.ground_truth.cols();
  if (p.estimate.rows() != h || p.estimate.cols() != w || p.valid.rows() != h || p.valid.cols() != w ||
      p.occluded.rows() != h || p.occluded.cols() != w) {
    throw DimensionError("disparity_errors: maps differ in size");
  }
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t bad = 0, n = 0;
  for (Index r = 0; r < h; ++r)
    for (Index c = 0; c < w; ++c) {
      if (!p.valid(r, c) || (!include_occluded && p.occluded(r, c))) continue;
      const double d = std::abs(p.estimate(r, c) - p.ground_truth(r, c));
      abs_sum += d;
      sq_sum += d * d;
      if (d > 3.0) ++bad;
      ++n;
    }
  if (n == 0) throw UndefinedMetricError("disparity_errors: no evaluable pixels");
  const double dn = static_cast<double>(n);
  return {static_cast<double>(bad) / dn, std::sqrt(sq_sum / dn), abs_sum / dn, n};
}

double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw UndefinedMetricError("percentile of an empty list");
  if (p < 0.0 || p > 100.0) throw ParameterError("percentile: p must be in [0, 100]");
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

DeltaSummary delta_summary(const std::vector<double>& orig, const std::vector<double>& inp) {
  if (orig.size() != inp.size()) throw DimensionError("delta_summary: lists differ in length");
  if (orig.empty()) throw UndefinedMetricError("delta_summary: empty lists");
  std::vector<double> delta(orig.size());
  for (std::size_t i = 0; i < orig.size(); ++i) delta[i] = orig[i] - inp[i];
  const double n = static_cast<double>(orig.size());
  DeltaSummary s;
  s.count = orig.size();
  s.mean_orig = std::accumulate(orig.begin(), orig.end(), 0.0) / n;
  s.mean_inp = std::accumulate(inp.begin(), inp.end(), 0.0) / n;
  s.mean = std::accumulate(delta.begin(), delta.end(), 0.0) / n;
  s.min = *std::min_element(delta.begin(), delta.end());
  s.max = *std::max_element(delta.begin(), delta.end());
  s.p25 = percentile(delta, 25.0);
  s.median = percentile(delta, 50.0);
  s.p75 = percentile(delta, 75.0);
  s.iqr = s.p75 - s.p25;
  if (s.mean_orig != 0.0) s.mean_percent = 100.0 * s.mean / s.mean_orig;
  return s;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{}", v);
}

void MetricReport::add_row(std::vector<std::string> row) {
  if (row.size() != columns.size()) {
    throw DimensionError("report row has " + std::to_string(row.size()) + " fields, expected " +
                         std::to_string(columns.size()));
  }
  rows.push_back(std::move(row));
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  auto line = [&out](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out << (i ? "," : "") << fields[i];
    out << '\n';
  };
  line(columns);
  for (const auto& r : rows) line(r);
  return out.str();
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv();
  if (!out) throw IoError("cannot write " + path.string());
}

void append_delta_rows(MetricReport& report, const std::string& metric, const DeltaSummary& s) {
  const auto row = [&](const char* stat, double v) { report.add_row({metric, stat, format_number(v)}); };
  row("mean_orig", s.mean_orig);
  row("mean_inp", s.mean_inp);
  row("mean_delta", s.mean);
  report.add_row({metric, "mean_delta_percent", s.mean_percent ? format_number(*s.mean_percent) : ""});
  row("min_delta", s.min);
  row("max_delta", s.max);
  row("p25_delta", s.p25);
  row("median_delta", s.median);
  row("p75_delta", s.p75);
  row("iqr_delta", s.iqr);
  report.add_row({metric, "count", std::to_string(s.count)});
}

MetricReport delta_report(const std::string& metric, const DeltaSummary& s) {
  MetricReport r;
  r.columns = {"metric", "statistic", "value"};
  append_delta_rows(r, metric, s);
  return r;
}

}  // namespace speculens
