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
#include <random>

#include "speculens/sttn.hpp"

namespace speculens {

GradcheckConfig GradcheckConfig::micro() {
  GradcheckConfig g;
  g.model.image_size = 36;
  g.model.channels = 8;
  g.model.layers = 1;
  g.model.heads = {{9, 9}, {3, 3}};
  g.model.encoder_width1 = 4;
  g.model.encoder_width2 = 8;
  g.model.decoder_width = 4;
  g.model.disc_width1 = 4;
  g.model.disc_width2 = 4;
  return g;
}

GradcheckResult gradcheck_generator(const GradcheckConfig& cfg) {
  if (cfg.frames < 1) throw ConfigError("gradcheck.frames must be >= 1");
  if (!(cfg.step > 0.0)) throw ConfigError("gradcheck.step must be > 0");
  Generator<double> gen(cfg.model, cfg.seed);
  const Index n = cfg.frames, s = cfg.model.image_size;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(n * 3 * s * s)), y(x.size()), m(static_cast<std::size_t>(n * s * s));
  for (auto& v : x) v = unit(rng);
  for (auto& v : y) v = unit(rng);
  // A rectangular hole per frame, shifted so that frames differ.
  for (Index t = 0; t < n; ++t)
    for (Index r = 0; r < s; ++r)
      for (Index c = 0; c < s; ++c) {
        const bool hole = r >= s / 4 && r < s / 2 && c >= s / 4 + 3 * t && c < s / 2 + 3 * t;
        m[static_cast<std::size_t>((t * s + r) * s + c)] = hole ? 1.0 : 0.0;
      }
  const Tensor<double> frames(Shape{n, 3, s, s}, x), target(Shape{n, 3, s, s}, y), masks(Shape{n, 1, s, s}, m);

  auto loss = [&](std::vector<std::uint8_t>* trace = nullptr) {
    set_branch_trace(trace);
    const Tensor<double> out = gen.forward(frames, masks);
    const Tensor<double> l = add(loss_hole(target, out, masks), loss_valid(target, out, masks));
    set_branch_trace(nullptr);
    return l;
  };

  auto& params = gen.parameters();
  params.zero_grad();
  std::vector<std::uint8_t> base_branches, branches;
  backward(loss(&base_branches));

  GradcheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params.tensors()[k];
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    const Index count = p.numel();
    const Index checks = cfg.per_tensor > 0 ? std::min(cfg.per_tensor, count) : count;
    for (Index c = 0; c < checks; ++c) {
      const auto i = static_cast<std::size_t>(checks == count ? c : c * count / checks);
      auto values = p.mutable_values();
      const double saved = values[i];
      branches.clear();
      values[i] = saved + cfg.step;
      const double plus = loss(&branches).item();
      values[i] = saved - cfg.step;
      const double minus = loss(&branches).item();
      values[i] = saved;
      // The difference quotient spans a kink of leaky_relu or abs.
      const auto half = static_cast<std::ptrdiff_t>(base_branches.size());
      if (!std::equal(base_branches.begin(), base_branches.end(), branches.begin()) ||
          !std::equal(base_branches.begin(), base_branches.end(), branches.begin() + half)) {
        ++result.skipped;
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * cfg.step);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double rel = abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = params.names()[k] + "[" + std::to_string(i) + "]";
      }
      result.max_absolute_error = std::max(result.max_absolute_error, abs_err);
      ++result.checked;
    }
  }
  return result;
}

}  // namespace speculens
