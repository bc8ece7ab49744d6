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
#include <limits>

#include <Eigen/Core>

#include "speculens/tensor.hpp"
#include "tensor_internal.hpp"

namespace speculens {

namespace {

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MapMat = Eigen::Map<RowMat<Scalar>>;
template <typename Scalar>
using ConstMapMat = Eigen::Map<const RowMat<Scalar>>;

using detail::make_result;

std::string axis_msg(const char* op, const char* axis, Index got, Index want) {
  return std::string(op) + ": " + axis + " is " + std::to_string(got) + ", expected " + std::to_string(want);
}

}  // namespace

// ---------------------------------------------------------------------------
// matmul

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() < 2 || b.rank() < 2) throw DimensionError("matmul: operands need rank >= 2");
  const Index m = a.dim(-2), k = a.dim(-1), k2 = b.dim(-2), p = b.dim(-1);
  if (k != k2) throw DimensionError(axis_msg("matmul", "inner dimension of b (axis -2)", k2, k));

  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  const auto plan = detail::broadcast_plan(a_batch, b_batch, "matmul");
  const Index batch = shape_numel(plan.out);

  // Batch offsets for each output matrix.
  std::vector<Index> a_off(batch), b_off(batch);
  {
    const std::size_t rank = plan.out.size();
    std::vector<Index> idx(rank, 0);
    for (Index i = 0; i < batch; ++i) {
      Index ia = 0, ib = 0;
      if (plan.same) {
        ia = ib = i;
      } else if (plan.b_scalar) {
        ia = i;
      } else if (plan.a_scalar) {
        ib = i;
      } else {
        for (std::size_t d = 0; d < rank; ++d) {
          ia += idx[d] * plan.a_strides[d];
          ib += idx[d] * plan.b_strides[d];
        }
        for (std::size_t d = rank; d-- > 0;) {
          if (++idx[d] < plan.out[d]) break;
          idx[d] = 0;
        }
      }
      a_off[i] = ia * m * k;
      b_off[i] = ib * k * p;
    }
  }

  Shape shape = plan.out;
  shape.push_back(m);
  shape.push_back(p);
  std::vector<Scalar> out(static_cast<std::size_t>(batch * m * p));
  const Scalar* av = a.node()->value.data();
  const Scalar* bv = b.node()->value.data();
  for (Index i = 0; i < batch; ++i) {
    MapMat<Scalar>(out.data() + i * m * p, m, p).noalias() =
        ConstMapMat<Scalar>(av + a_off[i], m, k) * ConstMapMat<Scalar>(bv + b_off[i], k, p);
  }
  auto node = make_result<Scalar>(std::move(shape), std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    node->backward = [a_off, b_off, m, k, p, batch](detail::Node<Scalar>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.requires_grad) pa.ensure_grad();
      if (pb.requires_grad) pb.ensure_grad();
      for (Index i = 0; i < batch; ++i) {
        ConstMapMat<Scalar> g(self.grad.data() + i * m * p, m, p);
        if (pa.requires_grad) {
          MapMat<Scalar>(pa.grad.data() + a_off[i], m, k).noalias() +=
              g * ConstMapMat<Scalar>(pb.value.data() + b_off[i], k, p).transpose();
        }
        if (pb.requires_grad) {
          MapMat<Scalar>(pb.grad.data() + b_off[i], k, p).noalias() +=
              ConstMapMat<Scalar>(pa.value.data() + a_off[i], m, k).transpose() * g;
        }
      }
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

// ---------------------------------------------------------------------------
// softmax

template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& a, Index axis) {
  const Index ax = detail::normalize_axis(axis, a.rank(), "softmax");
  Index outer = 1, inner = 1;
  for (Index d = 0; d < ax; ++d) outer *= a.shape()[d];
  for (Index d = ax + 1; d < a.rank(); ++d) inner *= a.shape()[d];
  const Index extent = a.shape()[ax];
  const auto& av = a.node()->value;
  std::vector<Scalar> out(av.size(), Scalar(0));
  const Scalar neg_inf = -std::numeric_limits<Scalar>::infinity();
  for (Index o = 0; o < outer; ++o) {
    for (Index in = 0; in < inner; ++in) {
      const Index base = o * extent * inner + in;
      Scalar mx = neg_inf;
      for (Index j = 0; j < extent; ++j) mx = std::max(mx, av[base + j * inner]);
      if (mx == neg_inf) continue;  // fully masked: stays zero
      Scalar total = 0;
      for (Index j = 0; j < extent; ++j) {
        const Scalar x = av[base + j * inner];
        const Scalar e = x == neg_inf ? Scalar(0) : std::exp(x - mx);
        out[base + j * inner] = e;
        total += e;
      }
      for (Index j = 0; j < extent; ++j) out[base + j * inner] /= total;
    }
  }
  auto node = make_result<Scalar>(a.shape(), std::move(out), {a.node()});
  if (node->requires_grad) {
    node->backward = [outer, inner, extent](detail::Node<Scalar>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (Index o = 0; o < outer; ++o) {
        for (Index in = 0; in < inner; ++in) {
          const Index base = o * extent * inner + in;
          Scalar dot = 0;
          for (Index j = 0; j < extent; ++j) dot += self.grad[base + j * inner] * self.value[base + j * inner];
          for (Index j = 0; j < extent; ++j) {
            const Index i = base + j * inner;
            p.grad[i] += self.value[i] * (self.grad[i] - dot);
          }
        }
      }
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> mask_last_axis(const Tensor<Scalar>& a, const std::vector<bool>& keep, Scalar fill) {
  const Index n = a.dim(-1);
  if (static_cast<Index>(keep.size()) != n) {
    throw DimensionError(axis_msg("mask_last_axis", "mask length", static_cast<Index>(keep.size()), n));
  }
  std::vector<Scalar> out = a.node()->value;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!keep[i % static_cast<std::size_t>(n)]) out[i] = fill;
  }
  auto node = make_result<Scalar>(a.shape(), std::move(out), {a.node()});
  if (node->requires_grad) {
    node->backward = [keep, n](detail::Node<Scalar>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (keep[i % static_cast<std::size_t>(n)]) p.grad[i] += self.grad[i];
      }
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

// ---------------------------------------------------------------------------
// conv2d via im2col + GEMM

namespace {

struct ConvGeometry {
  Index n, c, h, w, o, kh, kw, stride, pad, oh, ow;
  Index col_rows() const { return c * kh * kw; }
  Index col_cols() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename Scalar>
void im2col(const Scalar* img, const ConvGeometry& g, Scalar* cols) {
  for (Index ci = 0; ci < g.c; ++ci) {
    for (Index ky = 0; ky < g.kh; ++ky) {
      for (Index kx = 0; kx < g.kw; ++kx) {
        Scalar* row = cols + ((ci * g.kh + ky) * g.kw + kx) * g.oh * g.ow;
        for (Index y = 0; y < g.oh; ++y) {
          const Index iy = y * g.stride - g.pad + ky;
          for (Index x = 0; x < g.ow; ++x) {
            const Index ix = x * g.stride - g.pad + kx;
            row[y * g.ow + x] =
                (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? img[(ci * g.h + iy) * g.w + ix] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Scalar* cols, const ConvGeometry& g, Scalar* img) {
  for (Index ci = 0; ci < g.c; ++ci) {
    for (Index ky = 0; ky < g.kh; ++ky) {
      for (Index kx = 0; kx < g.kw; ++kx) {
        const Scalar* row = cols + ((ci * g.kh + ky) * g.kw + kx) * g.oh * g.ow;
        for (Index y = 0; y < g.oh; ++y) {
          const Index iy = y * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (Index x = 0; x < g.ow; ++x) {
            const Index ix = x * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) img[(ci * g.h + iy) * g.w + ix] += row[y * g.ow + x];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias,
                      Index stride, Index padding) {
  if (input.rank() != 4) throw DimensionError("conv2d: input must be [N,C,H,W], got " + shape_string(input.shape()));
  if (weight.rank() != 4) {
    throw DimensionError("conv2d: weight must be [O,C,kh,kw], got " + shape_string(weight.shape()));
  }
  if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
  if (padding < 0) throw ParameterError("conv2d: padding must be >= 0");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.o = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.c) throw DimensionError(axis_msg("conv2d", "weight channel axis 1", weight.dim(1), g.c));
  if (g.kh > g.h + 2 * padding) throw DimensionError(axis_msg("conv2d", "kernel height (axis 2)", g.kh, g.h + 2 * padding));
  if (g.kw > g.w + 2 * padding) throw DimensionError(axis_msg("conv2d", "kernel width (axis 3)", g.kw, g.w + 2 * padding));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.o)) {
    throw DimensionError("conv2d: bias must be [" + std::to_string(g.o) + "], got " + shape_string(bias.shape()));
  }
  g.oh = (g.h + 2 * padding - g.kh) / stride + 1;
  g.ow = (g.w + 2 * padding - g.kw) / stride + 1;

  const Index in_sz = g.c * g.h * g.w, out_sz = g.o * g.oh * g.ow;
  std::vector<Scalar> out(static_cast<std::size_t>(g.n * out_sz));
  std::vector<Scalar> cols(g.pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
  ConstMapMat<Scalar> wmat(weight.node()->value.data(), g.o, g.col_rows());
  for (Index ni = 0; ni < g.n; ++ni) {
    const Scalar* img = input.node()->value.data() + ni * in_sz;
    const Scalar* colp = img;
    if (!g.pointwise()) {
      im2col(img, g, cols.data());
      colp = cols.data();
    }
    MapMat<Scalar> res(out.data() + ni * out_sz, g.o, g.col_cols());
    res.noalias() = wmat * ConstMapMat<Scalar>(colp, g.col_rows(), g.col_cols());
    if (bias.defined()) {
      for (Index oc = 0; oc < g.o; ++oc) res.row(oc).array() += bias.node()->value[oc];
    }
  }

  auto node = make_result<Scalar>(Shape{g.n, g.o, g.oh, g.ow}, std::move(out),
                                  {input.node(), weight.node(), bias.defined() ? bias.node() : nullptr});
  if (node->requires_grad) {
    node->backward = [g, in_sz, out_sz](detail::Node<Scalar>& self) {
      auto& pin = *self.parents[0];
      auto& pw = *self.parents[1];
      auto* pb = self.parents[2].get();
      const bool gin = pin.requires_grad, gw = pw.requires_grad, gb = pb && pb->requires_grad;
      if (gin) pin.ensure_grad();
      if (gw) pw.ensure_grad();
      if (gb) pb->ensure_grad();
      std::vector<Scalar> cols(g.pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
      std::vector<Scalar> dcols(cols.size());
      ConstMapMat<Scalar> wmat(pw.value.data(), g.o, g.col_rows());
      for (Index ni = 0; ni < g.n; ++ni) {
        ConstMapMat<Scalar> dout(self.grad.data() + ni * out_sz, g.o, g.col_cols());
        if (gb) {
          for (Index oc = 0; oc < g.o; ++oc) pb->grad[oc] += dout.row(oc).sum();
        }
        const Scalar* img = pin.value.data() + ni * in_sz;
        if (gw) {
          const Scalar* colp = img;
          if (!g.pointwise()) {
            im2col(img, g, cols.data());
            colp = cols.data();
          }
          MapMat<Scalar>(pw.grad.data(), g.o, g.col_rows()).noalias() +=
              dout * ConstMapMat<Scalar>(colp, g.col_rows(), g.col_cols()).transpose();
        }
        if (gin) {
          if (g.pointwise()) {
            MapMat<Scalar>(pin.grad.data() + ni * in_sz, g.col_rows(), g.col_cols()).noalias() +=
                wmat.transpose() * dout;
          } else {
            MapMat<Scalar>(dcols.data(), g.col_rows(), g.col_cols()).noalias() = wmat.transpose() * dout;
            col2im_add(dcols.data(), g, pin.grad.data() + ni * in_sz);
          }
        }
      }
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

// ---------------------------------------------------------------------------
// upsample_nearest

template <typename Scalar>
Tensor<Scalar> upsample_nearest(const Tensor<Scalar>& input, Index factor) {
  if (factor < 1) throw ParameterError("upsample_nearest: factor must be >= 1, got " + std::to_string(factor));
  if (input.rank() != 4) throw DimensionError("upsample_nearest: input must be [N,C,H,W]");
  const Index planes = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index oh = h * factor, ow = w * factor;
  const auto& iv = input.node()->value;
  std::vector<Scalar> out(static_cast<std::size_t>(planes * oh * ow));
  for (Index pl = 0; pl < planes; ++pl)
    for (Index y = 0; y < oh; ++y)
      for (Index x = 0; x < ow; ++x) out[(pl * oh + y) * ow + x] = iv[(pl * h + y / factor) * w + x / factor];
  auto node = make_result<Scalar>(Shape{input.dim(0), input.dim(1), oh, ow}, std::move(out), {input.node()});
  if (node->requires_grad) {
    node->backward = [planes, h, w, factor](detail::Node<Scalar>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const Index oh = h * factor, ow = w * factor;
      for (Index pl = 0; pl < planes; ++pl)
        for (Index y = 0; y < oh; ++y)
          for (Index x = 0; x < ow; ++x) p.grad[(pl * h + y / factor) * w + x / factor] += self.grad[(pl * oh + y) * ow + x];
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

// ---------------------------------------------------------------------------
// patch_extract / patch_fold

namespace {

struct PatchGeometry {
  Index n, c, h, w, r1, r2;
  Index rows() const { return h / r1; }
  Index cols() const { return w / r2; }
  Index count() const { return rows() * cols(); }
  Index length() const { return r1 * r2 * c; }
};

// Calls f(image_offset, patch_offset) for every element.
template <class F>
void for_each_patch_element(const PatchGeometry& g, F&& f) {
  for (Index ni = 0; ni < g.n; ++ni)
    for (Index py = 0; py < g.rows(); ++py)
      for (Index px = 0; px < g.cols(); ++px) {
        const Index patch_base = (ni * g.count() + py * g.cols() + px) * g.length();
        for (Index ci = 0; ci < g.c; ++ci)
          for (Index dy = 0; dy < g.r1; ++dy)
            for (Index dx = 0; dx < g.r2; ++dx) {
              const Index img = ((ni * g.c + ci) * g.h + py * g.r1 + dy) * g.w + px * g.r2 + dx;
              f(img, patch_base + (ci * g.r1 + dy) * g.r2 + dx);
            }
      }
}

void check_patch_geometry(const PatchGeometry& g, const char* op) {
  if (g.r1 < 1 || g.r2 < 1) throw ParameterError(std::string(op) + ": patch sizes must be >= 1");
  if (g.h % g.r1 != 0) {
    throw DimensionError(std::string(op) + ": patch height " + std::to_string(g.r1) + " does not divide axis 2 (" +
                         std::to_string(g.h) + ")");
  }
  if (g.w % g.r2 != 0) {
    throw DimensionError(std::string(op) + ": patch width " + std::to_string(g.r2) + " does not divide axis 3 (" +
                         std::to_string(g.w) + ")");
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> patch_extract(const Tensor<Scalar>& input, Index r1, Index r2) {
  if (input.rank() != 4) throw DimensionError("patch_extract: input must be [N,C,H,W]");
  const PatchGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), r1, r2};
  check_patch_geometry(g, "patch_extract");
  const auto& iv = input.node()->value;
  std::vector<Scalar> out(iv.size());
  for_each_patch_element(g, [&](Index img, Index pat) { out[pat] = iv[img]; });
  auto node = make_result<Scalar>(Shape{g.n, g.count(), g.length()}, std::move(out), {input.node()});
  if (node->requires_grad) {
    node->backward = [g](detail::Node<Scalar>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for_each_patch_element(g, [&](Index img, Index pat) { p.grad[img] += self.grad[pat]; });
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> patch_fold(const Tensor<Scalar>& patches, Index channels, Index height, Index width, Index r1,
                          Index r2) {
  if (patches.rank() != 3) throw DimensionError("patch_fold: patches must be [N,P,D]");
  const PatchGeometry g{patches.dim(0), channels, height, width, r1, r2};
  check_patch_geometry(g, "patch_fold");
  if (patches.dim(1) != g.count()) throw DimensionError(axis_msg("patch_fold", "patch count (axis 1)", patches.dim(1), g.count()));
  if (patches.dim(2) != g.length()) throw DimensionError(axis_msg("patch_fold", "patch length (axis 2)", patches.dim(2), g.length()));
  const auto& pv = patches.node()->value;
  std::vector<Scalar> out(pv.size());
  for_each_patch_element(g, [&](Index img, Index pat) { out[img] = pv[pat]; });
  auto node = make_result<Scalar>(Shape{g.n, channels, height, width}, std::move(out), {patches.node()});
  if (node->requires_grad) {
    node->backward = [g](detail::Node<Scalar>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for_each_patch_element(g, [&](Index img, Index pat) { p.grad[pat] += self.grad[img]; });
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

#define SPECULENS_INSTANTIATE_NN(S)                                                                     \
  template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);                                     \
  template Tensor<S> softmax<S>(const Tensor<S>&, Index);                                               \
  template Tensor<S> mask_last_axis<S>(const Tensor<S>&, const std::vector<bool>&, S);                  \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Index, Index);     \
  template Tensor<S> upsample_nearest<S>(const Tensor<S>&, Index);                                      \
  template Tensor<S> patch_extract<S>(const Tensor<S>&, Index, Index);                                  \
  template Tensor<S> patch_fold<S>(const Tensor<S>&, Index, Index, Index, Index, Index);

SPECULENS_INSTANTIATE_NN(float)
SPECULENS_INSTANTIATE_NN(double)

}  // namespace speculens
