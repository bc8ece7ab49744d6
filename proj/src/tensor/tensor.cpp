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
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "speculens/tensor.hpp"
#include "tensor_internal.hpp"

namespace speculens {

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

Index normalize_axis(Index axis, Index rank, const char* op) {
  const Index a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(rank));
  }
  return a;
}

Broadcast broadcast_plan(const Shape& a, const Shape& b, const char* op) {
  Broadcast p;
  if (a == b) {
    p.out = a;
    p.same = true;
    return p;
  }
  if (shape_numel(b) == 1 && b.size() <= a.size()) {
    p.out = a;
    p.b_scalar = true;
    return p;
  }
  if (shape_numel(a) == 1 && a.size() <= b.size()) {
    p.out = b;
    p.a_scalar = true;
    return p;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  p.out.assign(rank, 1);
  p.a_strides.assign(rank, 0);
  p.b_strides.assign(rank, 0);
  Index sa = 1, sb = 1;
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t axis = rank - 1 - k;
    const Index da = k < a.size() ? a[a.size() - 1 - k] : 1;
    const Index db = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (da != db && da != 1 && db != 1) {
      throw DimensionError(std::string(op) + ": cannot broadcast axis " + std::to_string(axis) + " (" +
                           std::to_string(da) + " vs " + std::to_string(db) + "), shapes " + shape_string(a) +
                           " and " + shape_string(b));
    }
    p.out[axis] = std::max(da, db);
    p.a_strides[axis] = da == 1 ? 0 : sa;
    p.b_strides[axis] = db == 1 ? 0 : sb;
    sa *= da;
    sb *= db;
  }
  return p;
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Scalar fill) : node_(std::make_shared<detail::Node<Scalar>>()) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] < 0) throw DimensionError("negative extent on axis " + std::to_string(i));
  }
  node_->value.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
  node_->shape = std::move(shape);
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, std::vector<Scalar> values) : node_(std::make_shared<detail::Node<Scalar>>()) {
  if (static_cast<Index>(values.size()) != shape_numel(shape)) {
    throw DimensionError("value count " + std::to_string(values.size()) + " does not match shape " +
                         shape_string(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::parameter(Shape shape, std::vector<Scalar> values) {
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

template <typename Scalar>
Index Tensor<Scalar>::dim(Index axis) const {
  return node_->shape[static_cast<std::size_t>(detail::normalize_axis(axis, rank(), "dim"))];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1) throw ParameterError("item() on tensor of shape " + shape_string(shape()));
  return node_->value[0];
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(std::initializer_list<Index> idx) const {
  if (static_cast<Index>(idx.size()) != rank()) throw DimensionError("at(): index rank mismatch");
  Index off = 0;
  std::size_t k = 0;
  for (Index i : idx) {
    const Index d = node_->shape[k++];
    if (i < 0 || i >= d) throw DimensionError("at(): index out of range on axis " + std::to_string(k - 1));
    off = off * d + i;
  }
  return node_->value[static_cast<std::size_t>(off)];
}

template <typename Scalar>
void Tensor<Scalar>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (on) node_->ensure_grad();
}

template <typename Scalar>
std::span<const Scalar> Tensor<Scalar>::grad() const {
  node_->ensure_grad();
  return node_->grad;
}

template <typename Scalar>
void Tensor<Scalar>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), Scalar(0));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  auto n = std::make_shared<detail::Node<Scalar>>();
  n->shape = node_->shape;
  n->value = node_->value;
  return from_node(std::move(n));
}

template <typename Scalar>
void backward(const Tensor<Scalar>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ParameterError("backward() needs a single-element loss, got shape " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw ParameterError("backward() on a tensor that is not on the tape");

  using Node = detail::Node<Scalar>;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  Node* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

namespace {

using detail::make_result;
using detail::NodePtrT;

template <typename Scalar, class F>
void for_each_broadcast(const detail::Broadcast& p, F&& f) {
  const Index n = shape_numel(p.out);
  if (p.same) {
    for (Index i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  if (p.b_scalar) {
    for (Index i = 0; i < n; ++i) f(i, i, Index(0));
    return;
  }
  if (p.a_scalar) {
    for (Index i = 0; i < n; ++i) f(i, Index(0), i);
    return;
  }
  const std::size_t rank = p.out.size();
  std::vector<Index> idx(rank, 0);
  Index ia = 0, ib = 0;
  for (Index i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t k = rank; k-- > 0;) {
      ++idx[k];
      ia += p.a_strides[k];
      ib += p.b_strides[k];
      if (idx[k] < p.out[k]) break;
      ia -= p.a_strides[k] * idx[k];
      ib -= p.b_strides[k] * idx[k];
      idx[k] = 0;
    }
  }
}

// f(x, y) with partials dfa(x, y, out), dfb(x, y, out).
template <typename Scalar, class F, class DA, class DB>
Tensor<Scalar> binary_op(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* name, F f, DA dfa, DB dfb) {
  const auto plan = detail::broadcast_plan(a.shape(), b.shape(), name);
  std::vector<Scalar> out(static_cast<std::size_t>(shape_numel(plan.out)));
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for_each_broadcast<Scalar>(plan, [&](Index i, Index ia, Index ib) { out[i] = f(av[ia], bv[ib]); });
  auto node = make_result<Scalar>(plan.out, std::move(out), {a.node(), b.node()});
  if (node->requires_grad) {
    node->backward = [plan, dfa, dfb](detail::Node<Scalar>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.requires_grad) pa.ensure_grad();
      if (pb.requires_grad) pb.ensure_grad();
      for_each_broadcast<Scalar>(plan, [&](Index i, Index ia, Index ib) {
        const Scalar g = self.grad[i];
        if (g == Scalar(0)) return;
        if (pa.requires_grad) pa.grad[ia] += g * dfa(pa.value[ia], pb.value[ib], self.value[i]);
        if (pb.requires_grad) pb.grad[ib] += g * dfb(pa.value[ia], pb.value[ib], self.value[i]);
      });
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

template <typename Scalar, class F, class DF>
Tensor<Scalar> unary_op(const Tensor<Scalar>& a, F f, DF df) {
  const auto& av = a.node()->value;
  std::vector<Scalar> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  auto node = make_result<Scalar>(a.shape(), std::move(out), {a.node()});
  if (node->requires_grad) {
    node->backward = [df](detail::Node<Scalar>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * df(p.value[i], self.value[i]);
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary_op(
      a, b, "add", [](Scalar x, Scalar y) { return x + y; }, [](Scalar, Scalar, Scalar) { return Scalar(1); },
      [](Scalar, Scalar, Scalar) { return Scalar(1); });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary_op(
      a, b, "sub", [](Scalar x, Scalar y) { return x - y; }, [](Scalar, Scalar, Scalar) { return Scalar(1); },
      [](Scalar, Scalar, Scalar) { return Scalar(-1); });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary_op(
      a, b, "mul", [](Scalar x, Scalar y) { return x * y; }, [](Scalar, Scalar y, Scalar) { return y; },
      [](Scalar x, Scalar, Scalar) { return x; });
}

template <typename Scalar>
Tensor<Scalar> div(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  for (Scalar v : b.values()) {
    if (v == Scalar(0)) throw ParameterError("div: division by zero");
  }
  return binary_op(
      a, b, "div", [](Scalar x, Scalar y) { return x / y; }, [](Scalar, Scalar y, Scalar) { return Scalar(1) / y; },
      [](Scalar x, Scalar y, Scalar) { return -x / (y * y); });
}

template <typename Scalar>
Tensor<Scalar> div_guarded(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return binary_op(
      a, b, "div_guarded", [](Scalar x, Scalar y) { return y == Scalar(0) ? Scalar(0) : x / y; },
      [](Scalar, Scalar y, Scalar) { return y == Scalar(0) ? Scalar(0) : Scalar(1) / y; },
      [](Scalar x, Scalar y, Scalar) { return y == Scalar(0) ? Scalar(0) : -x / (y * y); });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
  return unary_op(a, [c](Scalar x) { return c * x; }, [c](Scalar, Scalar) { return c; });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar c) {
  return unary_op(a, [c](Scalar x) { return x + c; }, [](Scalar, Scalar) { return Scalar(1); });
}

namespace {

thread_local std::vector<std::uint8_t>* branch_trace = nullptr;

template <typename Scalar>
void trace_branches(const Tensor<Scalar>& a, bool zero_is_own_branch) {
  if (!branch_trace) return;
  for (const Scalar x : a.values()) {
    std::uint8_t b = x >= Scalar(0) ? 2 : 0;
    if (zero_is_own_branch && x == Scalar(0)) b = 1;
    branch_trace->push_back(b);
  }
}

}  // namespace

void set_branch_trace(std::vector<std::uint8_t>* trace) { branch_trace = trace; }

template <typename Scalar>
Tensor<Scalar> leaky_relu(const Tensor<Scalar>& a, Scalar slope) {
  trace_branches(a, false);
  return unary_op(
      a, [slope](Scalar x) { return x >= Scalar(0) ? x : slope * x; },
      [slope](Scalar x, Scalar) { return x >= Scalar(0) ? Scalar(1) : slope; });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& a) {
  return leaky_relu(a, Scalar(0));
}

template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& a) {
  return unary_op(a, [](Scalar x) { return std::tanh(x); }, [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

template <typename Scalar>
Tensor<Scalar> abs(const Tensor<Scalar>& a) {
  trace_branches(a, true);
  return unary_op(
      a, [](Scalar x) { return std::abs(x); },
      [](Scalar x, Scalar) { return x > Scalar(0) ? Scalar(1) : (x < Scalar(0) ? Scalar(-1) : Scalar(0)); });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  const auto& av = a.node()->value;
  const Scalar total = std::accumulate(av.begin(), av.end(), Scalar(0));
  auto node = make_result<Scalar>(Shape{}, {total}, {a.node()});
  if (node->requires_grad) {
    node->backward = [](detail::Node<Scalar>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      const Scalar g = self.grad[0];
      for (auto& v : p.grad) v += g;
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  if (a.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.numel()));
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " -> " + shape_string(shape));
  }
  auto node = make_result<Scalar>(std::move(shape), a.node()->value, {a.node()});
  if (node->requires_grad) {
    node->backward = [](detail::Node<Scalar>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> transpose(const Tensor<Scalar>& a) {
  if (a.rank() < 2) throw DimensionError("transpose: need rank >= 2");
  const Index rows = a.dim(-2), cols = a.dim(-1);
  const Index batch = a.numel() / std::max<Index>(1, rows * cols);
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  const auto& av = a.node()->value;
  std::vector<Scalar> out(av.size());
  for (Index bi = 0; bi < batch; ++bi) {
    const Index off = bi * rows * cols;
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) out[off + c * rows + r] = av[off + r * cols + c];
  }
  auto node = make_result<Scalar>(std::move(shape), std::move(out), {a.node()});
  if (node->requires_grad) {
    node->backward = [rows, cols, batch](detail::Node<Scalar>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (Index bi = 0; bi < batch; ++bi) {
        const Index off = bi * rows * cols;
        for (Index r = 0; r < rows; ++r)
          for (Index c = 0; c < cols; ++c) p.grad[off + r * cols + c] += self.grad[off + c * rows + r];
      }
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

namespace {

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  Index outer = 1, extent = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, Index axis) {
  AxisSplit r;
  for (Index k = 0; k < axis; ++k) r.outer *= s[k];
  r.extent = s[axis];
  for (Index k = axis + 1; k < static_cast<Index>(s.size()); ++k) r.inner *= s[k];
  return r;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> concat(const std::vector<Tensor<Scalar>>& parts, Index axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Index rank = parts[0].rank();
  const Index ax = detail::normalize_axis(axis, rank, "concat");
  Shape shape = parts[0].shape();
  shape[ax] = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw DimensionError("concat: rank mismatch");
    for (Index k = 0; k < rank; ++k) {
      if (k != ax && p.shape()[k] != parts[0].shape()[k]) {
        throw DimensionError("concat: extent mismatch on axis " + std::to_string(k));
      }
    }
    shape[ax] += p.shape()[ax];
  }
  const AxisSplit out_split = split_at(shape, ax);
  std::vector<Scalar> out(static_cast<std::size_t>(shape_numel(shape)));
  std::vector<Index> offsets;
  std::vector<NodePtrT<Scalar>> parents;
  Index offset = 0;
  for (const auto& p : parts) {
    const AxisSplit s = split_at(p.shape(), ax);
    const auto& pv = p.node()->value;
    for (Index o = 0; o < s.outer; ++o) {
      std::copy_n(pv.begin() + o * s.extent * s.inner, s.extent * s.inner,
                  out.begin() + (o * out_split.extent + offset) * out_split.inner);
    }
    offsets.push_back(offset);
    offset += s.extent;
    parents.push_back(p.node());
  }
  auto node = detail::make_result_v<Scalar>(shape, std::move(out), std::move(parents));
  if (node->requires_grad) {
    node->backward = [offsets, out_split, ax](detail::Node<Scalar>& self) {
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        auto& p = *self.parents[k];
        if (!p.requires_grad) continue;
        p.ensure_grad();
        const AxisSplit s = split_at(p.shape, ax);
        for (Index o = 0; o < s.outer; ++o) {
          const Index src = (o * out_split.extent + offsets[k]) * out_split.inner;
          const Index dst = o * s.extent * s.inner;
          for (Index i = 0; i < s.extent * s.inner; ++i) p.grad[dst + i] += self.grad[src + i];
        }
      }
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> index_select(const Tensor<Scalar>& a, Index axis, const std::vector<Index>& indices) {
  const Index ax = detail::normalize_axis(axis, a.rank(), "index_select");
  const AxisSplit s = split_at(a.shape(), ax);
  for (Index i : indices) {
    if (i < 0 || i >= s.extent) {
      throw DimensionError("index_select: index " + std::to_string(i) + " out of range on axis " +
                           std::to_string(ax));
    }
  }
  Shape shape = a.shape();
  shape[ax] = static_cast<Index>(indices.size());
  const Index n_sel = shape[ax];
  std::vector<Scalar> out(static_cast<std::size_t>(shape_numel(shape)));
  const auto& av = a.node()->value;
  for (Index o = 0; o < s.outer; ++o)
    for (Index k = 0; k < n_sel; ++k)
      std::copy_n(av.begin() + (o * s.extent + indices[k]) * s.inner, s.inner,
                  out.begin() + (o * n_sel + k) * s.inner);
  auto node = make_result<Scalar>(std::move(shape), std::move(out), {a.node()});
  if (node->requires_grad) {
    node->backward = [s, indices, n_sel](detail::Node<Scalar>& self) {
      auto& p = *self.parents[0];
      p.ensure_grad();
      for (Index o = 0; o < s.outer; ++o)
        for (Index k = 0; k < n_sel; ++k)
          for (Index i = 0; i < s.inner; ++i)
            p.grad[(o * s.extent + indices[k]) * s.inner + i] += self.grad[(o * n_sel + k) * s.inner + i];
    };
  }
  return Tensor<Scalar>::from_node(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> slice(const Tensor<Scalar>& a, Index axis, Index start, Index count) {
  const Index ax = detail::normalize_axis(axis, a.rank(), "slice");
  if (start < 0 || count < 0 || start + count > a.shape()[ax]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") exceeds axis " + std::to_string(ax));
  }
  std::vector<Index> idx(static_cast<std::size_t>(count));
  std::iota(idx.begin(), idx.end(), start);
  return index_select(a, ax, idx);
}

#define SPECULENS_INSTANTIATE(S)                                                                  \
  template class Tensor<S>;                                                                       \
  template void backward<S>(const Tensor<S>&);                                                    \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);                                  \
  template Tensor<S> sub<S>(const Tensor<S>&, const Tensor<S>&);                                  \
  template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);                                  \
  template Tensor<S> div<S>(const Tensor<S>&, const Tensor<S>&);                                  \
  template Tensor<S> div_guarded<S>(const Tensor<S>&, const Tensor<S>&);                          \
  template Tensor<S> scale<S>(const Tensor<S>&, S);                                               \
  template Tensor<S> add_scalar<S>(const Tensor<S>&, S);                                          \
  template Tensor<S> leaky_relu<S>(const Tensor<S>&, S);                                          \
  template Tensor<S> relu<S>(const Tensor<S>&);                                                   \
  template Tensor<S> tanh<S>(const Tensor<S>&);                                                   \
  template Tensor<S> abs<S>(const Tensor<S>&);                                                    \
  template Tensor<S> sum<S>(const Tensor<S>&);                                                    \
  template Tensor<S> mean<S>(const Tensor<S>&);                                                   \
  template Tensor<S> reshape<S>(const Tensor<S>&, Shape);                                         \
  template Tensor<S> transpose<S>(const Tensor<S>&);                                              \
  template Tensor<S> concat<S>(const std::vector<Tensor<S>>&, Index);                             \
  template Tensor<S> slice<S>(const Tensor<S>&, Index, Index, Index);                             \
  template Tensor<S> index_select<S>(const Tensor<S>&, Index, const std::vector<Index>&);

SPECULENS_INSTANTIATE(float)
SPECULENS_INSTANTIATE(double)

}  // namespace speculens
