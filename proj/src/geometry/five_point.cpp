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

#include <array>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "speculens/geometry.hpp"

namespace speculens {

namespace {

// Polynomials of total degree <= 3 in (x, y, z). The ten cubic monomials come
// first, then the ten lower-degree monomials that form the quotient basis.
constexpr int kTerms = 20;
constexpr std::array<std::array<int, 3>, kTerms> kExponents = {{
    {3, 0, 0}, {2, 1, 0}, {1, 2, 0}, {0, 3, 0}, {2, 0, 1}, {1, 1, 1}, {0, 2, 1}, {1, 0, 2}, {0, 1, 2}, {0, 0, 3},
    {2, 0, 0}, {1, 1, 0}, {0, 2, 0}, {1, 0, 1}, {0, 1, 1}, {0, 0, 2}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 0, 0},
}};

constexpr int term_index(int a, int b, int c) {
  for (int i = 0; i < kTerms; ++i)
    if (kExponents[i][0] == a && kExponents[i][1] == b && kExponents[i][2] == c) return i;
  return -1;
}

struct Poly {
  std::array<double, kTerms> c{};

  Poly operator+(const Poly& o) const {
    Poly r;
    for (int i = 0; i < kTerms; ++i) r.c[i] = c[i] + o.c[i];
    return r;
  }
  Poly operator-(const Poly& o) const {
    Poly r;
    for (int i = 0; i < kTerms; ++i) r.c[i] = c[i] - o.c[i];
    return r;
  }
  Poly operator*(double s) const {
    Poly r;
    for (int i = 0; i < kTerms; ++i) r.c[i] = c[i] * s;
    return r;
  }
  // Degrees must add to at most 3.
  Poly operator*(const Poly& o) const {
    Poly r;
    for (int i = 0; i < kTerms; ++i) {
      if (c[i] == 0.0) continue;
      for (int j = 0; j < kTerms; ++j) {
        if (o.c[j] == 0.0) continue;
        const int k = term_index(kExponents[i][0] + kExponents[j][0], kExponents[i][1] + kExponents[j][1],
                                 kExponents[i][2] + kExponents[j][2]);
        if (k < 0) throw std::logic_error("five-point polynomial degree overflow");
        r.c[k] += c[i] * o.c[j];
      }
    }
    return r;
  }
};

using PolyMat = std::array<std::array<Poly, 3>, 3>;

PolyMat mat_mul(const PolyMat& a, const PolyMat& b) {
  PolyMat r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] = r[i][j] + a[i][k] * b[k][j];
  return r;
}

PolyMat transpose(const PolyMat& a) {
  PolyMat r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = a[j][i];
  return r;
}

// Best rotation taking the bearings of image 1 onto those of image 2, and the
// largest angular residual in radians.
std::pair<Mat3, double> fit_rotation(const std::vector<Correspondence>& pts) {
  Mat3 H = Mat3::Zero();
  for (const auto& c : pts) H += c.p2.homogeneous().normalized() * c.p1.homogeneous().normalized().transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat3 R = svd.matrixU() * D * svd.matrixV().transpose();
  double worst = 0.0;
  for (const auto& c : pts) {
    const Vec3 a = R * c.p1.homogeneous().normalized(), b = c.p2.homogeneous().normalized();
    worst = std::max(worst, a.cross(b).norm());
  }
  return {R, worst};
}

}  // namespace

std::vector<Mat3> five_point_essential(const std::vector<Correspondence>& pts) {
  if (pts.size() < 5) throw ParameterError("five_point_essential needs at least 5 correspondences");
  // Epipolar constraint x2^T E x1 = 0 as a row acting on E in row-major order.
  Eigen::MatrixXd A(static_cast<Eigen::Index>(std::max<std::size_t>(pts.size(), 9)), 9);
  A.setZero();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Vec3 a(pts[i].p1.x(), pts[i].p1.y(), 1.0), b(pts[i].p2.x(), pts[i].p2.y(), 1.0);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) A(static_cast<Eigen::Index>(i), 3 * r + c) = b(r) * a(c);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (!(s(0) > 0.0) || s(4) / s(0) < 1e-10) throw DegeneracyError("five_point_essential: degenerate point configuration");
  const Eigen::MatrixXd& V = svd.matrixV();

  // E = x X + y Y + z Z + W over the four-dimensional null space.
  PolyMat E;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      Poly p;
      p.c[term_index(1, 0, 0)] = V(3 * r + c, 5);
      p.c[term_index(0, 1, 0)] = V(3 * r + c, 6);
      p.c[term_index(0, 0, 1)] = V(3 * r + c, 7);
      p.c[term_index(0, 0, 0)] = V(3 * r + c, 8);
      E[r][c] = p;
    }

  Eigen::Matrix<double, 10, kTerms> M;
  const Poly det = E[0][0] * (E[1][1] * E[2][2] - E[1][2] * E[2][1]) -
                   E[0][1] * (E[1][0] * E[2][2] - E[1][2] * E[2][0]) +
                   E[0][2] * (E[1][0] * E[2][1] - E[1][1] * E[2][0]);
  for (int k = 0; k < kTerms; ++k) M(0, k) = det.c[k];

  // 2 E E^T E - tr(E E^T) E = 0.
  const PolyMat EEt = mat_mul(E, transpose(E));
  const Poly trace = EEt[0][0] + EEt[1][1] + EEt[2][2];
  const PolyMat EEtE = mat_mul(EEt, E);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      const Poly eq = EEtE[r][c] * 2.0 - trace * E[r][c];
      for (int k = 0; k < kTerms; ++k) M(1 + 3 * r + c, k) = eq.c[k];
    }

  // Eliminate the cubic monomials: M = [C | B] -> [I | C^-1 B].
  const Eigen::Matrix<double, 10, 10> C = M.leftCols<10>();
  // Near-singular templates (e.g. zero baseline) still get a least-squares
  // elimination; spurious roots are filtered below.
  const Eigen::Matrix<double, 10, 10> B = C.completeOrthogonalDecomposition().solve(M.rightCols<10>());

  // Multiplication by x on the basis b = [x^2 xy y^2 xz yz z^2 x y z 1]:
  // each x * b_k is either a cubic (row of -B) or another basis monomial.
  const std::array<int, 10> basis = {10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  Eigen::Matrix<double, 10, 10> action = Eigen::Matrix<double, 10, 10>::Zero();
  for (int k = 0; k < 10; ++k) {
    const auto& e = kExponents[basis[k]];
    const int target = term_index(e[0] + 1, e[1], e[2]);
    if (target < 10) {
      action.row(k) = -B.row(target);
    } else {
      action(k, target - 10) = 1.0;
    }
  }

  Eigen::EigenSolver<Eigen::Matrix<double, 10, 10>> eig(action);
  if (eig.info() != Eigen::Success) throw EstimationError("five_point_essential: eigen decomposition failed");
  std::vector<Mat3> out;
  for (int k = 0; k < 10; ++k) {
    const std::complex<double> lambda = eig.eigenvalues()(k);
    if (std::abs(lambda.imag()) > 1e-8 * std::max(1.0, std::abs(lambda.real()))) continue;
    const Eigen::Matrix<double, 10, 1> v = eig.eigenvectors().col(k).real();
    if (std::abs(v(9)) < 1e-12 * v.norm()) continue;
    const double x = v(6) / v(9), y = v(7) / v(9), z = v(8) / v(9);
    Mat3 e;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) e(r, c) = x * V(3 * r + c, 5) + y * V(3 * r + c, 6) + z * V(3 * r + c, 7) + V(3 * r + c, 8);
    const double n = e.norm();
    if (!(n > 0.0) || !std::isfinite(n)) continue;
    e /= n;
    const double trace_residual = (2.0 * e * e.transpose() * e - (e * e.transpose()).trace() * e).norm();
    if (std::abs(e.determinant()) > 1e-8 || trace_residual > 1e-6) continue;
    out.push_back(e);
  }
  if (out.empty()) {
    // Zero baseline: every [t]x R is consistent. Return one per axis.
    const auto [R, residual] = fit_rotation(pts);
    if (residual < 1e-9) {
      for (int a = 0; a < 3; ++a) {
        const Mat3 e = skew(Vec3::Unit(a)) * R;
        out.push_back(e / e.norm());
      }
    }
  }
  return out;
}

}  // namespace speculens
