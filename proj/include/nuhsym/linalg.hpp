#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace nuh {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// operator 2-norm; empty matrices have norm 0
inline double opnorm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  if (a.rows() == 1 || a.cols() == 1) return a.norm();
  if (a.rows() == 2 && a.cols() == 2) {
    double f = a.squaredNorm(), det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    return std::sqrt(0.5 * (f + std::sqrt(std::max(0.0, f * f - 4 * det * det))));
  }
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

inline double min_sv(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

// thin QR with R_ii >= 0 (so unique), Gram-Schmidt applied twice; a must have full column rank
inline void qr_pos(const Mat& a, Mat& q, Mat& r) {
  const Eigen::Index n = a.cols();
  q = a;
  r = Mat::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < j; ++i) {
        double c = q.col(i).dot(q.col(j));
        r(i, j) += c;
        q.col(j) -= c * q.col(i);
      }
    double nj = q.col(j).norm();
    r(j, j) = nj;
    if (nj > 0) q.col(j) /= nj;
  }
}

// first component with |.| > 1e-9 made positive, per column
inline void fix_signs(Mat& b) {
  for (Eigen::Index j = 0; j < b.cols(); ++j) {
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
      if (std::abs(b(i, j)) > 1e-9) {
        if (b(i, j) < 0) b.col(j) *= -1.0;
        break;
      }
    }
  }
}

}  // namespace nuh
