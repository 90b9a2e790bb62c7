#pragma once

#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace geoflow {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kConditionLimit = 1e12;

// base metric mu (n x n), fiber inertia I (m x m), connection A (m x n)
struct KKData {
  Mat base_metric;
  Mat inertia;
  Mat connection;

  int n() const { return static_cast<int>(base_metric.rows()); }
  int m() const { return static_cast<int>(inertia.rows()); }
};

namespace detail {

inline double condition_number(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 1.0;
  double lo = s(s.size() - 1);
  if (lo == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / lo;
}

inline Mat checked_inverse(const Mat& a, const char* what) {
  double c = condition_number(a);
  if (!(c < kConditionLimit))
    throw numerical_error(std::string(what) + " is singular (condition number " +
                          std::to_string(c) + ")");
  return a.fullPivLu().inverse();
}

}  // namespace detail

inline void validate(const KKData& d) {
  if (d.base_metric.rows() != d.base_metric.cols() || d.inertia.rows() != d.inertia.cols())
    throw config_error("metric blocks must be square");
  if (d.connection.rows() != d.inertia.rows() || d.connection.cols() != d.base_metric.rows())
    throw config_error("connection must be m x n");
}

/// Block form [[mu + A^T I A, A^T I], [I A, I]].
inline Mat kk_metric(const KKData& d) {
  validate(d);
  const int n = d.n(), m = d.m();
  const Mat& A = d.connection;
  Mat out(n + m, n + m);
  out.topLeftCorner(n, n) = d.base_metric + A.transpose() * d.inertia * A;
  out.topRightCorner(n, m) = A.transpose() * d.inertia;
  out.bottomLeftCorner(m, n) = d.inertia * A;
  out.bottomRightCorner(m, m) = d.inertia;
  return out;
}

inline Mat kk_metric_inverse(const KKData& d) {
  validate(d);
  const int n = d.n(), m = d.m();
  const Mat& A = d.connection;
  Mat mu_inv = detail::checked_inverse(d.base_metric, "base metric");
  Mat in_inv = detail::checked_inverse(d.inertia, "inertia");
  Mat out(n + m, n + m);
  out.topLeftCorner(n, n) = mu_inv;
  out.topRightCorner(n, m) = -mu_inv * A.transpose();
  out.bottomLeftCorner(m, n) = -A * mu_inv;
  out.bottomRightCorner(m, m) = in_inv + A * mu_inv * A.transpose();
  return out;
}

struct ModifiedKK {
  KKData data;  // (mu_C, I_C, A_C)
  Mat C;        // m x n, acts on base momenta
  Mat T;        // m x m
  Mat R;
};

/// Feedback-modified data for the control parameter gamma.
inline ModifiedKK modified_kk_data(const KKData& d, double gamma) {
  validate(d);
  const int n = d.n(), m = d.m();
  const Mat& A = d.connection;
  const Mat& I0 = d.inertia;
  Mat mu_inv = detail::checked_inverse(d.base_metric, "base metric");
  Mat In = Mat::Identity(n, n), Im = Mat::Identity(m, m);

  ModifiedKK out;
  out.R = Im - gamma * I0 * A * mu_inv * A.transpose();
  if (!(detail::condition_number(out.R) < kConditionLimit))
    throw numerical_error("control parameter out of range: R not invertible");
  out.C = gamma * out.R.fullPivLu().solve(I0 * A * mu_inv);

  Mat S = In + A.transpose() * out.C;
  if (!(detail::condition_number(S) < kConditionLimit))
    throw numerical_error("control parameter out of range: 1 + A*C not invertible");
  Mat S_inv = S.fullPivLu().inverse();

  out.T = (1.0 + gamma) * (Im + out.C * A.transpose());
  if (!(detail::condition_number(out.T) < kConditionLimit) || 1.0 + gamma == 0.0)
    throw numerical_error("control parameter out of range: T not invertible");

  out.data.base_metric = S_inv * d.base_metric;
  out.data.inertia = I0 / (1.0 + gamma);
  out.data.connection = A + detail::checked_inverse(I0, "inertia") * out.C * S_inv * d.base_metric;
  return out;
}

/// [[1, 0], [-C, T]], the right factor relating the two inverse metrics.
inline Mat feedback_factor(const ModifiedKK& mk) {
  const int n = static_cast<int>(mk.C.cols()), m = static_cast<int>(mk.C.rows());
  Mat f = Mat::Zero(n + m, n + m);
  f.topLeftCorner(n, n).setIdentity();
  f.bottomLeftCorner(m, n) = -mk.C;
  f.bottomRightCorner(m, m) = mk.T;
  return f;
}

/// -omega x pi
inline Vec3 so3_ad_star(const Vec3& omega, const Vec3& pi) { return -omega.cross(pi); }

}  // namespace geoflow
