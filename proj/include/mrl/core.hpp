#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mrl {

inline constexpr const char* kVersion = "1.0.0";

// Largest state dimension handled with inline (heap-free) matrix storage.
inline constexpr int kMaxDim = 6;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

enum class ErrorKind { validation, ellipticity, resource, blow_up, numerical_degradation, io };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& w) : Error(ErrorKind::validation, w) {}
};
struct EllipticityError : Error {
  explicit EllipticityError(const std::string& w) : Error(ErrorKind::ellipticity, w) {}
};
struct ResourceError : Error {
  explicit ResourceError(const std::string& w) : Error(ErrorKind::resource, w) {}
};
struct BlowUpError : Error {
  BlowUpError(const std::string& w, long step) : Error(ErrorKind::blow_up, w), step(step) {}
  long step;
};
struct NumericalDegradation : Error {
  NumericalDegradation(const std::string& w, double value)
      : Error(ErrorKind::numerical_degradation, w), value(value) {}
  double value;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

inline Vec zeros(int d) { return Vec::Zero(d); }
inline Mat identity(int d) { return Mat::Identity(d, d); }

inline Vec to_vec(const std::vector<double>& v) {
  Vec out(static_cast<int>(v.size()));
  for (int i = 0; i < out.size(); ++i) out(i) = v[i];
  return out;
}

// Row-major block of doubles viewed as a matrix; used for flat per-step storage.
inline Mat load_mat(const double* p, int rows, int cols) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = p[i * cols + j];
  return m;
}

inline void store_mat(const Mat& m, double* p) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) p[i * m.cols() + j] = m(i, j);
}

inline bool is_power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

inline std::vector<double> uniform_grid(int n) {
  std::vector<double> t(n + 1);
  for (int k = 0; k <= n; ++k) t[k] = static_cast<double>(k) / n;
  return t;
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace mrl
