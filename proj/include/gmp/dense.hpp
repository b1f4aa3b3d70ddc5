#pragma once

// Dense row-major matrices in double precision plus the seeded RNG every
// other module draws from.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gmp {

class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Mat from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Mat from_rows(const std::vector<std::vector<double>>& rows);
  /// A 1 x n matrix holding `values`.
  static Mat row_vector(std::span<const double> values);
  static Mat identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  std::vector<std::vector<double>> to_rows() const;
  std::string shape_string() const;

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// xoshiro256** seeded through splitmix64. The draw sequence depends only on
/// the seed, never on the platform's <random> implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() noexcept;
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n) noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;
  /// Independent generator for sub-stream `stream`; does not advance *this.
  Rng split(std::uint64_t stream) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

Mat matmul(const Mat& a, const Mat& b);
/// aᵀ · b
Mat matmul_tn(const Mat& a, const Mat& b);
/// a · bᵀ
Mat matmul_nt(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);

Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat scaled(const Mat& a, double s);
/// y += s * x
void axpy(Mat& y, double s, const Mat& x);

/// Softmax of each row of a / tau, with the row max subtracted first.
Mat row_softmax(const Mat& a, double tau);
Mat relu(const Mat& a);
Mat leaky_relu(const Mat& a, double slope);

/// Singular values in descending order (one-sided Jacobi).
std::vector<double> singular_values(const Mat& a);
/// Number of singular values above rel_tol times the largest one.
std::size_t numerical_rank(const Mat& a, double rel_tol);

Mat randn(Rng& rng, std::size_t rows, std::size_t cols, double stddev);

double max_abs_diff(const Mat& a, const Mat& b);
/// Throws NumericError naming `what` if any entry is NaN or Inf.
void require_finite(const Mat& a, const char* what);

}  // namespace gmp
