#include "gmp/dense.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gmp/error.hpp"
#include "gmp/kernels.hpp"

namespace gmp {

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

}  // namespace

// ---------------------------------------------------------------- Mat

Mat Mat::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<std::vector<double>> v;
  v.reserve(rows.size());
  for (const auto& r : rows) v.emplace_back(r);
  return from_rows(v);
}

Mat Mat::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  Mat m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) {
      throw ShapeError("ragged rows: row " + std::to_string(r) + " has " + std::to_string(rows[r].size()) +
                       " entries, expected " + std::to_string(cols));
    }
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Mat Mat::row_vector(std::span<const double> values) {
  Mat m(1, values.size());
  std::copy(values.begin(), values.end(), m.values().begin());
  return m;
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::vector<std::vector<double>> Mat::to_rows() const {
  std::vector<std::vector<double>> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r].assign(row(r).begin(), row(r).end());
  return out;
}

std::string Mat::shape_string() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

// ---------------------------------------------------------------- Rng

Rng::Rng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::uniform_index(std::size_t n) noexcept {
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return static_cast<std::size_t>(x % bound);
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Rng Rng::split(std::uint64_t stream) const noexcept {
  std::uint64_t x = seed_ ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  return Rng(splitmix64(x));
}

// ---------------------------------------------------------------- products

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_string() + " x " + b.shape_string());
  }
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out = c.row(i).data();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      kernels::row_axpy(b.cols(), a(i, p), b.row(p).data(), out);
    }
  }
  require_finite(c, "matmul");
  return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: row counts differ, " + a.shape_string() + " vs " + b.shape_string());
  }
  Mat c(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      kernels::row_axpy(b.cols(), a(p, i), b.row(p).data(), c.row(i).data());
    }
  }
  require_finite(c, "matmul_tn");
  return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: column counts differ, " + a.shape_string() + " vs " + b.shape_string());
  }
  Mat c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      c(i, j) = kernels::row_dot(a.cols(), a.row(i).data(), b.row(j).data());
    }
  }
  require_finite(c, "matmul_nt");
  return c;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

// ---------------------------------------------------------------- elementwise

Mat add(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "add");
  Mat c = a;
  kernels::row_accumulate(c.size(), b.values().data(), c.values().data());
  return c;
}

Mat sub(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "sub");
  Mat c = a;
  kernels::row_axpy(c.size(), -1.0, b.values().data(), c.values().data());
  return c;
}

Mat scaled(const Mat& a, double s) {
  Mat c(a.rows(), a.cols());
  kernels::row_scale(a.size(), s, a.values().data(), c.values().data());
  return c;
}

void axpy(Mat& y, double s, const Mat& x) {
  require_same_shape(y, x, "axpy");
  kernels::row_axpy(y.size(), s, x.values().data(), y.values().data());
}

Mat row_softmax(const Mat& a, double tau) {
  if (!(tau > 0.0)) throw ParameterError("row_softmax: tau must be positive, got " + std::to_string(tau));
  Mat out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto in = a.row(i);
    auto dst = out.row(i);
    if (in.empty()) continue;
    double mx = in[0] / tau;
    for (double x : in) mx = std::max(mx, x / tau);
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      dst[j] = std::exp(in[j] / tau - mx);
      total += dst[j];
    }
    for (double& x : dst) x /= total;
  }
  require_finite(out, "row_softmax");
  return out;
}

Mat relu(const Mat& a) {
  Mat out(a.rows(), a.cols());
  kernels::active().relu(a.size(), a.values().data(), out.values().data());
  return out;
}

Mat leaky_relu(const Mat& a, double slope) {
  Mat out(a.rows(), a.cols());
  auto src = a.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > 0.0 ? src[i] : slope * src[i];
  return out;
}

// ---------------------------------------------------------------- rank

std::vector<double> singular_values(const Mat& a) {
  if (a.empty()) throw ShapeError("singular_values: empty matrix " + a.shape_string());
  // Orthogonalize the columns of the orientation with fewer columns.
  const Mat work = a.cols() <= a.rows() ? a : transpose(a);
  const std::size_t m = work.rows();
  const std::size_t n = work.cols();
  std::vector<std::vector<double>> col(n, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) col[j][i] = work(i, j);

  constexpr double eps = 1e-15;
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = kernels::row_dot(m, col[p].data(), col[p].data());
        const double beta = kernels::row_dot(m, col[q].data(), col[q].data());
        const double gamma = kernels::row_dot(m, col[p].data(), col[q].data());
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double xp = col[p][i];
          const double xq = col[q][i];
          col[p][i] = c * xp - s * xq;
          col[q][i] = s * xp + c * xq;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sv(n);
  for (std::size_t j = 0; j < n; ++j) sv[j] = std::sqrt(kernels::row_dot(m, col[j].data(), col[j].data()));
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

std::size_t numerical_rank(const Mat& a, double rel_tol) {
  if (a.empty()) throw ShapeError("numerical_rank: empty matrix " + a.shape_string());
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw ParameterError("numerical_rank: rel_tol must lie in (0,1)");
  const auto sv = singular_values(a);
  if (sv.front() == 0.0) return 0;
  const double cutoff = rel_tol * sv.front();
  return static_cast<std::size_t>(std::count_if(sv.begin(), sv.end(), [&](double s) { return s > cutoff; }));
}

Mat randn(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  if (!(stddev >= 0.0)) throw ParameterError("randn: stddev must be non-negative");
  Mat m(rows, cols);
  for (double& x : m.values()) x = stddev * rng.normal();
  return m;
}

double max_abs_diff(const Mat& a, const Mat& b) {
  require_same_shape(a, b, "max_abs_diff");
  double d = 0.0;
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < x.size(); ++i) d = std::max(d, std::abs(x[i] - y[i]));
  return d;
}

void require_finite(const Mat& a, const char* what) {
  for (double x : a.values()) {
    if (!std::isfinite(x)) throw NumericError(std::string(what) + ": non-finite entry in " + a.shape_string() + " result");
  }
}

}  // namespace gmp
