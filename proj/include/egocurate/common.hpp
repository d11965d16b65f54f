#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace egocurate {

inline constexpr const char* kToolVersion = "0.1.0";

// Data/validation failures (bad values, broken invariants). CLI maps these
// to exit code 3.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem/stream failures. CLI maps these to exit code 4.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shortest decimal representation that round-trips the exact double.
// Every emitted file goes through this so reruns are byte-stable.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double angle_mod_2pi(double a) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  double r = std::fmod(a, two_pi);
  if (r < 0) r += two_pi;
  if (r >= two_pi) r = 0.0;
  return r;
}

// Row-major dense matrix of doubles. Small enough on purpose; heavy linear
// algebra goes through Eigen maps where needed.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }

  void push_row(const std::vector<double>& v) {
    if (rows == 0 && cols == 0) cols = v.size();
    if (v.size() != cols)
      throw ValidationError("matrix row length mismatch: expected " +
                            std::to_string(cols) + ", got " +
                            std::to_string(v.size()));
    data.insert(data.end(), v.begin(), v.end());
    ++rows;
  }
};

}  // namespace egocurate
