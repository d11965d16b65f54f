#include "egocurate/kde.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "egocurate/parallel.hpp"

static_assert(std::endian::native == std::endian::little,
              "model blob I/O assumes a little-endian host");

namespace egocurate {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;
// exp() arguments below this add < n*1e-19 relative mass; skipping them also
// avoids the subnormal slow path on far-away kernels.
constexpr double kExpCutoff = -45.0;

double population_sigma(const Matrix& points, std::size_t dim) {
  double mean = 0;
  for (std::size_t r = 0; r < points.rows; ++r) mean += points.at(r, dim);
  mean /= static_cast<double>(points.rows);
  double var = 0;
  for (std::size_t r = 0; r < points.rows; ++r) {
    const double d = points.at(r, dim) - mean;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(points.rows));
}

double log_sum_exp(const std::vector<double>& t, std::size_t skip, double& max_out) {
  double max = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (j == skip) continue;
    if (t[j] > max) max = t[j];
  }
  double sum = 0;
  for (std::size_t j = 0; j < t.size(); ++j) {
    if (j == skip) continue;
    const double d = t[j] - max;
    if (d > kExpCutoff) sum += std::exp(d);
  }
  max_out = max;
  return max + std::log(sum);
}

// Per-kernel log weights at z (model space), without the 1/n mixture term.
void kernel_log_terms(const DensityModel& model, const double* z,
                      std::vector<double>& t) {
  const std::size_t n = model.size();
  const std::size_t d = model.dim();
  t.resize(n);
  if (model.mode == BandwidthMode::shared) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* p = model.points.row(j);
      double acc = 0;
      for (std::size_t i = 0; i < d; ++i) {
        const double u = (z[i] - p[i]) / model.bandwidths[i];
        acc += u * u;
      }
      t[j] = -0.5 * acc;
    }
  } else {
    for (std::size_t j = 0; j < n; ++j) {
      const double u = (z[0] - model.points.at(j, 0)) / model.bandwidths[j];
      t[j] = -0.5 * u * u - std::log(model.bandwidths[j]);
    }
  }
}

double shared_log_norm(const DensityModel& model) {
  double c = 0;
  for (double h : model.bandwidths) c -= std::log(h) + kLogSqrt2Pi;
  return c;
}

double log_density_at(const DensityModel& model, const double* z,
                      std::vector<double>& scratch, std::size_t skip,
                      std::size_t effective_n) {
  kernel_log_terms(model, z, scratch);
  double max = 0;
  const double lse = log_sum_exp(scratch, skip, max);
  const double log_n = std::log(static_cast<double>(effective_n));
  if (model.mode == BandwidthMode::shared)
    return shared_log_norm(model) - log_n + lse;
  return -kLogSqrt2Pi - log_n + lse;
}

}  // namespace

std::vector<double> Pretransform::apply(const double* x, std::size_t len) const {
  if (len != mean.size())
    throw ValidationError("kde: dimension mismatch (" + std::to_string(len) +
                          " vs raw dim " + std::to_string(mean.size()) + ")");
  std::vector<double> z(len);
  for (std::size_t i = 0; i < len; ++i) z[i] = (x[i] - mean[i]) / scale[i];
  if (!components) return z;
  std::vector<double> out(components->rows, 0.0);
  for (std::size_t c = 0; c < components->rows; ++c) {
    const double* axis = components->row(c);
    double acc = 0;
    for (std::size_t i = 0; i < len; ++i) acc += axis[i] * z[i];
    out[c] = acc;
  }
  return out;
}

DensityModel fit(const Matrix& points) {
  if (points.rows < 2)
    throw ValidationError("kde fit: need at least 2 points, got " +
                          std::to_string(points.rows));
  if (points.cols == 0) throw ValidationError("kde fit: zero-dimensional points");
  DensityModel model;
  model.mode = BandwidthMode::shared;
  model.points = points;
  const double n = static_cast<double>(points.rows);
  const double d = static_cast<double>(points.cols);
  const double factor = std::pow(4.0 / ((d + 2.0) * n), 1.0 / (d + 4.0));
  model.bandwidths.resize(points.cols);
  for (std::size_t i = 0; i < points.cols; ++i) {
    const double sigma = population_sigma(points, i);
    if (sigma < kSigmaFloor) {
      model.bandwidths[i] = kSigmaFloor;
      model.warnings.push_back("dimension " + std::to_string(i) +
                               " is degenerate; bandwidth floored");
    } else {
      model.bandwidths[i] = sigma * factor;
    }
  }
  return model;
}

DensityModel fit_blurriness(const std::vector<double>& means,
                            const std::vector<double>& stds) {
  if (means.size() != stds.size())
    throw ValidationError("kde fit_blurriness: means/stds length mismatch (" +
                          std::to_string(means.size()) + " vs " +
                          std::to_string(stds.size()) + ")");
  if (means.empty()) throw ValidationError("kde fit_blurriness: empty input");
  DensityModel model;
  model.mode = BandwidthMode::per_point;
  model.points = Matrix(means.size(), 1);
  model.bandwidths.resize(means.size());
  for (std::size_t j = 0; j < means.size(); ++j) {
    if (stds[j] < 0)
      throw ValidationError("kde fit_blurriness: negative std at index " +
                            std::to_string(j));
    model.points.at(j, 0) = means[j];
    if (stds[j] < kSigmaFloor) {
      model.bandwidths[j] = kSigmaFloor;
      model.warnings.push_back("point " + std::to_string(j) +
                               " has zero std; bandwidth floored");
    } else {
      model.bandwidths[j] = stds[j];
    }
  }
  return model;
}

double log_density(const DensityModel& model, const double* x, std::size_t len) {
  std::vector<double> scratch;
  if (model.pretransform) {
    auto z = model.pretransform->apply(x, len);
    return log_density_at(model, z.data(), scratch, model.size(), model.size());
  }
  if (len != model.dim())
    throw ValidationError("kde: dimension mismatch (" + std::to_string(len) +
                          " vs " + std::to_string(model.dim()) + ")");
  return log_density_at(model, x, scratch, model.size(), model.size());
}

double log_density(const DensityModel& model, const std::vector<double>& x) {
  return log_density(model, x.data(), x.size());
}

std::vector<double> log_densities(const DensityModel& model, const Matrix& xs) {
  const std::size_t want = model.raw_dim();
  if (xs.rows > 0 && xs.cols != want)
    throw ValidationError("kde: dimension mismatch (" + std::to_string(xs.cols) +
                          " vs " + std::to_string(want) + ")");
  std::vector<double> out(xs.rows);
  parallel_for(xs.rows, [&](std::size_t r) {
    thread_local std::vector<double> scratch;
    if (model.pretransform) {
      auto z = model.pretransform->apply(xs.row(r), xs.cols);
      out[r] = log_density_at(model, z.data(), scratch, model.size(), model.size());
    } else {
      out[r] = log_density_at(model, xs.row(r), scratch, model.size(), model.size());
    }
  });
  return out;
}

std::vector<double> loo_log_densities(const DensityModel& model) {
  if (model.size() < 2)
    throw ValidationError("kde: leave-one-out needs at least 2 points");
  std::vector<double> out(model.size());
  parallel_for(model.size(), [&](std::size_t i) {
    thread_local std::vector<double> scratch;
    out[i] = log_density_at(model, model.points.row(i), scratch, i,
                            model.size() - 1);
  });
  return out;
}

double ego_similarity(const DensityModel& model_a, const Matrix& set_b) {
  if (set_b.rows == 0) return 0.0;
  auto lls = log_densities(model_a, set_b);
  double sum = 0;
  for (double v : lls) sum += v;
  return sum;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_doubles(std::ofstream& out, const double* v, std::size_t n) {
  out.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(n * 8));
}
std::uint32_t get_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t get_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
void get_doubles(std::ifstream& in, double* v, std::size_t n) {
  in.read(reinterpret_cast<char*>(v), static_cast<std::streamsize>(n * 8));
}

constexpr char kModelMagic[8] = {'E', 'G', 'O', 'K', 'D', 'E', '0', '1'};

}  // namespace

void save_model(const DensityModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw IoError("cannot write " + path.string());
  out.write(kModelMagic, 8);
  put_u32(out, 1);
  put_u32(out, model.mode == BandwidthMode::shared ? 0u : 1u);
  put_u64(out, model.size());
  put_u64(out, model.dim());
  std::uint32_t flags = 0;
  if (model.pretransform) flags |= 1u;
  if (model.pretransform && model.pretransform->components) flags |= 2u;
  put_u32(out, flags);
  if (model.pretransform) put_u64(out, model.pretransform->in_dim());
  put_doubles(out, model.points.data.data(), model.points.data.size());
  put_doubles(out, model.bandwidths.data(), model.bandwidths.size());
  if (model.pretransform) {
    put_doubles(out, model.pretransform->mean.data(), model.pretransform->in_dim());
    put_doubles(out, model.pretransform->scale.data(), model.pretransform->in_dim());
    if (model.pretransform->components)
      put_doubles(out, model.pretransform->components->data.data(),
                  model.pretransform->components->data.size());
  }
  out.close();
  if (out.fail()) throw IoError("write failed for " + path.string());
}

DensityModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in.good() || std::memcmp(magic, kModelMagic, 8) != 0)
    throw ValidationError(path.string() + ": not a density model file");
  const std::uint32_t version = get_u32(in);
  if (version != 1)
    throw ValidationError(path.string() + ": unsupported model version " +
                          std::to_string(version));
  DensityModel model;
  model.mode = get_u32(in) == 0 ? BandwidthMode::shared : BandwidthMode::per_point;
  const std::uint64_t n = get_u64(in);
  const std::uint64_t d = get_u64(in);
  const std::uint32_t flags = get_u32(in);
  std::uint64_t d_raw = 0;
  if (flags & 1u) d_raw = get_u64(in);
  model.points = Matrix(n, d);
  get_doubles(in, model.points.data.data(), n * d);
  model.bandwidths.resize(model.mode == BandwidthMode::shared ? d : n);
  get_doubles(in, model.bandwidths.data(), model.bandwidths.size());
  if (flags & 1u) {
    Pretransform pre;
    pre.mean.resize(d_raw);
    pre.scale.resize(d_raw);
    get_doubles(in, pre.mean.data(), d_raw);
    get_doubles(in, pre.scale.data(), d_raw);
    if (flags & 2u) {
      pre.components = Matrix(d, d_raw);
      get_doubles(in, pre.components->data.data(), d * d_raw);
    }
    model.pretransform = std::move(pre);
  }
  if (!in.good()) throw ValidationError(path.string() + ": truncated model file");
  return model;
}

namespace {
constexpr char kFeatureMagic[8] = {'E', 'G', 'O', 'F', 'M', 'T', '0', '1'};
}

void save_feature_matrix(const Matrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out.good()) throw IoError("cannot write " + path.string());
  out.write(kFeatureMagic, 8);
  put_u32(out, 1);
  put_u64(out, m.rows);
  put_u64(out, m.cols);
  put_doubles(out, m.data.data(), m.data.size());
  out.close();
  if (out.fail()) throw IoError("write failed for " + path.string());
}

Matrix load_feature_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in.good() || std::memcmp(magic, kFeatureMagic, 8) != 0)
    throw ValidationError(path.string() + ": not a feature matrix file");
  const std::uint32_t version = get_u32(in);
  if (version != 1)
    throw ValidationError(path.string() + ": unsupported feature version " +
                          std::to_string(version));
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t cols = get_u64(in);
  Matrix m(rows, cols);
  get_doubles(in, m.data.data(), m.data.size());
  if (!in.good()) throw ValidationError(path.string() + ": truncated feature file");
  return m;
}

}  // namespace egocurate
