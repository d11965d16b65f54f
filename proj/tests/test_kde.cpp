#include "egocurate/kde.hpp"

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "egocurate/rng.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace egocurate;

namespace {

Matrix column(const std::vector<double>& values) {
  Matrix m(values.size(), 1);
  for (std::size_t i = 0; i < values.size(); ++i) m.at(i, 0) = values[i];
  return m;
}

std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < m.rows; ++r)
    out.emplace_back(m.row(r), m.row(r) + m.cols);
  return out;
}

}  // namespace

TEST_CASE("Silverman bandwidth on the {0,2} fixture") {
  DensityModel model = fit(column({0.0, 2.0}));
  const double expected = std::pow(4.0 / 6.0, 0.2);  // sigma = 1, d = 1, n = 2
  CHECK(model.bandwidths[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(model.bandwidths[0] ==
        doctest::Approx(oracle::silverman_bandwidth(1.0, 2, 1)).epsilon(1e-12));
  CHECK(model.warnings.empty());
}

TEST_CASE("degenerate dimension floors the bandwidth and warns") {
  Matrix pts(3, 2);
  for (std::size_t r = 0; r < 3; ++r) {
    pts.at(r, 0) = 5.0;
    pts.at(r, 1) = 5.0;
  }
  DensityModel model = fit(pts);
  CHECK(model.bandwidths[0] == kSigmaFloor);
  CHECK(model.bandwidths[1] == kSigmaFloor);
  CHECK(model.warnings.size() == 2);
}

TEST_CASE("fit rejects fewer than 2 points") {
  CHECK_THROWS_AS(fit(column({1.0})), ValidationError);
}

TEST_CASE("blurriness model: single video closed form") {
  DensityModel model = fit_blurriness({100.0}, {10.0});
  const double x = 100.0;
  const double density = std::exp(log_density(model, &x, 1));
  CHECK(density ==
        doctest::Approx(1.0 / (10.0 * std::sqrt(2 * M_PI))).epsilon(1e-12));
}

TEST_CASE("blurriness model floors zero stds") {
  DensityModel model = fit_blurriness({1.0, 2.0}, {0.0, 3.0});
  CHECK(model.bandwidths[0] == kSigmaFloor);
  CHECK(model.bandwidths[1] == 3.0);
  CHECK(model.warnings.size() == 1);
  CHECK_THROWS_AS(fit_blurriness({1.0}, {1.0, 2.0}), ValidationError);
}

TEST_CASE("blurriness mixture lower bound at each mean") {
  DensityModel model = fit_blurriness({0.0, 50.0}, {2.0, 5.0});
  for (std::size_t j = 0; j < 2; ++j) {
    const double x = model.points.at(j, 0);
    const double own_peak = 1.0 / (model.bandwidths[j] * std::sqrt(2 * M_PI));
    CHECK(log_density(model, &x, 1) >= std::log(0.5 * own_peak));
  }
}

TEST_CASE("log_density matches the brute-force mixture oracle on {0,2}") {
  DensityModel model = fit(column({0.0, 2.0}));
  const double x = 1.0;
  const double got = log_density(model, &x, 1);
  const double want =
      oracle::mixture_log_density({{0.0}, {2.0}}, {model.bandwidths[0]}, {1.0});
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
  // By symmetry the midpoint density equals a single kernel evaluated there.
  CHECK(got == doctest::Approx(std::log(oracle::normal_pdf(1.0, 0.0,
                                                           model.bandwidths[0])))
                   .epsilon(1e-12));
}

TEST_CASE("per-point standard normal peak") {
  DensityModel model = fit_blurriness({0.0}, {1.0});
  const double x = 0.0;
  CHECK(log_density(model, &x, 1) ==
        doctest::Approx(std::log(1.0 / std::sqrt(2 * M_PI))).epsilon(1e-12));
}

TEST_CASE("log_density equivalence on 50 seeded random fixtures") {
  Rng rng(2024);
  for (int fixture = 0; fixture < 50; ++fixture) {
    const std::size_t d = 1 + fixture % 8;
    const std::size_t n = 2 + rng.below(99);
    Matrix pts(n, d);
    for (auto& v : pts.data) v = 3.0 * rng.normal();
    DensityModel model = fit(pts);
    for (int q = 0; q < 4; ++q) {
      std::vector<double> x(d);
      for (auto& v : x) v = 4.0 * rng.normal();
      const double got = log_density(model, x);
      const double want =
          oracle::mixture_log_density(rows_of(pts), model.bandwidths, x);
      CHECK(std::abs(got - want) < 1e-9);
    }
  }
}

TEST_CASE("translation equivariance") {
  Rng rng(9);
  Matrix pts(20, 3);
  for (auto& v : pts.data) v = rng.normal();
  DensityModel model = fit(pts);
  std::vector<double> x = {0.3, -0.2, 1.1};
  const double base = log_density(model, x);

  const std::vector<double> shift = {7.5, -3.25, 11.0};
  Matrix moved = pts;
  for (std::size_t r = 0; r < moved.rows; ++r)
    for (std::size_t c = 0; c < moved.cols; ++c) moved.at(r, c) += shift[c];
  DensityModel model2 = fit(moved);
  std::vector<double> x2 = x;
  for (std::size_t c = 0; c < 3; ++c) x2[c] += shift[c];
  CHECK(log_density(model2, x2) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("log-sum-exp stays finite far away") {
  DensityModel model = fit(column({0.0, 2.0}));
  const double h = model.bandwidths[0];
  const double far = 2.0 + 50.0 * h;
  const double near = 2.0;
  const double ld_far = log_density(model, &far, 1);
  CHECK(std::isfinite(ld_far));
  CHECK(ld_far <= log_density(model, &near, 1));
}

TEST_CASE("fit is permutation invariant over rows") {
  Rng rng(13);
  Matrix pts(15, 2);
  for (auto& v : pts.data) v = rng.normal();
  DensityModel a = fit(pts);

  Matrix reversed(15, 2);
  for (std::size_t r = 0; r < 15; ++r)
    for (std::size_t c = 0; c < 2; ++c)
      reversed.at(r, c) = pts.at(14 - r, c);
  DensityModel b = fit(reversed);
  CHECK(a.bandwidths == b.bandwidths);
  std::vector<double> x = {0.5, -0.5};
  CHECK(log_density(a, x) == doctest::Approx(log_density(b, x)).epsilon(1e-12));
}

TEST_CASE("ego_similarity: empty set, single point, asymmetry") {
  DensityModel concentrated = fit(column({0.0, 0.05, -0.05, 0.02}));
  CHECK(ego_similarity(concentrated, Matrix(0, 1)) == 0.0);

  Matrix one(1, 1);
  one.at(0, 0) = 0.4;
  const double x = 0.4;
  CHECK(ego_similarity(concentrated, one) ==
        doctest::Approx(log_density(concentrated, &x, 1)).epsilon(1e-12));

  // Mild spread keeps the naive product oracle clear of underflow.
  Matrix dispersed_pts = column({-0.5, -0.2, 0.1, 0.4});
  DensityModel dispersed = fit(dispersed_pts);
  Matrix concentrated_pts = column({0.0, 0.05, -0.05, 0.02});
  const double ab = ego_similarity(concentrated, dispersed_pts);
  const double ba = ego_similarity(dispersed, concentrated_pts);
  CHECK(ab != doctest::Approx(ba).epsilon(1e-6));

  // Sum-of-logs semantics against the oracle.
  double manual = 0;
  for (std::size_t r = 0; r < dispersed_pts.rows; ++r)
    manual += oracle::mixture_log_density(rows_of(concentrated_pts),
                                          concentrated.bandwidths,
                                          {dispersed_pts.at(r, 0)});
  CHECK(ab == doctest::Approx(manual).epsilon(1e-12));
}

TEST_CASE("density integrates to 1 (Monte Carlo)") {
  SUBCASE("1-D") {
    DensityModel model = fit(column({0.0, 2.0}));
    Rng rng(8);
    const double lo = -6, hi = 8;
    double acc = 0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) {
      const double x = lo + (hi - lo) * rng.uniform();
      acc += std::exp(log_density(model, &x, 1));
    }
    CHECK(acc / n * (hi - lo) == doctest::Approx(1.0).epsilon(0.02));
  }
  SUBCASE("2-D") {
    Matrix pts(3, 2);
    pts.at(0, 0) = 0;
    pts.at(0, 1) = 0;
    pts.at(1, 0) = 2;
    pts.at(1, 1) = 1;
    pts.at(2, 0) = -1;
    pts.at(2, 1) = 1;
    DensityModel model = fit(pts);
    Rng rng(21);
    const double lo = -6, hi = 8;
    double acc = 0;
    const int n = 1'000'000;
    for (int i = 0; i < n; ++i) {
      std::vector<double> x = {lo + (hi - lo) * rng.uniform(),
                               lo + (hi - lo) * rng.uniform()};
      acc += std::exp(log_density(model, x));
    }
    CHECK(acc / n * (hi - lo) * (hi - lo) == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("dimension mismatch is rejected") {
  DensityModel model = fit(column({0.0, 2.0}));
  std::vector<double> x = {1.0, 1.0};
  CHECK_THROWS_AS(log_density(model, x), ValidationError);
}

TEST_CASE("model blob round-trips") {
  TempDir dir("kde_blob");
  Rng rng(3);
  Matrix pts(10, 3);
  for (auto& v : pts.data) v = rng.normal();
  DensityModel model = fit(pts);
  Pretransform pre;
  pre.mean = {0.5, -0.5, 0.25};
  pre.scale = {2.0, 1.0, 0.5};
  model.pretransform = pre;

  const auto path = dir / "m.bin";
  save_model(model, path);
  DensityModel loaded = load_model(path);
  CHECK(loaded.points.data == model.points.data);
  CHECK(loaded.bandwidths == model.bandwidths);
  REQUIRE(loaded.pretransform.has_value());
  CHECK(loaded.pretransform->mean == pre.mean);
  CHECK(loaded.pretransform->scale == pre.scale);
  std::vector<double> x = {1.0, 2.0, 3.0};
  CHECK(log_density(loaded, x) == log_density(model, x));

  DensityModel pp = fit_blurriness({1.0, 2.0, 3.0}, {0.5, 0.5, 0.5});
  const auto path2 = dir / "pp.bin";
  save_model(pp, path2);
  DensityModel pp2 = load_model(path2);
  CHECK(pp2.mode == BandwidthMode::per_point);
  const double x1 = 1.5;
  CHECK(log_density(pp2, &x1, 1) == log_density(pp, &x1, 1));
}

TEST_CASE("pretransform maps raw queries into model space") {
  // Model fitted on z-scored data must reproduce the raw-space density
  // shifted/scaled accordingly.
  Matrix raw = column({10.0, 14.0});
  const double mean = 12.0, sigma = 2.0;
  Matrix z = column({-1.0, 1.0});
  DensityModel model = fit(z);
  model.pretransform = Pretransform{{mean}, {sigma}, std::nullopt};
  const double x = 11.0;  // maps to -0.5
  const double direct = -0.5;
  DensityModel plain = fit(z);
  CHECK(log_density(model, &x, 1) ==
        doctest::Approx(log_density(plain, &direct, 1)).epsilon(1e-12));
  (void)raw;
}
