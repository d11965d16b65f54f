#include "egocurate/select.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "egocurate/parallel.hpp"
#include "egocurate/rng.hpp"
#include "oracles.hpp"

using namespace egocurate;

namespace {

PropertySet blur_ps(const std::string& id, double mean, double std_dev) {
  PropertySet ps;
  ps.id = id;
  ps.blur = BlurrinessSummary{mean, std_dev};
  return ps;
}

PropertySet blur_motion_ps(const std::string& id, double mean, double std_dev,
                           double mx, double my) {
  PropertySet ps = blur_ps(id, mean, std_dev);
  CameraMotionSummary m;
  m.resultant = {mx, my};
  ps.motion = m;
  return ps;
}

SelectionConfig blur_only_config(SelectionMode mode, std::size_t k,
                                 std::size_t target, std::uint64_t seed) {
  SelectionConfig config;
  config.mode = mode;
  config.tau = 1.0;
  config.k = k;
  config.target = target;
  config.weights = {0, 0, 0, 0, 0, 1};
  config.seed = seed;
  return config;
}

std::string padded_id(const std::string& prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", i);
  return prefix + buf;
}

// The 2-cluster fixture of the selection contract: 200 source points near 0,
// a pool of 100 near 0 and 100 far away at 10.
struct TwoClusterFixture {
  std::vector<PropertySet> source;
  std::vector<PropertySet> extra;
  std::set<std::string> far_ids;

  TwoClusterFixture() {
    Rng rng(501);
    for (int i = 0; i < 200; ++i)
      source.push_back(blur_ps(padded_id("s", i), rng.normal(), 0.8));
    for (int i = 0; i < 100; ++i)
      extra.push_back(blur_ps(padded_id("near", i), rng.normal(), 0.8));
    for (int i = 0; i < 100; ++i) {
      auto ps = blur_ps(padded_id("far", i), 10.0 + rng.normal(), 0.8);
      far_ids.insert(ps.id);
      extra.push_back(ps);
    }
    std::sort(extra.begin(), extra.end(),
              [](const PropertySet& a, const PropertySet& b) { return a.id < b.id; });
  }

  // Independent route: z-score by source stats, per-point mixture density,
  // Eq.-2 softmax, then the far ids' probability mass.
  double oracle_far_mass(SelectionMode mode, double tau) const {
    std::vector<double> src_means, src_stds;
    for (const auto& ps : source) {
      src_means.push_back(ps.blur->mean);
      src_stds.push_back(ps.blur->std);
    }
    double mean = 0;
    for (double v : src_means) mean += v;
    mean /= static_cast<double>(src_means.size());
    const double sigma = oracle::population_sigma(src_means);
    std::vector<double> z_means, z_stds;
    for (std::size_t i = 0; i < src_means.size(); ++i) {
      z_means.push_back((src_means[i] - mean) / sigma);
      z_stds.push_back(src_stds[i] / sigma);
    }
    std::vector<double> zv;
    const double sign = mode == SelectionMode::performance ? 1.0 : -1.0;
    for (const auto& ps : extra) {
      const double ll = oracle::per_point_log_density(
          z_means, z_stds, (ps.blur->mean - mean) / sigma);
      zv.push_back(sign * ll / tau);
    }
    auto probs = oracle::softmax(zv);
    double far = 0;
    for (std::size_t i = 0; i < extra.size(); ++i)
      if (far_ids.count(extra[i].id)) far += probs[i];
    return far;
  }

  double library_far_mass(SelectionMode mode) const {
    SelectionConfig config = blur_only_config(mode, 1, source.size() + 1, 0);
    auto probs = unified_probabilities(source, extra, config);
    double far = 0;
    for (std::size_t i = 0; i < extra.size(); ++i)
      if (far_ids.count(extra[i].id)) far += probs[i];
    return far;
  }
};

}  // namespace

TEST_CASE("Eq. 2 exact values on [0, ln 2]") {
  const std::vector<double> lls = {0.0, std::log(2.0)};
  auto perf = sampling_probabilities(lls, SelectionMode::performance, 1.0);
  CHECK(std::abs(perf[0] - 1.0 / 3.0) < 1e-12);
  CHECK(std::abs(perf[1] - 2.0 / 3.0) < 1e-12);
  auto bal = sampling_probabilities(lls, SelectionMode::balancedness, 1.0);
  CHECK(std::abs(bal[0] - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(bal[1] - 1.0 / 3.0) < 1e-12);
}

TEST_CASE("Eq. 2 uniform on constant log-likelihoods") {
  const std::vector<double> lls(7, -3.25);
  for (auto mode : {SelectionMode::performance, SelectionMode::balancedness}) {
    auto p = sampling_probabilities(lls, mode, 0.7);
    for (double v : p) CHECK(std::abs(v - 1.0 / 7.0) < 1e-12);
  }
}

TEST_CASE("Eq. 2 shift invariance on 100 random vectors") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(20);
    std::vector<double> lls(n), shifted(n);
    const double shift = 10.0 * rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
      lls[i] = 5.0 * rng.normal();
      shifted[i] = lls[i] + shift;
    }
    const double tau = 0.25 + 2.0 * rng.uniform();
    for (auto mode : {SelectionMode::performance, SelectionMode::balancedness}) {
      auto a = sampling_probabilities(lls, mode, tau);
      auto b = sampling_probabilities(shifted, mode, tau);
      double sum = 0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(a[i] - b[i]) < 1e-12);
        sum += a[i];
      }
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("Eq. 2 rejects bad inputs") {
  CHECK_THROWS_AS(sampling_probabilities({0.0}, SelectionMode::performance, 0.0),
                  ValidationError);
  CHECK_THROWS_AS(sampling_probabilities({0.0}, SelectionMode::performance, -1.0),
                  ValidationError);
  CHECK_THROWS_AS(sampling_probabilities(
                      {std::numeric_limits<double>::infinity()},
                      SelectionMode::performance, 1.0),
                  ValidationError);
}

TEST_CASE("empty pool selects nothing") {
  std::vector<PropertySet> source = {blur_ps("a", 0, 1), blur_ps("b", 1, 1)};
  SelectionResult result =
      select(source, {}, blur_only_config(SelectionMode::balancedness, 1, 10, 0));
  CHECK(result.chosen.empty());
  CHECK(result.rounds.empty());
  CHECK(result.final_source_size == 2);
}

TEST_CASE("2-cluster fixture: balancedness prefers the far cluster") {
  TwoClusterFixture fx;
  const double far_bal_lib = fx.library_far_mass(SelectionMode::balancedness);
  const double far_bal_oracle = fx.oracle_far_mass(SelectionMode::balancedness, 1.0);
  CHECK(far_bal_lib > 0.5);
  CHECK(std::abs(far_bal_lib - far_bal_oracle) < 0.05);
  // Both routes compute the same quantity; agreement should be much tighter.
  CHECK(std::abs(far_bal_lib - far_bal_oracle) < 1e-9);

  const double far_perf_lib = fx.library_far_mass(SelectionMode::performance);
  const double far_perf_oracle = fx.oracle_far_mass(SelectionMode::performance, 1.0);
  CHECK(1.0 - far_perf_lib > 0.5);  // near cluster dominates
  CHECK(std::abs(far_perf_lib - far_perf_oracle) < 0.05);

  // Monotone audit: far share strictly larger under balancedness.
  CHECK(far_bal_lib > far_perf_lib);
}

TEST_CASE("select honors the size contract and never duplicates") {
  Rng rng(31);
  std::vector<PropertySet> source, extra;
  for (int i = 0; i < 20; ++i)
    source.push_back(blur_ps(padded_id("s", i), rng.normal(), 0.5));
  for (int i = 0; i < 15; ++i)
    extra.push_back(blur_ps(padded_id("e", i), rng.normal() + 2, 0.5));

  SUBCASE("target reached") {
    auto result =
        select(source, extra, blur_only_config(SelectionMode::balancedness, 4, 30, 9));
    CHECK(result.chosen.size() == 10);
    CHECK(result.final_source_size == 30);
    CHECK(result.rounds.size() == 3);  // 4 + 4 + 2
    CHECK(result.rounds.back().chosen.size() == 2);
    std::set<std::string> unique(result.chosen.begin(), result.chosen.end());
    CHECK(unique.size() == result.chosen.size());
    for (const auto& id : result.chosen) CHECK(id.rfind("e", 0) == 0);
  }
  SUBCASE("pool exhausted") {
    auto result =
        select(source, extra, blur_only_config(SelectionMode::balancedness, 4, 100, 9));
    CHECK(result.chosen.size() == 15);
    CHECK(result.final_source_size == 35);
  }
  SUBCASE("k larger than target is rejected") {
    CHECK_THROWS_AS(
        select(source, extra, blur_only_config(SelectionMode::balancedness, 200, 30, 9)),
        ValidationError);
  }
  SUBCASE("overlapping ids are rejected") {
    auto bad = extra;
    bad.push_back(blur_ps(padded_id("s", 3), 0, 0.5));
    CHECK_THROWS_AS(
        select(source, bad, blur_only_config(SelectionMode::balancedness, 4, 30, 9)),
        ValidationError);
  }
}

TEST_CASE("select is deterministic across reruns and worker counts") {
  TwoClusterFixture fx;
  auto config = blur_only_config(SelectionMode::balancedness, 25, 250, 123);

  const int saved = worker_count_override();
  worker_count_override() = 1;
  auto a = select(fx.source, fx.extra, config);
  worker_count_override() = 4;
  auto b = select(fx.source, fx.extra, config);
  worker_count_override() = saved;
  CHECK(a.chosen == b.chosen);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t r = 0; r < a.rounds.size(); ++r) {
    REQUIRE(a.rounds[r].chosen.size() == b.rounds[r].chosen.size());
    for (std::size_t i = 0; i < a.rounds[r].chosen.size(); ++i) {
      CHECK(a.rounds[r].chosen[i].id == b.rounds[r].chosen[i].id);
      CHECK(a.rounds[r].chosen[i].probability == b.rounds[r].chosen[i].probability);
    }
  }

  auto c = select(fx.source, fx.extra, config);
  CHECK(a.chosen == c.chosen);

  config.seed = 124;
  auto d = select(fx.source, fx.extra, config);
  CHECK(a.chosen != d.chosen);
}

TEST_CASE("unified probabilities combine per-property simplex vectors") {
  Rng rng(61);
  std::vector<PropertySet> source, extra;
  for (int i = 0; i < 30; ++i)
    source.push_back(blur_motion_ps(padded_id("s", i), rng.normal(), 0.5,
                                    rng.normal(), rng.normal()));
  for (int i = 0; i < 20; ++i)
    extra.push_back(blur_motion_ps(padded_id("e", i), rng.normal(), 0.5,
                                   rng.normal(), rng.normal()));
  SelectionConfig config;
  config.mode = SelectionMode::balancedness;
  config.tau = 1.0;
  config.k = 1;
  config.target = 31;
  config.weights = {0, 0, 0, 0, 10, 5};  // motion + blur
  config.seed = 0;
  auto unified = unified_probabilities(source, extra, config);
  double sum = 0;
  for (double p : unified) sum += p;
  CHECK(std::abs(sum - 1.0) < 1e-9);

  SelectionConfig only_motion = config;
  only_motion.weights = {0, 0, 0, 0, 1, 0};
  SelectionConfig only_blur = config;
  only_blur.weights = {0, 0, 0, 0, 0, 1};
  auto pm = unified_probabilities(source, extra, only_motion);
  auto pb = unified_probabilities(source, extra, only_blur);
  for (std::size_t i = 0; i < extra.size(); ++i)
    CHECK(unified[i] ==
          doctest::Approx(10.0 / 15.0 * pm[i] + 5.0 / 15.0 * pb[i]).epsilon(1e-12));
}

TEST_CASE("weighted property missing from the data is an error") {
  std::vector<PropertySet> source = {blur_ps("a", 0, 1), blur_ps("b", 1, 1)};
  std::vector<PropertySet> extra = {blur_ps("c", 2, 1)};
  SelectionConfig config = blur_only_config(SelectionMode::balancedness, 1, 3, 0);
  config.weights = {1, 0, 0, 0, 0, 0};  // semantic missing everywhere
  CHECK_THROWS_AS(select(source, extra, config), ValidationError);

  config.weights = {0, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(select(source, extra, config), ValidationError);
}

TEST_CASE("prune removes from the dense pair, never the outlier") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::vector<PropertySet> table = {blur_ps("a", 0.0, 0.5),
                                      blur_ps("b", 0.01, 0.5),
                                      blur_ps("c", 10.0, 0.5)};
    auto removed =
        prune(table, 0.2, {0, 0, 0, 0, 0, 1}, 1.0, seed);  // ceil(0.6) = 1
    REQUIRE(removed.size() == 1);
    CHECK(removed[0] != "c");
    CHECK((removed[0] == "a" || removed[0] == "b"));
  }

  // Leave-one-out enumeration oracle: likelihood of each point with its own
  // kernel removed, after the full-set z-scoring.
  std::vector<double> means = {0.0, 0.01, 10.0};
  std::vector<double> stds = {0.5, 0.5, 0.5};
  double mean = (means[0] + means[1] + means[2]) / 3.0;
  double sigma = oracle::population_sigma(means);
  std::vector<double> z(3), zs(3);
  for (int i = 0; i < 3; ++i) {
    z[i] = (means[i] - mean) / sigma;
    zs[i] = stds[i] / sigma;
  }
  std::vector<double> loo(3);
  for (int i = 0; i < 3; ++i) {
    std::vector<double> other_means, other_stds;
    for (int j = 0; j < 3; ++j) {
      if (j == i) continue;
      other_means.push_back(z[j]);
      other_stds.push_back(zs[j]);
    }
    loo[i] = oracle::per_point_log_density(other_means, other_stds, z[i]);
  }
  const int argmin = static_cast<int>(
      std::min_element(loo.begin(), loo.end()) - loo.begin());
  CHECK(argmin == 2);  // the outlier has the lowest leave-one-out likelihood
}

TEST_CASE("prune removal count and determinism") {
  Rng rng(41);
  std::vector<PropertySet> table;
  for (int i = 0; i < 25; ++i)
    table.push_back(blur_ps(padded_id("p", i), rng.normal(), 0.5));
  auto removed = prune(table, 0.1, {0, 0, 0, 0, 0, 1}, 1.0, 7);
  CHECK(removed.size() == 3);  // ceil(2.5)
  auto removed2 = prune(table, 0.1, {0, 0, 0, 0, 0, 1}, 1.0, 7);
  CHECK(removed == removed2);

  CHECK_THROWS_AS(prune(table, 0.0, {0, 0, 0, 0, 0, 1}, 1.0, 7), ValidationError);
  CHECK_THROWS_AS(prune(table, 1.0, {0, 0, 0, 0, 0, 1}, 1.0, 7), ValidationError);
}

TEST_CASE("replace keeps the set size and errors on a short pool") {
  Rng rng(55);
  std::vector<PropertySet> table, pool;
  for (int i = 0; i < 20; ++i)
    table.push_back(blur_ps(padded_id("t", i), rng.normal(), 0.5));
  for (int i = 0; i < 30; ++i)
    pool.push_back(blur_ps(padded_id("q", i), rng.normal() + 1, 0.5));

  SelectionConfig config = blur_only_config(SelectionMode::balancedness, 1, 20, 3);
  auto result = replace(table, pool, 0.1, config);
  CHECK(result.removed.size() == 2);
  CHECK(result.added.size() == 2);
  for (const auto& id : result.added) CHECK(id.rfind("q", 0) == 0);

  std::vector<PropertySet> short_pool(pool.begin(), pool.begin() + 1);
  CHECK_THROWS_AS(replace(table, short_pool, 0.1, config), ValidationError);
  CHECK_THROWS_AS(replace(table, {}, 0.1, config), ValidationError);
  CHECK_THROWS_AS(replace(table, pool, 0.0, config), ValidationError);
}

namespace {

Manifest build_fixture_manifest(int classes, int per_class, Split split,
                                std::vector<PropertySet>* props, Rng& rng) {
  Manifest m;
  for (int c = 0; c < classes; ++c) {
    ClassEntry e;
    e.label_id = c;
    e.canonical_text = "class" + std::to_string(c);
    e.member_texts = {e.canonical_text};
    e.semantic_vector = {1.0, static_cast<double>(c)};
    m.classes.entries.push_back(e);
    for (int i = 0; i < per_class; ++i) {
      VideoRecord r;
      r.id = padded_id("c" + std::to_string(c) + "_", i);
      r.source = "synthetic";
      r.split = split;
      r.label_text = e.canonical_text;
      r.label_id = c;
      r.fps_native = 30;
      m.records.push_back(r);
      props->push_back(blur_ps(r.id, rng.normal() + c, 0.5));
    }
  }
  return m;
}

}  // namespace

TEST_CASE("build_dataset: base only, completion, role filter, nesting") {
  Rng rng(71);
  std::vector<PropertySet> props;
  Manifest m = build_fixture_manifest(5, 10, Split::train, &props, rng);

  SelectionConfig config = blur_only_config(SelectionMode::balancedness, 5, 0, 11);

  SUBCASE("target equals base: Algorithm 1 never runs") {
    auto result = build_dataset(m, props, DatasetRole::pretrain, 20, 4, config);
    CHECK(result.manifest.records.size() == 20);
    CHECK(result.selection.chosen.empty());
    CHECK(result.selection.rounds.empty());
  }
  SUBCASE("target below base is an error") {
    CHECK_THROWS_AS(build_dataset(m, props, DatasetRole::pretrain, 10, 4, config),
                    ValidationError);
  }
  SUBCASE("completion fills to the target") {
    auto result = build_dataset(m, props, DatasetRole::pretrain, 35, 4, config);
    CHECK(result.manifest.records.size() == 35);
    CHECK(result.base.ids.size() == 20);
    CHECK(result.selection.chosen.size() == 15);
    std::set<std::string> ids;
    for (const auto& r : result.manifest.records) ids.insert(r.id);
    CHECK(ids.size() == 35);
    auto again = build_dataset(m, props, DatasetRole::pretrain, 35, 4, config);
    CHECK(again.selection.chosen == result.selection.chosen);
  }
  SUBCASE("test role only sees val/test records") {
    auto result = build_dataset(m, props, DatasetRole::test, 0, 4, config);
    CHECK(result.manifest.records.empty());  // fixture is all train
  }
  SUBCASE("nested construction extends the smaller set") {
    auto small = build_dataset(m, props, DatasetRole::pretrain, 25, 4, config);
    std::vector<std::string> prior;
    for (const auto& r : small.manifest.records) prior.push_back(r.id);
    auto big = build_dataset(m, props, DatasetRole::pretrain, 40, 4, config, prior);
    CHECK(big.manifest.records.size() == 40);
    std::set<std::string> big_ids;
    for (const auto& r : big.manifest.records) big_ids.insert(r.id);
    for (const auto& id : prior) CHECK(big_ids.count(id) == 1);
  }
}
