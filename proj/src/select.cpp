#include "egocurate/select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "egocurate/rng.hpp"

namespace egocurate {

std::string to_string(SelectionMode m) {
  return m == SelectionMode::performance ? "performance" : "balancedness";
}

SelectionMode selection_mode_from_string(const std::string& s) {
  if (s == "performance") return SelectionMode::performance;
  if (s == "balancedness") return SelectionMode::balancedness;
  throw ValidationError("unknown mode \"" + s +
                        "\" (expected performance|balancedness)");
}

std::string to_string(DatasetRole r) {
  return r == DatasetRole::pretrain ? "pretrain" : "test";
}

DatasetRole dataset_role_from_string(const std::string& s) {
  if (s == "pretrain") return DatasetRole::pretrain;
  if (s == "test") return DatasetRole::test;
  throw ValidationError("unknown role \"" + s + "\" (expected pretrain|test)");
}

std::vector<double> sampling_probabilities(const std::vector<double>& log_liks,
                                           SelectionMode mode, double tau) {
  if (!(tau > 0)) throw ValidationError("temperature must be > 0");
  const double sign = mode == SelectionMode::performance ? 1.0 : -1.0;
  std::vector<double> z(log_liks.size());
  double max = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_liks.size(); ++i) {
    if (!std::isfinite(log_liks[i]))
      throw ValidationError("non-finite log-likelihood at index " +
                            std::to_string(i));
    z[i] = sign * log_liks[i] / tau;
    max = std::max(max, z[i]);
  }
  double sum = 0;
  for (double& v : z) {
    v = std::exp(v - max);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

namespace {

constexpr std::size_t kSemanticPcaComponents = 32;

std::size_t weighted_property_count(const std::array<double, kPropertyCount>& w) {
  std::size_t count = 0;
  for (double v : w) {
    if (v < 0) throw ValidationError("property weights must be >= 0");
    if (v > 0) ++count;
  }
  return count;
}

}  // namespace

DensityModel fit_property_model(const std::vector<PropertySet>& table, Property p) {
  PropertyRep rep = property_rep(table, p);
  const std::size_t n = rep.values.rows;
  const std::size_t d = rep.values.cols;
  if (n < 2)
    throw ValidationError("property \"" + property_name(p) +
                          "\": need at least 2 rows to fit, got " +
                          std::to_string(n));

  // z-score with source statistics so no property dominates through scale
  std::vector<double> mean(d, 0.0), scale(d, 1.0);
  for (std::size_t c = 0; c < d; ++c) {
    double m = 0;
    for (std::size_t r = 0; r < n; ++r) m += rep.values.at(r, c);
    m /= static_cast<double>(n);
    double var = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const double dd = rep.values.at(r, c) - m;
      var += dd * dd;
    }
    mean[c] = m;
    scale[c] = std::max(std::sqrt(var / static_cast<double>(n)), kSigmaFloor);
  }
  Matrix z(n, d);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c)
      z.at(r, c) = (rep.values.at(r, c) - mean[c]) / scale[c];

  DensityModel model;
  if (p == Property::blur) {
    std::vector<double> means(n), stds(n);
    for (std::size_t r = 0; r < n; ++r) {
      means[r] = z.at(r, 0);
      stds[r] = rep.blur_stds[r] / scale[0];
    }
    model = fit_blurriness(means, stds);
    model.pretransform = Pretransform{mean, scale, std::nullopt};
    return model;
  }
  if (p == Property::semantic && d > kSemanticPcaComponents) {
    const std::size_t k =
        std::min<std::size_t>(kSemanticPcaComponents, std::min(d, n - 1));
    Pca pca = fit_pca(z, k);
    model = fit(pca_project(pca, z));
    // Fold the PCA centering into the z-score mean so one affine map covers
    // raw -> model space.
    std::vector<double> folded = mean;
    for (std::size_t c = 0; c < d; ++c) folded[c] += scale[c] * pca.mean[c];
    model.pretransform = Pretransform{folded, scale, pca.components};
    return model;
  }
  model = fit(z);
  model.pretransform = Pretransform{mean, scale, std::nullopt};
  return model;
}

std::vector<double> unified_probabilities(const std::vector<PropertySet>& source,
                                          const std::vector<PropertySet>& extra,
                                          const SelectionConfig& config) {
  if (weighted_property_count(config.weights) == 0)
    throw ValidationError("selection weights must not be all zero");
  double weight_sum = 0;
  for (double w : config.weights) weight_sum += w;

  std::vector<double> unified(extra.size(), 0.0);
  for (int pi = 0; pi < kPropertyCount; ++pi) {
    const double w = config.weights[pi];
    if (w == 0) continue;
    const Property p = kAllProperties[pi];
    DensityModel model = fit_property_model(source, p);
    PropertyRep rep = property_rep(extra, p);
    std::vector<double> lls = log_densities(model, rep.values);
    std::vector<double> probs = sampling_probabilities(lls, config.mode, config.tau);
    for (std::size_t i = 0; i < extra.size(); ++i)
      unified[i] += w / weight_sum * probs[i];
  }
  return unified;
}

namespace {

void sort_by_id(std::vector<PropertySet>& table) {
  std::sort(table.begin(), table.end(),
            [](const PropertySet& a, const PropertySet& b) { return a.id < b.id; });
}

// One sequential draw proportional to the remaining weights.
std::size_t draw_index(Rng& rng, const std::vector<double>& weights, double total) {
  const double u = rng.uniform() * total;
  double acc = 0;
  std::size_t last_live = weights.size();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0) continue;
    acc += weights[i];
    last_live = i;
    if (u < acc) return i;
  }
  // Float drift can leave u a hair past the final cumulative sum.
  if (last_live == weights.size())
    throw ValidationError("draw from empty weight vector");
  return last_live;
}

}  // namespace

SelectionResult select(std::vector<PropertySet> source,
                       std::vector<PropertySet> extra,
                       const SelectionConfig& config) {
  if (config.k < 1) throw ValidationError("k must be >= 1");
  if (config.k > config.target)
    throw ValidationError("k must not exceed the target size");
  if (!(config.tau > 0)) throw ValidationError("temperature must be > 0");
  weighted_property_count(config.weights);

  sort_by_id(source);
  sort_by_id(extra);
  {
    std::unordered_set<std::string> source_ids;
    for (const auto& ps : source) source_ids.insert(ps.id);
    for (const auto& ps : extra)
      if (source_ids.count(ps.id))
        throw ValidationError("id \"" + ps.id +
                              "\" appears in both source and pool");
  }

  SelectionResult result;
  Rng rng(config.seed);
  int round = 0;
  while (source.size() < config.target && !extra.empty()) {
    const std::vector<double> probs = unified_probabilities(source, extra, config);
    const std::size_t draws =
        std::min({config.k, config.target - source.size(), extra.size()});

    std::vector<double> weights = probs;
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> picked;
    RoundAudit audit;
    audit.round = round;
    audit.refit = true;
    for (std::size_t t = 0; t < draws; ++t) {
      const std::size_t idx = draw_index(rng, weights, total);
      picked.push_back(idx);
      audit.chosen.push_back({extra[idx].id, probs[idx]});
      total -= weights[idx];
      weights[idx] = 0;
    }

    std::vector<bool> taken(extra.size(), false);
    for (std::size_t idx : picked) taken[idx] = true;
    for (std::size_t idx : picked) {
      result.chosen.push_back(extra[idx].id);
      source.push_back(extra[idx]);
    }
    std::vector<PropertySet> remaining;
    remaining.reserve(extra.size() - picked.size());
    for (std::size_t i = 0; i < extra.size(); ++i)
      if (!taken[i]) remaining.push_back(std::move(extra[i]));
    extra = std::move(remaining);
    result.rounds.push_back(std::move(audit));
    ++round;
  }
  result.final_source_size = source.size();
  return result;
}

std::vector<std::string> prune(const std::vector<PropertySet>& table,
                               double fraction,
                               const std::array<double, kPropertyCount>& weights,
                               double tau, std::uint64_t /*seed*/) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ValidationError("prune fraction must be in (0,1)");
  if (weighted_property_count(weights) == 0)
    throw ValidationError("prune weights must not be all zero");
  const std::size_t n = table.size();
  const std::size_t count =
      static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  if (n < 2 || n - count < 2)
    throw ValidationError("prune would leave fewer than 2 instances (" +
                          std::to_string(n) + " - " + std::to_string(count) + ")");

  std::vector<PropertySet> sorted = table;
  sort_by_id(sorted);

  double weight_sum = 0;
  for (double w : weights) weight_sum += w;
  std::vector<double> score(n, 0.0);
  for (int pi = 0; pi < kPropertyCount; ++pi) {
    const double w = weights[pi];
    if (w == 0) continue;
    DensityModel model = fit_property_model(sorted, kAllProperties[pi]);
    std::vector<double> lls = loo_log_densities(model);
    // High likelihood means redundant, so the removal score always uses the
    // performance direction.
    std::vector<double> probs =
        sampling_probabilities(lls, SelectionMode::performance, tau);
    for (std::size_t i = 0; i < n; ++i) score[i] += w / weight_sum * probs[i];
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return sorted[a].id < sorted[b].id;
  });
  std::vector<std::string> removed;
  removed.reserve(count);
  for (std::size_t i = 0; i < count; ++i) removed.push_back(sorted[order[i]].id);
  return removed;
}

ReplaceResult replace(const std::vector<PropertySet>& table,
                      const std::vector<PropertySet>& pool, double fraction,
                      SelectionConfig config) {
  if (pool.empty()) throw ValidationError("replacement pool is empty");
  ReplaceResult result;
  result.removed = prune(table, fraction, config.weights, config.tau, config.seed);
  if (pool.size() < result.removed.size())
    throw ValidationError("pool of size " + std::to_string(pool.size()) +
                          " cannot replace " + std::to_string(result.removed.size()) +
                          " pruned instances");

  std::unordered_set<std::string> removed_ids(result.removed.begin(),
                                              result.removed.end());
  std::vector<PropertySet> remaining;
  remaining.reserve(table.size() - result.removed.size());
  for (const auto& ps : table)
    if (!removed_ids.count(ps.id)) remaining.push_back(ps);

  config.target = table.size();
  config.k = std::min(config.k, config.target);
  SelectionResult sel = select(std::move(remaining), pool, config);
  result.added = sel.chosen;
  return result;
}

BuildResult build_dataset(const Manifest& manifest,
                          const std::vector<PropertySet>& props, DatasetRole role,
                          std::size_t target_size, int per_class_base,
                          SelectionConfig config,
                          const std::vector<std::string>& extend_ids) {
  Manifest eligible;
  eligible.classes = manifest.classes;
  for (const auto& r : manifest.records) {
    const bool ok = role == DatasetRole::pretrain
                        ? r.split == Split::train
                        : (r.split == Split::val || r.split == Split::test);
    if (ok) eligible.records.push_back(r);
  }

  BuildResult result;
  if (extend_ids.empty()) {
    result.base = sample_class_balanced(eligible, per_class_base, config.seed);
  } else {
    result.base.ids = extend_ids;
  }
  if (target_size < result.base.ids.size())
    throw ValidationError("target size " + std::to_string(target_size) +
                          " is smaller than the base of " +
                          std::to_string(result.base.ids.size()));

  std::unordered_map<std::string, const VideoRecord*> record_by_id;
  for (const auto& r : eligible.records) record_by_id[r.id] = &r;
  std::unordered_map<std::string, const PropertySet*> props_by_id;
  for (const auto& ps : props) props_by_id[ps.id] = &ps;

  std::unordered_set<std::string> base_set(result.base.ids.begin(),
                                           result.base.ids.end());
  for (const auto& id : result.base.ids)
    if (!record_by_id.count(id))
      throw ValidationError("base id \"" + id + "\" not among eligible records");

  if (target_size > result.base.ids.size()) {
    std::vector<PropertySet> source, pool;
    for (const auto& id : result.base.ids) {
      auto it = props_by_id.find(id);
      if (it == props_by_id.end())
        throw ValidationError("no properties for base id \"" + id + "\"");
      source.push_back(*it->second);
    }
    for (const auto& r : eligible.records) {
      if (base_set.count(r.id)) continue;
      auto it = props_by_id.find(r.id);
      if (it == props_by_id.end())
        throw ValidationError("no properties for pool id \"" + r.id + "\"");
      pool.push_back(*it->second);
    }
    config.target = target_size;
    result.selection = select(std::move(source), std::move(pool), config);
  } else {
    result.selection.final_source_size = result.base.ids.size();
  }

  result.manifest.classes = manifest.classes;
  for (const auto& id : result.base.ids)
    result.manifest.records.push_back(*record_by_id.at(id));
  for (const auto& id : result.selection.chosen)
    result.manifest.records.push_back(*record_by_id.at(id));
  return result;
}

}  // namespace egocurate
