#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "egocurate/kde.hpp"
#include "egocurate/manifest.hpp"
#include "egocurate/props.hpp"

namespace egocurate {

enum class SelectionMode { performance, balancedness };

std::string to_string(SelectionMode m);
SelectionMode selection_mode_from_string(const std::string& s);

// Best ablation weights, in (semantic, hand box, pose, object box, camera
// motion, blurriness) order.
inline constexpr std::array<double, kPropertyCount> kDefaultWeights = {5, 10, 8,
                                                                       8, 10, 5};

struct SelectionConfig {
  SelectionMode mode = SelectionMode::balancedness;
  double tau = 1.0;
  std::size_t k = 1;       // instances drawn per KDE refit
  std::size_t target = 0;  // m: final source size
  std::array<double, kPropertyCount> weights = kDefaultWeights;
  std::uint64_t seed = 0;
};

struct ChosenEntry {
  std::string id;
  double probability = 0;  // round-start unified sampling probability
};

struct RoundAudit {
  int round = 0;
  bool refit = false;
  std::vector<ChosenEntry> chosen;
};

struct SelectionResult {
  std::vector<std::string> chosen;
  std::vector<RoundAudit> rounds;
  std::size_t final_source_size = 0;
};

// softmax(+log_liks/tau) for performance, softmax(-log_liks/tau) for
// balancedness; max-subtracted and renormalized so the output sums to 1.
std::vector<double> sampling_probabilities(const std::vector<double>& log_liks,
                                           SelectionMode mode, double tau);

// Per-property KDE fitted on z-scored vectors (source statistics). Semantic
// vectors wider than 32 dims are PCA-reduced first; blurriness uses the
// per-point bandwidth variant. The normalization is baked into the model so
// extra-set queries arrive in raw space.
DensityModel fit_property_model(const std::vector<PropertySet>& table, Property p);

// One round of unified probabilities for each row of `extra`: per-property
// Eq.-2 probabilities combined by normalized weights.
std::vector<double> unified_probabilities(const std::vector<PropertySet>& source,
                                          const std::vector<PropertySet>& extra,
                                          const SelectionConfig& config);

// Algorithm 1: refit per-property KDEs on S, draw k pool instances from the
// unified distribution (sequential without replacement), move them into S,
// repeat until |S| reaches target or the pool is exhausted.
SelectionResult select(std::vector<PropertySet> source,
                       std::vector<PropertySet> extra,
                       const SelectionConfig& config);

// Removes the ceil(fraction*n) highest-scoring instances, where the score is
// the weighted sum of per-property softmax(+loo_log_lik/tau). Ties break on
// ascending id.
std::vector<std::string> prune(const std::vector<PropertySet>& table,
                               double fraction,
                               const std::array<double, kPropertyCount>& weights,
                               double tau, std::uint64_t seed);

struct ReplaceResult {
  std::vector<std::string> removed;
  std::vector<std::string> added;
};

// Prune, then select the same count from the pool so the set size is
// unchanged.
ReplaceResult replace(const std::vector<PropertySet>& table,
                      const std::vector<PropertySet>& pool, double fraction,
                      SelectionConfig config);

enum class DatasetRole { pretrain, test };

std::string to_string(DatasetRole r);
DatasetRole dataset_role_from_string(const std::string& s);

struct BuildResult {
  Manifest manifest;
  BalancedSample base;
  SelectionResult selection;
};

// Class-balanced base (or the ids of a previously built smaller set, for
// nested construction), then Algorithm 1 in the configured mode until
// target_size. Role picks the eligible splits: pretrain uses train, test uses
// val+test.
BuildResult build_dataset(const Manifest& manifest,
                          const std::vector<PropertySet>& props, DatasetRole role,
                          std::size_t target_size, int per_class_base,
                          SelectionConfig config,
                          const std::vector<std::string>& extend_ids = {});

}  // namespace egocurate
