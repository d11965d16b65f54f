#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "egocurate/image.hpp"
#include "egocurate/props.hpp"

namespace egocurate {

struct CFConfig {
  double alpha = 0.25;  // fraction of frames to modify
  double gamma = 0.5;   // contrastive margin (consumed by the loss)
  double pose_dissimilarity_threshold = 0.5;
  std::uint64_t seed = 0;
};

enum class CFStrategy { patch, whole_frame, skipped };

std::string cf_strategy_name(CFStrategy s);

struct CFModification {
  int index = 0;
  CFStrategy strategy = CFStrategy::skipped;
  int donor = -1;
};

struct CFResult {
  std::vector<FrameImage> frames;
  std::vector<CFModification> log;
};

// Picks ceil(alpha*L) frame indices and breaks their hand evidence: a donor
// frame with dissimilar pose (cosine below the threshold) or a different
// per-frame label supplies either its hand-box pixels (resized into the
// target's hand box) or, when boxes are unusable, the whole frame. Targets
// with no eligible donor are logged as skipped; untouched frames are copied
// bit-exactly.
CFResult build_counterfactual(const std::vector<FrameImage>& frames,
                              const std::vector<std::optional<Box>>& hand_boxes,
                              const std::vector<std::optional<HandPoseVector>>& poses,
                              const std::vector<std::optional<int>>& frame_labels,
                              const CFConfig& cfg);

}  // namespace egocurate
