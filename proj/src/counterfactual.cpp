#include "egocurate/counterfactual.hpp"

#include <algorithm>
#include <cmath>

#include "egocurate/rng.hpp"

namespace egocurate {

std::string cf_strategy_name(CFStrategy s) {
  switch (s) {
    case CFStrategy::patch: return "patch";
    case CFStrategy::whole_frame: return "whole_frame";
    case CFStrategy::skipped: return "skipped";
  }
  return "skipped";
}

namespace {

struct PixelRect {
  int x0, y0, x1, y1;  // half-open
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

std::optional<PixelRect> box_to_rect(const Box& box, int width, int height) {
  int x0 = static_cast<int>(std::lround(box.x1 * width));
  int x1 = static_cast<int>(std::lround(box.x2 * width));
  int y0 = static_cast<int>(std::lround(box.y1 * height));
  int y1 = static_cast<int>(std::lround(box.y2 * height));
  x0 = std::clamp(x0, 0, width - 1);
  y0 = std::clamp(y0, 0, height - 1);
  x1 = std::clamp(x1, x0 + 1, width);
  y1 = std::clamp(y1, y0 + 1, height);
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  return PixelRect{x0, y0, x1, y1};
}

bool pose_dissimilar(const HandPoseVector& a, const HandPoseVector& b,
                     double threshold) {
  double dot = 0, na = 0, nb = 0;
  for (int i = 0; i < kPoseDims; ++i) {
    dot += a.keypoints[i] * b.keypoints[i];
    na += a.keypoints[i] * a.keypoints[i];
    nb += b.keypoints[i] * b.keypoints[i];
  }
  if (na == 0.0 || nb == 0.0) return false;  // cosine undefined, not eligible
  return dot / (std::sqrt(na) * std::sqrt(nb)) < threshold;
}

FrameImage crop(const FrameImage& frame, const PixelRect& r) {
  FrameImage out = make_frame(r.width(), r.height(), frame.channels);
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x)
      for (int c = 0; c < frame.channels; ++c)
        out.at(x, y, c) = frame.at(r.x0 + x, r.y0 + y, c);
  return out;
}

void paste(FrameImage& frame, const FrameImage& patch, const PixelRect& r) {
  for (int y = 0; y < r.height(); ++y)
    for (int x = 0; x < r.width(); ++x)
      for (int c = 0; c < frame.channels; ++c)
        frame.at(r.x0 + x, r.y0 + y, c) = patch.at(x, y, c);
}

}  // namespace

CFResult build_counterfactual(const std::vector<FrameImage>& frames,
                              const std::vector<std::optional<Box>>& hand_boxes,
                              const std::vector<std::optional<HandPoseVector>>& poses,
                              const std::vector<std::optional<int>>& frame_labels,
                              const CFConfig& cfg) {
  const std::size_t count = frames.size();
  if (count < 2)
    throw ValidationError("build_counterfactual: need at least 2 frames");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw ValidationError("build_counterfactual: alpha must be in (0,1)");
  auto sized = [&](const char* name, std::size_t got) {
    if (got != count)
      throw ValidationError(std::string("build_counterfactual: ") + name +
                            " length " + std::to_string(got) +
                            " does not match frame count " + std::to_string(count));
  };
  sized("hand_boxes", hand_boxes.size());
  sized("poses", poses.size());
  if (!frame_labels.empty()) sized("frame_labels", frame_labels.size());

  CFResult result;
  result.frames = frames;

  Rng rng(cfg.seed);
  const std::size_t n_mod =
      static_cast<std::size_t>(std::ceil(cfg.alpha * static_cast<double>(count)));
  std::vector<std::size_t> targets = rng.choose_indices(count, n_mod);
  std::sort(targets.begin(), targets.end());

  auto content_eligible = [&](std::size_t target, std::size_t donor) {
    if (donor == target) return false;
    if (poses[target] && poses[donor] &&
        pose_dissimilar(*poses[target], *poses[donor],
                        cfg.pose_dissimilarity_threshold))
      return true;
    if (!frame_labels.empty() && frame_labels[target] && frame_labels[donor] &&
        *frame_labels[target] != *frame_labels[donor])
      return true;
    return false;
  };

  for (std::size_t target : targets) {
    std::vector<std::size_t> patch_donors, frame_donors;
    const bool target_box_ok =
        hand_boxes[target] &&
        box_to_rect(*hand_boxes[target], frames[target].width,
                    frames[target].height);
    for (std::size_t donor = 0; donor < count; ++donor) {
      if (!content_eligible(target, donor)) continue;
      frame_donors.push_back(donor);
      if (target_box_ok && hand_boxes[donor] &&
          frames[donor].channels == frames[target].channels &&
          box_to_rect(*hand_boxes[donor], frames[donor].width,
                      frames[donor].height))
        patch_donors.push_back(donor);
    }

    CFModification mod;
    mod.index = static_cast<int>(target);
    if (!patch_donors.empty()) {
      const std::size_t donor = patch_donors[rng.below(patch_donors.size())];
      const auto src = box_to_rect(*hand_boxes[donor], frames[donor].width,
                                   frames[donor].height);
      const auto dst = box_to_rect(*hand_boxes[target], frames[target].width,
                                   frames[target].height);
      FrameImage region = crop(frames[donor], *src);
      region = resize_bilinear(region, dst->width(), dst->height());
      paste(result.frames[target], region, *dst);
      mod.strategy = CFStrategy::patch;
      mod.donor = static_cast<int>(donor);
    } else if (!frame_donors.empty()) {
      const std::size_t donor = frame_donors[rng.below(frame_donors.size())];
      result.frames[target] = frames[donor];
      mod.strategy = CFStrategy::whole_frame;
      mod.donor = static_cast<int>(donor);
    } else {
      mod.strategy = CFStrategy::skipped;
      mod.donor = -1;
    }
    result.log.push_back(mod);
  }
  return result;
}

}  // namespace egocurate
