#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "egocurate/common.hpp"
#include "egocurate/image.hpp"
#include "egocurate/manifest.hpp"

namespace egocurate {

inline constexpr int kMotionBins = 90;
inline constexpr double kFlowEpsilon = 0.1;  // pixels/frame; below this a pixel is static
inline constexpr int kHeatmapGrid = 16;
inline constexpr int kBlurResizeArea = 65536;
inline constexpr int kPoseDims = 42;

// (angle, magnitude): angle in [0, 2pi) with y up, magnitude in pixels/frame.
using MotionVector = std::array<double, 2>;

struct CameraMotionSummary {
  std::vector<MotionVector> frame_vectors;
  std::array<double, kMotionBins> histogram{};  // magnitude-weighted
  std::array<double, 2> resultant{};            // Cartesian mean of frame_vectors
  int frame_pair_count = 0;
};

struct BlurrinessSummary {
  double mean = 0;
  double std = 0;
};

struct LocationSummary {
  std::array<int, kHeatmapGrid * kHeatmapGrid> heatmap{};  // row-major, y*16+x
  std::array<double, 4> kde_vector{};  // mean cx, cy, width, height
  int detection_count = 0;
};

struct HandPoseVector {
  std::array<double, kPoseDims> keypoints{};
  double confidence = 0;
};

struct PropertySet {
  std::string id;
  std::optional<std::vector<double>> semantic;
  std::optional<CameraMotionSummary> motion;
  std::optional<BlurrinessSummary> blur;
  std::optional<LocationSummary> hand_loc;
  std::optional<LocationSummary> obj_loc;
  std::optional<HandPoseVector> pose;
};

// Dominant camera shift between two frames: Farneback dense flow, 90 angle
// bins weighted by magnitude, then the magnitude-weighted mean vector of the
// largest bin. All pixels below kFlowEpsilon -> (0, 0).
MotionVector frame_camera_motion(const FrameImage& prev, const FrameImage& next);

CameraMotionSummary video_motion_summary(const std::vector<MotionVector>& frame_vectors);

BlurrinessSummary video_blurriness(const std::vector<double>& per_frame_variance);

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double confidence = 0;
  std::string category;  // objects only

  double center_x() const { return 0.5 * (x1 + x2); }
  double center_y() const { return 0.5 * (y1 + y2); }
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
};

struct PoseDetection {
  std::array<double, kPoseDims> keypoints{};
  double confidence = 0;
};

struct FrameDetections {
  int frame_index = 0;
  std::vector<Box> hands;
  std::vector<Box> objects;
  std::vector<PoseDetection> poses;
};

struct VideoDetections {
  std::vector<FrameDetections> frames;
};

// Detection rows keyed by video id. Ids must resolve in the manifest when one
// is given; boxes must be normalized with x1<=x2, y1<=y2.
std::map<std::string, VideoDetections> ingest_detections(
    const std::filesystem::path& path, const Manifest* manifest);

std::optional<LocationSummary> summarize_locations(const std::vector<Box>& boxes);

// Highest-confidence pose per frame; feeds summarize_pose.
std::vector<PoseDetection> best_pose_per_frame(const VideoDetections& dets);

// Confidence-weighted mean of per-frame keypoint vectors.
std::optional<HandPoseVector> summarize_pose(const std::vector<PoseDetection>& poses);

// Motion + blurriness from the frames directory of one record. Frames are
// sampled at the target fps from fps_native by stride.
struct FrameProps {
  CameraMotionSummary motion;
  BlurrinessSummary blur;
};
FrameProps extract_frame_props(const VideoRecord& record, double fps_motion);

std::vector<PropertySet> load_props(const std::filesystem::path& path);
void write_props(const std::vector<PropertySet>& table,
                 const std::filesystem::path& path);

// Weight order of the unified criterion.
enum class Property {
  semantic = 0,
  hand_loc = 1,
  pose = 2,
  obj_loc = 3,
  motion = 4,
  blur = 5,
};
inline constexpr int kPropertyCount = 6;
inline constexpr std::array<Property, kPropertyCount> kAllProperties = {
    Property::semantic, Property::hand_loc, Property::pose,
    Property::obj_loc,  Property::motion,   Property::blur};

std::string property_name(Property p);
Property property_from_string(const std::string& name);

bool has_property(const PropertySet& ps, Property p);

// Raw KDE representation per video: semantic vector, location 4-vector, pose
// 42-vector, motion resultant, or blur mean (stds returned alongside).
struct PropertyRep {
  Matrix values;
  std::vector<double> blur_stds;  // only for Property::blur
};
PropertyRep property_rep(const std::vector<PropertySet>& table, Property p);

}  // namespace egocurate
