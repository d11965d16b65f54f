#include "egocurate/props.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <opencv2/video/tracking.hpp>

#include "egocurate/jsonl.hpp"

namespace egocurate {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kBinWidth = kTwoPi / kMotionBins;

cv::Mat to_cv_gray8(const FrameImage& frame) {
  const FrameImage g = frame.channels == 1 ? frame : to_gray(frame);
  cv::Mat m(g.height, g.width, CV_8UC1);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      m.at<uchar>(y, x) = static_cast<uchar>(
          std::clamp(std::lround(g.at(x, y) * 255.0f), 0l, 255l));
  return m;
}

int angle_bin(double angle) {
  int b = static_cast<int>(angle / kBinWidth);
  return std::min(b, kMotionBins - 1);
}

}  // namespace

MotionVector frame_camera_motion(const FrameImage& prev, const FrameImage& next) {
  if (prev.width != next.width || prev.height != next.height)
    throw ValidationError("frame_camera_motion: frame dimensions differ (" +
                          std::to_string(prev.width) + "x" + std::to_string(prev.height) +
                          " vs " + std::to_string(next.width) + "x" +
                          std::to_string(next.height) + ")");
  cv::Mat flow;
  cv::calcOpticalFlowFarneback(to_cv_gray8(prev), to_cv_gray8(next), flow,
                               0.5, 3, 15, 3, 5, 1.2, 0);

  std::array<double, kMotionBins> bin_weight{};
  std::array<double, kMotionBins> bin_x{};
  std::array<double, kMotionBins> bin_y{};
  for (int y = 0; y < flow.rows; ++y) {
    for (int x = 0; x < flow.cols; ++x) {
      const auto& v = flow.at<cv::Point2f>(y, x);
      const double fx = v.x;
      const double fy = v.y;
      const double mag = std::hypot(fx, fy);
      if (mag < kFlowEpsilon) continue;
      // Image y points down; report angles with y up.
      const int b = angle_bin(angle_mod_2pi(std::atan2(-fy, fx)));
      bin_weight[b] += mag;
      bin_x[b] += mag * fx;
      bin_y[b] += mag * fy;
    }
  }
  int best = -1;
  for (int b = 0; b < kMotionBins; ++b)
    if (bin_weight[b] > 0 && (best < 0 || bin_weight[b] > bin_weight[best]))
      best = b;
  if (best < 0) return {0.0, 0.0};
  const double mx = bin_x[best] / bin_weight[best];
  const double my = bin_y[best] / bin_weight[best];
  return {angle_mod_2pi(std::atan2(-my, mx)), std::hypot(mx, my)};
}

CameraMotionSummary video_motion_summary(const std::vector<MotionVector>& frame_vectors) {
  CameraMotionSummary s;
  s.frame_vectors = frame_vectors;
  s.frame_pair_count = static_cast<int>(frame_vectors.size());
  double sum_x = 0, sum_y = 0;
  for (const auto& [angle, mag] : frame_vectors) {
    s.histogram[angle_bin(angle_mod_2pi(angle))] += mag;
    sum_x += mag * std::cos(angle);
    sum_y += mag * std::sin(angle);
  }
  if (!frame_vectors.empty()) {
    s.resultant[0] = sum_x / static_cast<double>(frame_vectors.size());
    s.resultant[1] = sum_y / static_cast<double>(frame_vectors.size());
  }
  return s;
}

BlurrinessSummary video_blurriness(const std::vector<double>& per_frame_variance) {
  BlurrinessSummary b;
  if (per_frame_variance.empty()) return b;
  double mean = 0;
  for (double v : per_frame_variance) mean += v;
  mean /= static_cast<double>(per_frame_variance.size());
  double var = 0;
  for (double v : per_frame_variance) var += (v - mean) * (v - mean);
  b.mean = mean;
  b.std = std::sqrt(var / static_cast<double>(per_frame_variance.size()));
  return b;
}

namespace {

Box parse_box(const json& arr, bool with_category, const std::string& where) {
  const std::size_t want = with_category ? 6 : 5;
  if (!arr.is_array() || arr.size() != want)
    throw ValidationError(where + ": box must have " + std::to_string(want) +
                          " entries");
  Box b;
  b.x1 = arr[0].get<double>();
  b.y1 = arr[1].get<double>();
  b.x2 = arr[2].get<double>();
  b.y2 = arr[3].get<double>();
  b.confidence = arr[4].get<double>();
  if (with_category)
    b.category = arr[5].is_string() ? arr[5].get<std::string>()
                                    : arr[5].dump();
  if (b.x2 < b.x1 || b.y2 < b.y1)
    throw ValidationError(where + ": malformed box (x2<x1 or y2<y1)");
  if (b.x1 < 0 || b.y1 < 0 || b.x2 > 1 || b.y2 > 1)
    throw ValidationError(where + ": box coordinates must be normalized to [0,1]");
  return b;
}

}  // namespace

std::map<std::string, VideoDetections> ingest_detections(
    const std::filesystem::path& path, const Manifest* manifest) {
  std::set<std::string> known;
  if (manifest)
    for (const auto& r : manifest->records) known.insert(r.id);

  std::map<std::string, VideoDetections> out;
  for_each_jsonl(path, [&](std::size_t line_no, const json& obj) {
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::string id;
    try {
      id = obj.at("id").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (manifest && !known.count(id))
      throw ValidationError(where + ": unknown id \"" + id + "\"");
    FrameDetections fd;
    fd.frame_index = obj.value("frame_index", 0);
    const std::string rec_where = where + " (id " + id + ")";
    if (obj.contains("hands"))
      for (const auto& h : obj.at("hands"))
        fd.hands.push_back(parse_box(h, false, rec_where));
    if (obj.contains("objects"))
      for (const auto& o : obj.at("objects"))
        fd.objects.push_back(parse_box(o, true, rec_where));
    if (obj.contains("poses")) {
      for (const auto& p : obj.at("poses")) {
        if (!p.is_array() || p.size() != kPoseDims + 1)
          throw ValidationError(rec_where + ": pose must have " +
                                std::to_string(kPoseDims + 1) + " entries");
        PoseDetection pd;
        for (int i = 0; i < kPoseDims; ++i) pd.keypoints[i] = p[i].get<double>();
        pd.confidence = p[kPoseDims].get<double>();
        fd.poses.push_back(pd);
      }
    }
    out[id].frames.push_back(std::move(fd));
  });
  for (auto& [id, dets] : out)
    std::sort(dets.frames.begin(), dets.frames.end(),
              [](const FrameDetections& a, const FrameDetections& b) {
                return a.frame_index < b.frame_index;
              });
  return out;
}

std::optional<LocationSummary> summarize_locations(const std::vector<Box>& boxes) {
  if (boxes.empty()) return std::nullopt;
  LocationSummary s;
  double cx = 0, cy = 0, w = 0, h = 0;
  for (const auto& b : boxes) {
    const int ix = std::min(kHeatmapGrid - 1,
                            static_cast<int>(b.center_x() * kHeatmapGrid));
    const int iy = std::min(kHeatmapGrid - 1,
                            static_cast<int>(b.center_y() * kHeatmapGrid));
    ++s.heatmap[iy * kHeatmapGrid + ix];
    cx += b.center_x();
    cy += b.center_y();
    w += b.width();
    h += b.height();
  }
  const double n = static_cast<double>(boxes.size());
  s.kde_vector = {cx / n, cy / n, w / n, h / n};
  s.detection_count = static_cast<int>(boxes.size());
  return s;
}

std::vector<PoseDetection> best_pose_per_frame(const VideoDetections& dets) {
  std::vector<PoseDetection> out;
  for (const auto& fd : dets.frames) {
    if (fd.poses.empty()) continue;
    const auto* best = &fd.poses[0];
    for (const auto& p : fd.poses)
      if (p.confidence > best->confidence) best = &p;
    out.push_back(*best);
  }
  return out;
}

std::optional<HandPoseVector> summarize_pose(const std::vector<PoseDetection>& poses) {
  if (poses.empty()) return std::nullopt;
  HandPoseVector v;
  double weight_sum = 0, conf_sum = 0;
  for (const auto& p : poses) {
    weight_sum += p.confidence;
    conf_sum += p.confidence;
  }
  if (weight_sum > 0) {
    for (const auto& p : poses)
      for (int i = 0; i < kPoseDims; ++i)
        v.keypoints[i] += p.confidence / weight_sum * p.keypoints[i];
  } else {
    // All confidences zero: plain mean.
    for (const auto& p : poses)
      for (int i = 0; i < kPoseDims; ++i)
        v.keypoints[i] += p.keypoints[i] / static_cast<double>(poses.size());
  }
  v.confidence = conf_sum / static_cast<double>(poses.size());
  return v;
}

FrameProps extract_frame_props(const VideoRecord& record, double fps_motion) {
  if (!record.frames_path)
    throw ValidationError("record \"" + record.id + "\" has no frames_path");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(*record.frames_path)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::size_t stride = 1;
  if (record.fps_native > 0 && fps_motion > 0)
    stride = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(record.fps_native / fps_motion)));
  std::vector<std::filesystem::path> sampled;
  for (std::size_t i = 0; i < files.size(); i += stride) sampled.push_back(files[i]);
  if (sampled.size() < 2)
    throw ValidationError("record \"" + record.id +
                          "\": camera motion needs at least 2 sampled frames, got " +
                          std::to_string(sampled.size()));

  FrameProps props;
  std::vector<MotionVector> vectors;
  std::vector<double> blur_values;
  FrameImage prev = load_frame(sampled[0]);
  blur_values.push_back(laplacian_variance(resize_to_area(to_gray(prev), kBlurResizeArea)));
  for (std::size_t i = 1; i < sampled.size(); ++i) {
    FrameImage next = load_frame(sampled[i]);
    vectors.push_back(frame_camera_motion(prev, next));
    blur_values.push_back(
        laplacian_variance(resize_to_area(to_gray(next), kBlurResizeArea)));
    prev = std::move(next);
  }
  props.motion = video_motion_summary(vectors);
  props.blur = video_blurriness(blur_values);
  return props;
}

namespace {

json motion_to_json(const CameraMotionSummary& m) {
  json obj;
  json fv = json::array();
  for (const auto& [a, mag] : m.frame_vectors) fv.push_back(json::array({a, mag}));
  obj["frame_vectors"] = std::move(fv);
  obj["histogram"] = m.histogram;
  obj["resultant"] = m.resultant;
  obj["frame_pair_count"] = m.frame_pair_count;
  return obj;
}

CameraMotionSummary motion_from_json(const json& obj) {
  CameraMotionSummary m;
  for (const auto& v : obj.at("frame_vectors"))
    m.frame_vectors.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
  const auto& hist = obj.at("histogram");
  if (hist.size() != kMotionBins)
    throw ValidationError("motion histogram must have " +
                          std::to_string(kMotionBins) + " bins");
  for (int i = 0; i < kMotionBins; ++i) m.histogram[i] = hist[i].get<double>();
  m.resultant = {obj.at("resultant").at(0).get<double>(),
                 obj.at("resultant").at(1).get<double>()};
  m.frame_pair_count = obj.at("frame_pair_count").get<int>();
  return m;
}

json location_to_json(const LocationSummary& s) {
  json obj;
  obj["heatmap"] = s.heatmap;
  obj["kde_vector"] = s.kde_vector;
  obj["detection_count"] = s.detection_count;
  return obj;
}

LocationSummary location_from_json(const json& obj) {
  LocationSummary s;
  const auto& hm = obj.at("heatmap");
  if (hm.size() != s.heatmap.size())
    throw ValidationError("heatmap must have " + std::to_string(s.heatmap.size()) +
                          " cells");
  for (std::size_t i = 0; i < s.heatmap.size(); ++i) s.heatmap[i] = hm[i].get<int>();
  for (int i = 0; i < 4; ++i) s.kde_vector[i] = obj.at("kde_vector").at(i).get<double>();
  s.detection_count = obj.at("detection_count").get<int>();
  return s;
}

}  // namespace

std::vector<PropertySet> load_props(const std::filesystem::path& path) {
  std::vector<PropertySet> table;
  std::set<std::string> seen;
  for_each_jsonl(path, [&](std::size_t line_no, const json& obj) {
    const std::string where = path.string() + ":" + std::to_string(line_no);
    PropertySet ps;
    try {
      ps.id = obj.at("id").get<std::string>();
      if (obj.contains("semantic"))
        ps.semantic = obj.at("semantic").get<std::vector<double>>();
      if (obj.contains("motion")) ps.motion = motion_from_json(obj.at("motion"));
      if (obj.contains("blur")) {
        BlurrinessSummary b;
        b.mean = obj.at("blur").at("mean").get<double>();
        b.std = obj.at("blur").at("std").get<double>();
        ps.blur = b;
      }
      if (obj.contains("hand_loc"))
        ps.hand_loc = location_from_json(obj.at("hand_loc"));
      if (obj.contains("obj_loc"))
        ps.obj_loc = location_from_json(obj.at("obj_loc"));
      if (obj.contains("pose")) {
        HandPoseVector v;
        const auto& kp = obj.at("pose").at("keypoints");
        if (kp.size() != kPoseDims)
          throw ValidationError("pose keypoints must have " +
                                std::to_string(kPoseDims) + " entries");
        for (int i = 0; i < kPoseDims; ++i) v.keypoints[i] = kp[i].get<double>();
        v.confidence = obj.at("pose").at("confidence").get<double>();
        ps.pose = v;
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (!seen.insert(ps.id).second)
      throw ValidationError(where + ": duplicate id \"" + ps.id + "\"");
    table.push_back(std::move(ps));
  });
  return table;
}

void write_props(const std::vector<PropertySet>& table,
                 const std::filesystem::path& path) {
  JsonlWriter out(path);
  for (const auto& ps : table) {
    json obj;
    obj["id"] = ps.id;
    if (ps.semantic) obj["semantic"] = *ps.semantic;
    if (ps.motion) obj["motion"] = motion_to_json(*ps.motion);
    if (ps.blur) obj["blur"] = {{"mean", ps.blur->mean}, {"std", ps.blur->std}};
    if (ps.hand_loc) obj["hand_loc"] = location_to_json(*ps.hand_loc);
    if (ps.obj_loc) obj["obj_loc"] = location_to_json(*ps.obj_loc);
    if (ps.pose)
      obj["pose"] = {{"keypoints", ps.pose->keypoints},
                     {"confidence", ps.pose->confidence}};
    out.write(obj);
  }
  out.close();
}

std::string property_name(Property p) {
  switch (p) {
    case Property::semantic: return "semantic";
    case Property::hand_loc: return "hand_loc";
    case Property::pose: return "pose";
    case Property::obj_loc: return "obj_loc";
    case Property::motion: return "motion";
    case Property::blur: return "blur";
  }
  return "semantic";
}

Property property_from_string(const std::string& name) {
  for (Property p : kAllProperties)
    if (property_name(p) == name) return p;
  throw ValidationError("unknown property \"" + name + "\"");
}

bool has_property(const PropertySet& ps, Property p) {
  switch (p) {
    case Property::semantic: return ps.semantic.has_value();
    case Property::hand_loc: return ps.hand_loc.has_value();
    case Property::pose: return ps.pose.has_value();
    case Property::obj_loc: return ps.obj_loc.has_value();
    case Property::motion: return ps.motion.has_value();
    case Property::blur: return ps.blur.has_value();
  }
  return false;
}

PropertyRep property_rep(const std::vector<PropertySet>& table, Property p) {
  PropertyRep rep;
  for (const auto& ps : table) {
    if (!has_property(ps, p))
      throw ValidationError("property \"" + property_name(p) +
                            "\" missing for id \"" + ps.id + "\"");
    switch (p) {
      case Property::semantic:
        rep.values.push_row(*ps.semantic);
        break;
      case Property::hand_loc:
        rep.values.push_row({ps.hand_loc->kde_vector.begin(),
                             ps.hand_loc->kde_vector.end()});
        break;
      case Property::pose:
        rep.values.push_row({ps.pose->keypoints.begin(), ps.pose->keypoints.end()});
        break;
      case Property::obj_loc:
        rep.values.push_row({ps.obj_loc->kde_vector.begin(),
                             ps.obj_loc->kde_vector.end()});
        break;
      case Property::motion:
        rep.values.push_row({ps.motion->resultant[0], ps.motion->resultant[1]});
        break;
      case Property::blur:
        rep.values.push_row({ps.blur->mean});
        rep.blur_stds.push_back(ps.blur->std);
        break;
    }
  }
  return rep;
}

}  // namespace egocurate
