#include "egocurate/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace egocurate {

FrameImage make_frame(int width, int height, int channels, float fill) {
  if (width < 1 || height < 1 || (channels != 1 && channels != 3))
    throw ValidationError("invalid frame shape");
  FrameImage f;
  f.width = width;
  f.height = height;
  f.channels = channels;
  f.pixels.assign(static_cast<std::size_t>(width) * height * channels, fill);
  return f;
}

FrameImage to_gray(const FrameImage& frame) {
  if (frame.channels == 1) return frame;
  FrameImage g = make_frame(frame.width, frame.height, 1);
  for (int y = 0; y < frame.height; ++y)
    for (int x = 0; x < frame.width; ++x)
      g.at(x, y) = 0.299f * frame.at(x, y, 0) + 0.587f * frame.at(x, y, 1) +
                   0.114f * frame.at(x, y, 2);
  return g;
}

FrameImage resize_bilinear(const FrameImage& frame, int new_width, int new_height) {
  if (new_width < 1 || new_height < 1)
    throw ValidationError("resize target must be at least 1x1");
  if (new_width == frame.width && new_height == frame.height) return frame;
  FrameImage out = make_frame(new_width, new_height, frame.channels);
  const double sx = static_cast<double>(frame.width) / new_width;
  const double sy = static_cast<double>(frame.height) / new_height;
  for (int y = 0; y < new_height; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(frame.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, frame.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < new_width; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(frame.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, frame.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < frame.channels; ++c) {
        const double top = (1 - wx) * frame.at(x0, y0, c) + wx * frame.at(x1, y0, c);
        const double bot = (1 - wx) * frame.at(x0, y1, c) + wx * frame.at(x1, y1, c);
        out.at(x, y, c) = static_cast<float>((1 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

FrameImage resize_to_area(const FrameImage& frame, int target_area) {
  if (target_area < 1) throw ValidationError("target area must be positive");
  const double scale = std::sqrt(static_cast<double>(target_area) /
                                 (static_cast<double>(frame.width) * frame.height));
  const int nw = std::max(1, static_cast<int>(std::lround(frame.width * scale)));
  const int nh = std::max(1, static_cast<int>(std::lround(frame.height * scale)));
  return resize_bilinear(frame, nw, nh);
}

double laplacian_variance(const FrameImage& frame) {
  const FrameImage g = frame.channels == 1 ? frame : to_gray(frame);
  if (g.width < 3 || g.height < 3)
    throw ValidationError("laplacian_variance: frame smaller than 3x3 (" +
                          std::to_string(g.width) + "x" + std::to_string(g.height) +
                          ")");
  const std::size_t count =
      static_cast<std::size_t>(g.width - 2) * (g.height - 2);
  double sum = 0;
  for (int y = 1; y < g.height - 1; ++y) {
    for (int x = 1; x < g.width - 1; ++x) {
      const double r = 4.0 * g.at(x, y) - g.at(x - 1, y) - g.at(x + 1, y) -
                       g.at(x, y - 1) - g.at(x, y + 1);
      sum += r;
    }
  }
  const double mean = sum / static_cast<double>(count);
  double var = 0;
  for (int y = 1; y < g.height - 1; ++y) {
    for (int x = 1; x < g.width - 1; ++x) {
      const double r = 4.0 * g.at(x, y) - g.at(x - 1, y) - g.at(x + 1, y) -
                       g.at(x, y - 1) - g.at(x, y + 1);
      const double d = r - mean;
      var += d * d;
    }
  }
  return var / static_cast<double>(count);
}

FrameImage load_frame(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw IoError("cannot read image " + path.string());
  if (img.channels() == 4) {
    cv::Mat rgb;
    cv::cvtColor(img, rgb, cv::COLOR_BGRA2BGR);
    img = rgb;
  }
  if (img.depth() != CV_8U) {
    cv::Mat b;
    img.convertTo(b, CV_8U);
    img = b;
  }
  FrameImage f = make_frame(img.cols, img.rows, img.channels() == 1 ? 1 : 3);
  for (int y = 0; y < img.rows; ++y) {
    for (int x = 0; x < img.cols; ++x) {
      if (f.channels == 1) {
        f.at(x, y) = img.at<uchar>(y, x) / 255.0f;
      } else {
        const auto& px = img.at<cv::Vec3b>(y, x);  // BGR
        f.at(x, y, 0) = px[2] / 255.0f;
        f.at(x, y, 1) = px[1] / 255.0f;
        f.at(x, y, 2) = px[0] / 255.0f;
      }
    }
  }
  return f;
}

void save_frame(const FrameImage& frame, const std::filesystem::path& path) {
  cv::Mat img(frame.height, frame.width, frame.channels == 1 ? CV_8UC1 : CV_8UC3);
  auto to_byte = [](float v) {
    return static_cast<uchar>(std::clamp(std::lround(v * 255.0f), 0l, 255l));
  };
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      if (frame.channels == 1) {
        img.at<uchar>(y, x) = to_byte(frame.at(x, y));
      } else {
        img.at<cv::Vec3b>(y, x) = cv::Vec3b(to_byte(frame.at(x, y, 2)),
                                            to_byte(frame.at(x, y, 1)),
                                            to_byte(frame.at(x, y, 0)));
      }
    }
  }
  if (!cv::imwrite(path.string(), img))
    throw IoError("cannot write image " + path.string());
}

}  // namespace egocurate
