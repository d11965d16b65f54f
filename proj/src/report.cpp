#include "egocurate/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "egocurate/pca.hpp"

namespace egocurate {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out.good()) throw IoError("cannot write " + path.string());
  return out;
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
  out.close();
  if (out.fail()) throw IoError("write failed for " + path.string());
}

std::filesystem::path csv_twin(const std::filesystem::path& svg_path) {
  std::filesystem::path p = svg_path;
  p.replace_extension(".csv");
  return p;
}

std::string svg_header(int width, int height) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) + "\">\n";
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

void emit_polar_histogram(const CameraMotionSummary& summary,
                          const std::filesystem::path& svg_path) {
  const double bin_width = kTwoPi / kMotionBins;
  double max_weight = 0;
  for (double w : summary.histogram) max_weight = std::max(max_weight, w);

  {
    auto csv = open_out(csv_twin(svg_path));
    csv << "bin_start_angle,weight\n";
    for (int b = 0; b < kMotionBins; ++b)
      csv << format_double(b * bin_width) << ',' << format_double(summary.histogram[b])
          << '\n';
    close_out(csv, csv_twin(svg_path));
  }

  const double cx = 200, cy = 200, radius = 180;
  auto svg = open_out(svg_path);
  svg << svg_header(400, 400);
  svg << "<circle cx=\"200\" cy=\"200\" r=\"180\" fill=\"none\" stroke=\"#ccc\"/>\n";
  for (int b = 0; b < kMotionBins; ++b) {
    const double frac = max_weight > 0 ? summary.histogram[b] / max_weight : 0.0;
    const double angle = (b + 0.5) * bin_width;
    // SVG y grows downward; histogram angles are y-up.
    const double x2 = cx + radius * frac * std::cos(angle);
    const double y2 = cy - radius * frac * std::sin(angle);
    svg << "<line x1=\"" << format_double(cx) << "\" y1=\"" << format_double(cy)
        << "\" x2=\"" << format_double(x2) << "\" y2=\"" << format_double(y2)
        << "\" stroke=\"#336699\" stroke-width=\"3\"/>\n";
  }
  svg << "</svg>\n";
  close_out(svg, svg_path);
}

void emit_heatmap(const std::array<int, kHeatmapGrid * kHeatmapGrid>& heatmap,
                  const std::filesystem::path& svg_path) {
  {
    auto csv = open_out(csv_twin(svg_path));
    for (int y = 0; y < kHeatmapGrid; ++y) {
      for (int x = 0; x < kHeatmapGrid; ++x) {
        if (x) csv << ',';
        csv << heatmap[y * kHeatmapGrid + x];
      }
      csv << '\n';
    }
    close_out(csv, csv_twin(svg_path));
  }

  int max_count = 0;
  for (int v : heatmap) max_count = std::max(max_count, v);
  const int cell = 20;
  auto svg = open_out(svg_path);
  svg << svg_header(kHeatmapGrid * cell, kHeatmapGrid * cell);
  for (int y = 0; y < kHeatmapGrid; ++y) {
    for (int x = 0; x < kHeatmapGrid; ++x) {
      const double frac =
          max_count > 0
              ? static_cast<double>(heatmap[y * kHeatmapGrid + x]) / max_count
              : 0.0;
      const int shade = 255 - static_cast<int>(std::lround(frac * 255.0));
      svg << "<rect x=\"" << x * cell << "\" y=\"" << y * cell << "\" width=\""
          << cell << "\" height=\"" << cell << "\" fill=\"rgb(255," << shade << ','
          << shade << ")\"/>\n";
    }
  }
  svg << "</svg>\n";
  close_out(svg, svg_path);
}

namespace {

Matrix zscore_matrix(const Matrix& m) {
  double mean = 0;
  for (double v : m.data) mean += v;
  mean /= static_cast<double>(m.data.size());
  double var = 0;
  for (double v : m.data) var += (v - mean) * (v - mean);
  const double sigma = std::sqrt(var / static_cast<double>(m.data.size()));
  Matrix z(m.rows, m.cols);
  if (sigma < 1e-12) return z;
  for (std::size_t i = 0; i < m.data.size(); ++i) z.data[i] = (m.data[i] - mean) / sigma;
  return z;
}

void write_named_matrix(const Matrix& m, const std::vector<std::string>& names,
                        const std::filesystem::path& path,
                        const std::vector<int>* most_similar) {
  auto csv = open_out(path);
  csv << "dataset";
  for (const auto& n : names) csv << ',' << n;
  if (most_similar) csv << ",most_similar";
  csv << '\n';
  for (std::size_t r = 0; r < m.rows; ++r) {
    csv << names[r];
    for (std::size_t c = 0; c < m.cols; ++c) csv << ',' << format_double(m.at(r, c));
    if (most_similar) csv << ',' << names[(*most_similar)[r]];
    csv << '\n';
  }
  close_out(csv, path);
}

}  // namespace

SimilarityOutput compute_similarity_matrix(
    const SimilarityInput& input, const std::array<double, kPropertyCount>& weights) {
  const std::size_t n = input.names.size();
  if (n < 2)
    throw ValidationError("similarity matrix needs at least 2 datasets");
  double weight_sum = 0;
  for (double w : weights) weight_sum += w;
  if (weight_sum <= 0) throw ValidationError("weights must not be all zero");

  SimilarityOutput out;
  out.names = input.names;
  out.unified = Matrix(n, n);
  for (int pi = 0; pi < kPropertyCount; ++pi) {
    const double w = weights[pi];
    if (w == 0) continue;
    const Property p = kAllProperties[pi];
    auto mit = input.models.find(p);
    auto rit = input.reps.find(p);
    if (mit == input.models.end() || mit->second.size() != n ||
        rit == input.reps.end() || rit->second.size() != n)
      throw ValidationError("missing model for weighted property \"" +
                            property_name(p) + "\"");
    Matrix raw(n, n);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        raw.at(a, b) = ego_similarity(mit->second[a], rit->second[b]);
    Matrix z = zscore_matrix(raw);
    for (std::size_t i = 0; i < raw.data.size(); ++i)
      out.unified.data[i] += w / weight_sum * z.data[i];
    out.raw[p] = std::move(raw);
    out.zscored[p] = std::move(z);
  }

  out.most_similar.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    int best = -1;
    for (std::size_t b = 0; b < n; ++b) {
      if (b == a) continue;
      if (best < 0 || out.unified.at(a, b) > out.unified.at(a, best))
        best = static_cast<int>(b);
    }
    out.most_similar[a] = best;
  }
  return out;
}

void emit_similarity_matrix(const SimilarityOutput& sim,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_named_matrix(sim.unified, sim.names, dir / "unified.csv", &sim.most_similar);
  for (const auto& [p, raw] : sim.raw)
    write_named_matrix(raw, sim.names, dir / (property_name(p) + ".csv"), nullptr);
  for (const auto& [p, z] : sim.zscored)
    write_named_matrix(z, sim.names, dir / (property_name(p) + "_z.csv"), nullptr);

  // Shaded grid of the unified matrix.
  const std::size_t n = sim.names.size();
  double lo = sim.unified.data[0], hi = sim.unified.data[0];
  for (double v : sim.unified.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const int cell = 40;
  const auto svg_path = dir / "unified.svg";
  auto svg = open_out(svg_path);
  svg << svg_header(static_cast<int>(n) * cell, static_cast<int>(n) * cell);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double frac =
          hi > lo ? (sim.unified.at(r, c) - lo) / (hi - lo) : 0.0;
      const int shade = 255 - static_cast<int>(std::lround(frac * 255.0));
      svg << "<rect x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\""
          << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ','
          << shade << ",255)\"/>\n";
    }
  }
  svg << "</svg>\n";
  close_out(svg, svg_path);
}

namespace {

double convex_hull_area(std::vector<std::array<double, 2>> pts) {
  if (pts.size() < 3) return 0.0;
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return 0.0;
  auto cross = [](const std::array<double, 2>& o, const std::array<double, 2>& a,
                  const std::array<double, 2>& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  std::vector<std::array<double, 2>> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  const std::size_t lower = k + 1;
  for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
    hull[k++] = *it;
  }
  hull.resize(k - 1);
  double area = 0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % hull.size()];
    area += a[0] * b[1] - b[0] * a[1];
  }
  return std::abs(area) / 2.0;
}

}  // namespace

void emit_pca_scatter(const std::vector<PropertySet>& table, Property property,
                      const std::vector<std::string>& highlight_ids,
                      const std::filesystem::path& svg_path) {
  if (table.size() < 3)
    throw ValidationError("pca scatter needs at least 3 points, got " +
                          std::to_string(table.size()));
  PropertyRep rep = property_rep(table, property);
  Pca pca = fit_pca(rep.values, 2);
  Matrix proj = pca_project(pca, rep.values);
  std::set<std::string> highlight(highlight_ids.begin(), highlight_ids.end());

  std::vector<std::array<double, 2>> coords(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    coords[i][0] = proj.at(i, 0);
    coords[i][1] = proj.cols > 1 ? proj.at(i, 1) : 0.0;
  }

  {
    auto csv = open_out(csv_twin(svg_path));
    csv << "id,pc1,pc2,highlighted\n";
    for (std::size_t i = 0; i < table.size(); ++i)
      csv << table[i].id << ',' << format_double(coords[i][0]) << ','
          << format_double(coords[i][1]) << ','
          << (highlight.count(table[i].id) ? 1 : 0) << '\n';
    close_out(csv, csv_twin(svg_path));
  }
  {
    std::filesystem::path hull_path = svg_path;
    hull_path.replace_extension();
    hull_path += "_hull.csv";
    auto csv = open_out(hull_path);
    csv << "hull_area\n" << format_double(convex_hull_area(coords)) << '\n';
    close_out(csv, hull_path);
  }

  double lo_x = coords[0][0], hi_x = coords[0][0];
  double lo_y = coords[0][1], hi_y = coords[0][1];
  for (const auto& c : coords) {
    lo_x = std::min(lo_x, c[0]);
    hi_x = std::max(hi_x, c[0]);
    lo_y = std::min(lo_y, c[1]);
    hi_y = std::max(hi_y, c[1]);
  }
  const double span_x = hi_x > lo_x ? hi_x - lo_x : 1.0;
  const double span_y = hi_y > lo_y ? hi_y - lo_y : 1.0;
  auto px = [&](double v) { return 20.0 + 360.0 * (v - lo_x) / span_x; };
  auto py = [&](double v) { return 380.0 - 360.0 * (v - lo_y) / span_y; };

  auto svg = open_out(svg_path);
  svg << svg_header(400, 400);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (highlight.count(table[i].id)) continue;
    svg << "<circle cx=\"" << format_double(px(coords[i][0])) << "\" cy=\""
        << format_double(py(coords[i][1])) << "\" r=\"3\" fill=\"#888888\"/>\n";
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (!highlight.count(table[i].id)) continue;
    svg << "<circle cx=\"" << format_double(px(coords[i][0])) << "\" cy=\""
        << format_double(py(coords[i][1])) << "\" r=\"4\" fill=\"#cc2222\"/>\n";
  }
  svg << "</svg>\n";
  close_out(svg, svg_path);
}

namespace {

// Keypoints along the wrist -> middle fingertip chain, the ones the paper's
// contour figure tracks.
constexpr std::array<int, 5> kContourKeypoints = {0, 9, 10, 11, 12};

void emit_blur_curve(const std::vector<double>& means, const std::vector<double>& stds,
                     const std::filesystem::path& svg_path) {
  DensityModel model = fit_blurriness(means, stds);
  double lo = means[0], hi = means[0], max_std = 0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    lo = std::min(lo, means[i]);
    hi = std::max(hi, means[i]);
    max_std = std::max(max_std, stds[i]);
  }
  lo -= 3 * max_std + 1e-9;
  hi += 3 * max_std + 1e-9;
  const int samples = 200;
  std::vector<double> xs(samples), ys(samples);
  double peak = 0;
  for (int i = 0; i < samples; ++i) {
    xs[i] = lo + (hi - lo) * i / (samples - 1);
    ys[i] = std::exp(log_density(model, &xs[i], 1));
    peak = std::max(peak, ys[i]);
  }

  {
    auto csv = open_out(csv_twin(svg_path));
    csv << "blur_mean,density\n";
    for (int i = 0; i < samples; ++i)
      csv << format_double(xs[i]) << ',' << format_double(ys[i]) << '\n';
    close_out(csv, csv_twin(svg_path));
  }

  auto svg = open_out(svg_path);
  svg << svg_header(400, 200);
  svg << "<polyline fill=\"none\" stroke=\"#336699\" stroke-width=\"2\" points=\"";
  for (int i = 0; i < samples; ++i) {
    const double x = 20.0 + 360.0 * i / (samples - 1);
    const double y = 180.0 - (peak > 0 ? 160.0 * ys[i] / peak : 0.0);
    if (i) svg << ' ';
    svg << format_double(x) << ',' << format_double(y);
  }
  svg << "\"/>\n</svg>\n";
  close_out(svg, svg_path);
}

}  // namespace

std::vector<std::string> emit_report(const std::vector<DatasetReportInput>& datasets,
                                     const ReportOptions& options,
                                     const std::filesystem::path& out_dir) {
  if (datasets.empty()) throw ValidationError("report: no datasets given");
  for (const char* sub : {"polar", "heatmap", "blur", "pose", "similarity", "pca"})
    std::filesystem::create_directories(out_dir / sub);

  std::vector<std::string> emitted;
  auto note = [&](const std::filesystem::path& p) {
    emitted.push_back(std::filesystem::relative(p, out_dir).generic_string());
  };
  auto note_pair = [&](const std::filesystem::path& svg) {
    note(csv_twin(svg));
    note(svg);
  };

  for (const auto& ds : datasets) {
    // Camera-motion polar histogram (aggregate of per-video histograms).
    CameraMotionSummary agg;
    bool any_motion = false;
    for (const auto& ps : ds.props) {
      if (!ps.motion) continue;
      any_motion = true;
      for (int b = 0; b < kMotionBins; ++b)
        agg.histogram[b] += ps.motion->histogram[b];
    }
    if (any_motion) {
      const auto path = out_dir / "polar" / (ds.name + ".svg");
      emit_polar_histogram(agg, path);
      note_pair(path);
    }

    for (const auto& [prop, tag] :
         {std::pair{Property::hand_loc, "_hand"}, {Property::obj_loc, "_obj"}}) {
      std::array<int, kHeatmapGrid * kHeatmapGrid> sum{};
      bool any = false;
      for (const auto& ps : ds.props) {
        const auto& loc = prop == Property::hand_loc ? ps.hand_loc : ps.obj_loc;
        if (!loc) continue;
        any = true;
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += loc->heatmap[i];
      }
      if (any) {
        const auto path = out_dir / "heatmap" / (ds.name + tag + ".svg");
        emit_heatmap(sum, path);
        note_pair(path);
      }
    }

    std::vector<double> blur_means, blur_stds;
    for (const auto& ps : ds.props) {
      if (!ps.blur) continue;
      blur_means.push_back(ps.blur->mean);
      blur_stds.push_back(ps.blur->std);
    }
    if (!blur_means.empty()) {
      const auto path = out_dir / "blur" / (ds.name + ".svg");
      emit_blur_curve(blur_means, blur_stds, path);
      note_pair(path);
    }

    // Pose keypoint heatmaps for the contour chain.
    for (int kp : kContourKeypoints) {
      std::array<int, kHeatmapGrid * kHeatmapGrid> grid{};
      bool any = false;
      for (const auto& ps : ds.props) {
        if (!ps.pose) continue;
        any = true;
        const double x = std::clamp(ps.pose->keypoints[2 * kp], 0.0, 1.0);
        const double y = std::clamp(ps.pose->keypoints[2 * kp + 1], 0.0, 1.0);
        const int ix = std::min(kHeatmapGrid - 1, static_cast<int>(x * kHeatmapGrid));
        const int iy = std::min(kHeatmapGrid - 1, static_cast<int>(y * kHeatmapGrid));
        ++grid[iy * kHeatmapGrid + ix];
      }
      if (any) {
        const auto path =
            out_dir / "pose" / (ds.name + "_kp" + std::to_string(kp) + ".svg");
        emit_heatmap(grid, path);
        note_pair(path);
      }
    }

    for (Property p : kAllProperties) {
      bool all = !ds.props.empty();
      for (const auto& ps : ds.props) all = all && has_property(ps, p);
      if (!all || ds.props.size() < 3) continue;
      const auto path =
          out_dir / "pca" / (ds.name + "_" + property_name(p) + ".svg");
      emit_pca_scatter(ds.props, p, options.highlight_ids, path);
      note_pair(path);
      std::filesystem::path hull = path;
      hull.replace_extension();
      hull += "_hull.csv";
      note(hull);
    }
  }

  if (datasets.size() >= 2) {
    SimilarityInput input;
    for (const auto& ds : datasets) input.names.push_back(ds.name);
    for (int pi = 0; pi < kPropertyCount; ++pi) {
      if (options.weights[pi] == 0) continue;
      const Property p = kAllProperties[pi];
      // Semantic vectors share one PCA basis fitted on the union so every
      // dataset's model lives in the same space.
      std::optional<Pca> shared_pca;
      if (p == Property::semantic) {
        Matrix all;
        for (const auto& ds : datasets) {
          PropertyRep rep = property_rep(ds.props, p);
          for (std::size_t r = 0; r < rep.values.rows; ++r)
            all.push_row(std::vector<double>(rep.values.row(r),
                                             rep.values.row(r) + rep.values.cols));
        }
        if (all.cols > 32)
          shared_pca = fit_pca(all, std::min<std::size_t>(32, all.rows - 1));
      }
      for (const auto& ds : datasets) {
        PropertyRep rep = property_rep(ds.props, p);
        DensityModel model;
        if (p == Property::blur) {
          std::vector<double> means(rep.values.rows);
          for (std::size_t r = 0; r < rep.values.rows; ++r)
            means[r] = rep.values.at(r, 0);
          model = fit_blurriness(means, rep.blur_stds);
        } else if (shared_pca) {
          model = fit(pca_project(*shared_pca, rep.values));
          Pretransform pre;
          pre.mean = shared_pca->mean;
          pre.scale.assign(shared_pca->in_dim(), 1.0);
          pre.components = shared_pca->components;
          model.pretransform = std::move(pre);
        } else {
          model = fit(rep.values);
        }
        input.models[p].push_back(std::move(model));
        input.reps[p].push_back(std::move(rep.values));
      }
    }
    SimilarityOutput sim = compute_similarity_matrix(input, options.weights);
    emit_similarity_matrix(sim, out_dir / "similarity");
    note(out_dir / "similarity" / "unified.csv");
    note(out_dir / "similarity" / "unified.svg");
    for (const auto& [p, _] : sim.raw) {
      note(out_dir / "similarity" / (property_name(p) + ".csv"));
      note(out_dir / "similarity" / (property_name(p) + "_z.csv"));
    }
  }

  std::sort(emitted.begin(), emitted.end());
  const auto manifest_path = out_dir / "manifest.txt";
  auto out = open_out(manifest_path);
  for (const auto& p : emitted) out << p << '\n';
  close_out(out, manifest_path);
  emitted.push_back("manifest.txt");
  return emitted;
}

}  // namespace egocurate
