#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gridfloor/error.hpp"
#include "gridfloor/eval.hpp"
#include "gridfloor/io.hpp"

namespace gridfloor::eval {

namespace {

constexpr double kScale = 30.0;  // px per meter
constexpr const char* kPalette[] = {"#d62728", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string polyline(std::span<const Point2> pts, double height, const std::string& color, double width) {
  std::string s = "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"" + num(width) +
                  "\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (i) s += ' ';
    s += num(pts[i].x * kScale) + "," + num(height - pts[i].y * kScale);
  }
  return s + "\"/>\n";
}

// Green (weak) to white (strong).
std::string heat_color(double u) {
  u = std::clamp(u, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(0 + u * 255));
  const int g = static_cast<int>(std::lround(100 + u * 155));
  const int b = static_cast<int>(std::lround(0 + u * 255));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string trajectory_svg(const GridSpec& grid, std::span<const Point2> truth,
                           std::span<const ModelTrack> models) {
  const double w = grid.hall_length * kScale, h = grid.hall_width * kScale;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" +
                  num(h + 20 * (models.size() + 1)) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + num(w) + "\" height=\"" + num(h) +
       "\" fill=\"white\" stroke=\"black\"/>\n";
  for (const auto& id : all_nodes(grid)) {
    const auto p = node_position(grid, id);
    s += "<circle cx=\"" + num(p.x * kScale) + "\" cy=\"" + num(h - p.y * kScale) +
         "\" r=\"1.5\" fill=\"#bbbbbb\"/>\n";
  }
  s += polyline(truth, h, "black", 2.0);
  for (std::size_t m = 0; m < models.size(); ++m) {
    s += polyline(models[m].points, h, kPalette[m % std::size(kPalette)], 1.2);
  }
  s += "<text x=\"4\" y=\"" + num(h + 15) + "\" font-size=\"12\">ground truth</text>\n";
  for (std::size_t m = 0; m < models.size(); ++m) {
    s += "<text x=\"4\" y=\"" + num(h + 15 + 20 * (m + 1)) + "\" font-size=\"12\" fill=\"" +
         kPalette[m % std::size(kPalette)] + "\">" + models[m].name + "</text>\n";
  }
  return s + "</svg>\n";
}

std::string heatmap_svg(const ingest::FrameDataset& ds, std::span<const std::size_t> frame_indices) {
  const auto& grid = ds.grid;
  const auto rssi = static_cast<std::size_t>(Channel::rssi);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (auto fi : frame_indices) {
    if (fi >= ds.frames.size()) throw AlignmentError("heatmap frame index out of range");
    for (const auto& m : ds.frames[fi].nodes) {
      lo = std::min(lo, m.values[rssi]);
      hi = std::max(hi, m.values[rssi]);
    }
  }
  const double cw = grid.hall_length / grid.n_strips * kScale / 2;
  const double ch = grid.hall_width / grid.nodes_per_strip * kScale / 2;
  const double pw = cw * grid.n_strips, ph = ch * grid.nodes_per_strip;
  const int cols = 5;
  const int rows = static_cast<int>((frame_indices.size() + cols - 1) / cols);
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(cols * (pw + 10)) +
                  "\" height=\"" + num(std::max(1, rows) * (ph + 24)) + "\">\n";
  for (std::size_t k = 0; k < frame_indices.size(); ++k) {
    const auto& f = ds.frames[frame_indices[k]];
    const double ox = static_cast<double>(k % cols) * (pw + 10);
    const double oy = static_cast<double>(k / cols) * (ph + 24) + 14;
    s += "<text x=\"" + num(ox) + "\" y=\"" + num(oy - 3) + "\" font-size=\"10\">t=" + num(f.t) +
         " s</text>\n";
    for (std::size_t i = 0; i < f.nodes.size(); ++i) {
      const auto id = node_at(grid, i);
      const double u = hi > lo ? (f.nodes[i].values[rssi] - lo) / (hi - lo) : 0.0;
      s += "<rect class=\"cell\" x=\"" + num(ox + (id.strip - 1) * cw) + "\" y=\"" +
           num(oy + ph - id.node * ch) + "\" width=\"" + num(cw) + "\" height=\"" + num(ch) +
           "\" fill=\"" + heat_color(u) + "\"/>\n";
    }
    const double sx = pw / grid.hall_length, sy = ph / grid.hall_width;
    s += "<circle cx=\"" + num(ox + f.label.x * sx) + "\" cy=\"" + num(oy + ph - f.label.y * sy) +
         "\" r=\"3\" fill=\"none\" stroke=\"red\"/>\n";
  }
  return s + "</svg>\n";
}

void render_outputs(const ingest::FrameDataset& ds, std::span<const ModelTrack> models,
                    const std::filesystem::path& out_dir) {
  std::vector<Point2> truth;
  for (const auto& f : ds.frames) truth.push_back(f.label);
  std::vector<NamedReport> reports;
  for (const auto& m : models) {
    if (m.points.size() != truth.size()) {
      throw AlignmentError("track '" + m.name + "' has " + std::to_string(m.points.size()) +
                           " points for " + std::to_string(truth.size()) + " frames");
    }
    reports.push_back({m.name, summarize(frame_errors(truth, m.points))});
  }
  std::vector<std::size_t> picks;
  const std::size_t n_pick = std::min<std::size_t>(15, ds.frames.size());
  for (std::size_t k = 0; k < n_pick; ++k) picks.push_back(k * ds.frames.size() / n_pick);
  io::write_file_atomic(out_dir / "trajectory.svg", trajectory_svg(ds.grid, truth, models));
  io::write_file_atomic(out_dir / "heatmap.svg", heatmap_svg(ds, picks));
  io::write_file_atomic(out_dir / "comparison.csv", comparison_csv(reports));
}

}  // namespace gridfloor::eval
