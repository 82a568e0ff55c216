#include "gridfloor/ingest.hpp"

#include <algorithm>
#include <cmath>
#include "json.hpp"

#include "gridfloor/error.hpp"
#include "gridfloor/io.hpp"

namespace gridfloor::ingest {

using nlohmann::json;

NodeId parse_topic(std::string_view topic) {
  constexpr std::string_view prefix = "/imu_reader/";
  if (!topic.starts_with(prefix)) throw ParseError("bad topic '" + std::string(topic) + "'");
  auto parts = io::split(topic.substr(prefix.size()), '/');
  if (parts.size() != 2) throw ParseError("bad topic '" + std::string(topic) + "'");
  return NodeId{static_cast<int>(io::parse_long(parts[0])),
                static_cast<int>(io::parse_long(parts[1]))};
}

BatchMap parse_payload_log(std::span<const std::string> lines, const GridSpec& grid) {
  BatchMap out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto lineno = std::to_string(i + 1);
    if (io::trim(lines[i]).empty()) continue;
    BufferBatch batch;
    try {
      const auto j = json::parse(lines[i]);
      batch.node = parse_topic(j.at("topic").get<std::string>());
      batch.t = j.at("t").get<double>();
      for (const auto& row : j.at("samples")) {
        if (row.size() != kFeaturesPerNode) throw ParseError("sample needs 10 values");
        Measurement m;
        for (std::size_t k = 0; k < kFeaturesPerNode; ++k) m.values[k] = row.at(k).get<double>();
        batch.samples.push_back(m);
      }
    } catch (const json::exception& e) {
      throw ParseError("payload line " + lineno + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("payload line " + lineno + ": " + e.what());
    }
    if (!std::isfinite(batch.t)) throw ParseError("payload line " + lineno + ": non-finite time");
    if (!is_valid(grid, batch.node)) {
      throw InvalidNodeError("payload line " + lineno + ": unknown node " + to_string(batch.node));
    }
    out[batch.node].push_back(std::move(batch));
  }
  for (auto& [id, batches] : out) {
    std::stable_sort(batches.begin(), batches.end(),
                     [](const BufferBatch& a, const BufferBatch& b) { return a.t < b.t; });
  }
  return out;
}

std::vector<GroundTruthSample> parse_ground_truth_log(std::span<const std::string> lines) {
  std::vector<GroundTruthSample> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    GroundTruthSample g;
    try {
      const auto j = json::parse(lines[i]);
      g.t = j.at("t").get<double>();
      g.pos_mm = j.at("pos_mm").get<std::array<double, 3>>();
      g.rot_rad = j.at("rot_rad").get<std::array<double, 3>>();
    } catch (const json::exception& e) {
      throw ParseError("ground-truth line " + std::to_string(i + 1) + ": " + e.what());
    }
    if (!out.empty() && !(g.t > out.back().t)) {
      throw OrderingError("ground-truth line " + std::to_string(i + 1) +
                          ": timestamps must strictly increase");
    }
    out.push_back(g);
  }
  return out;
}

InterpolatedSeries interpolate_timestamps(std::span<const BufferBatch> batches, double rtt) {
  InterpolatedSeries out;
  if (batches.empty()) return out;
  out.node = batches.front().node;
  double prev = batches.front().t - rtt;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const auto& b = batches[i];
    if (i > 0 && !(b.t > batches[i - 1].t)) {
      throw OrderingError("node " + to_string(out.node) + ": batch times must strictly increase");
    }
    if (b.samples.empty()) {
      ++out.skipped_empty;
      prev = b.t;
      continue;
    }
    const double n = static_cast<double>(b.samples.size());
    const double step = (b.t - prev) / n;
    for (std::size_t j = 1; j <= b.samples.size(); ++j) {
      // The final element is pinned to the poll time itself.
      const double t = j == b.samples.size() ? b.t : prev + static_cast<double>(j) * step;
      out.items.push_back({b.samples[j - 1], t});
    }
    prev = b.t;
  }
  return out;
}

std::size_t nearest_index(std::span<const double> times, double t) {
  auto it = std::lower_bound(times.begin(), times.end(), t);
  if (it == times.begin()) return 0;
  if (it == times.end()) return times.size() - 1;
  const std::size_t hi = static_cast<std::size_t>(it - times.begin());
  const std::size_t lo = hi - 1;
  return (t - times[lo]) <= (times[hi] - t) ? lo : hi;
}

MergedSeries merge_with_ground_truth(const InterpolatedSeries& series,
                                     std::span<const GroundTruthSample> gt) {
  if (gt.empty()) throw MergeError("no ground-truth samples to merge with");
  std::vector<double> times(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) times[i] = gt[i].t;
  MergedSeries out;
  out.node = series.node;
  out.items.reserve(series.items.size());
  for (const auto& item : series.items) {
    const auto& g = gt[nearest_index(times, item.t)];
    out.items.push_back({item.m, {g.pos_mm[0] / 1000.0, g.pos_mm[1] / 1000.0}, item.t});
  }
  return out;
}

FrameDataset generate_frames(const GridSpec& grid, const std::map<NodeId, MergedSeries>& nodes) {
  const auto ids = all_nodes(grid);
  std::string missing;
  for (const auto& id : ids) {
    auto it = nodes.find(id);
    if (it == nodes.end() || it->second.items.empty()) missing += " " + to_string(id);
  }
  if (!missing.empty()) throw IncompleteGridError("nodes without observations:" + missing);

  std::vector<std::vector<double>> times(ids.size());
  std::vector<const MergedSeries*> series(ids.size());
  std::size_t ref = 0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    series[i] = &nodes.at(ids[i]);
    for (const auto& item : series[i]->items) times[i].push_back(item.t);
    // ids are in (strip, node) order, so strict < keeps the smallest id on ties.
    if (series[i]->items.size() < series[ref]->items.size()) ref = i;
    lo = std::max(lo, times[i].front());
    hi = std::min(hi, times[i].back());
  }

  FrameDataset ds;
  ds.grid = grid;
  const double n = static_cast<double>(ids.size());
  for (const auto& ref_item : series[ref]->items) {
    const double t_ref = ref_item.t;
    if (t_ref < lo || t_ref > hi) continue;
    Frame f;
    f.nodes.reserve(ids.size());
    double sx = 0, sy = 0, st = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& item = series[i]->items[nearest_index(times[i], t_ref)];
      f.nodes.push_back(item.m);
      sx += item.label.x;
      sy += item.label.y;
      st += item.t;
    }
    f.label = {sx / n, sy / n};
    f.t = st / n;
    // Averaged timestamps must keep increasing.
    if (!ds.frames.empty() && !(f.t > ds.frames.back().t)) continue;
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

FrameDataset build_dataset(const GridSpec& grid, std::span<const std::string> payload_lines,
                           std::span<const std::string> gt_lines, double rtt) {
  const auto batches = parse_payload_log(payload_lines, grid);
  const auto gt = parse_ground_truth_log(gt_lines);
  std::map<NodeId, MergedSeries> merged;
  for (const auto& [id, node_batches] : batches) {
    merged[id] = merge_with_ground_truth(interpolate_timestamps(node_batches, rtt), gt);
  }
  return generate_frames(grid, merged);
}

std::vector<std::string> dataset_header(const GridSpec& grid) {
  std::vector<std::string> header{"t", "y_x", "y_y"};
  header.reserve(3 + grid.node_count() * kFeaturesPerNode);
  for (const auto& id : all_nodes(grid)) {
    for (std::size_t k = 0; k < kFeaturesPerNode; ++k) {
      header.push_back("f_" + std::to_string(id.strip) + "_" + std::to_string(id.node) + "_" +
                       std::to_string(k));
    }
  }
  return header;
}

void write_dataset(const FrameDataset& ds, const std::filesystem::path& path) {
  const auto header = dataset_header(ds.grid);
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (const auto& f : ds.frames) {
    if (f.nodes.size() != static_cast<std::size_t>(ds.grid.node_count())) {
      throw SchemaError("frame has " + std::to_string(f.nodes.size()) + " nodes");
    }
    out += io::format_double(f.t) + ',' + io::format_double(f.label.x) + ',' +
           io::format_double(f.label.y);
    for (const auto& m : f.nodes) {
      for (double v : m.values) {
        out += ',';
        out += io::format_double(v);
      }
    }
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

FrameDataset read_dataset(const std::filesystem::path& path) {
  const auto table = io::read_csv(path);
  const auto& h = table.header;
  if (h.size() < 3 + kFeaturesPerNode || h[0] != "t" || h[1] != "y_x" || h[2] != "y_y" ||
      (h.size() - 3) % kFeaturesPerNode != 0) {
    throw SchemaError(path.string() + ": not a frame dataset header");
  }
  // Grid dimensions come from the last feature column name f_<s>_<n>_9.
  auto parts = io::split(h.back(), '_');
  if (parts.size() != 4 || parts[0] != "f") throw SchemaError(path.string() + ": bad column name");
  const auto grid = GridSpec::scaled(static_cast<int>(io::parse_long(parts[1])),
                                     static_cast<int>(io::parse_long(parts[2])));
  if (dataset_header(grid) != h) {
    throw SchemaError(path.string() + ": header does not match a " +
                      std::to_string(grid.n_strips) + "x" + std::to_string(grid.nodes_per_strip) +
                      " grid");
  }
  FrameDataset ds;
  ds.grid = grid;
  const std::size_t n_nodes = grid.node_count();
  for (const auto& row : table.rows) {
    Frame f;
    f.t = row[0];
    f.label = {row[1], row[2]};
    f.nodes.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) {
      for (std::size_t k = 0; k < kFeaturesPerNode; ++k) {
        f.nodes[i].values[k] = row[3 + i * kFeaturesPerNode + k];
      }
    }
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

}  // namespace gridfloor::ingest
