#pragma once

// Independent reference constructions shared by the unit tests and the
// acceptance harness.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "gridfloor/ingest.hpp"
#include "gridfloor/nn/tensor.hpp"
#include "gridfloor/rng.hpp"

namespace gridfloor::oracle {

inline Measurement filled(double v) {
  Measurement m;
  m.values.fill(v);
  return m;
}

// Direct nested-loop SAME convolution; kernels laid out [kh][kw][cin][cout].
inline nn::Tensor naive_conv(const nn::Tensor& in, const std::vector<double>& k,
                             const std::vector<double>& b, int cout) {
  const int H = in.dim(0), W = in.dim(1), C = in.dim(2);
  nn::Tensor out({H, W, cout});
  for (int h = 0; h < H; ++h) {
    for (int w = 0; w < W; ++w) {
      for (int o = 0; o < cout; ++o) {
        double s = b[o];
        for (int dh = -1; dh <= 1; ++dh) {
          for (int dw = -1; dw <= 1; ++dw) {
            const int y = h + dh, x = w + dw;
            if (y < 0 || y >= H || x < 0 || x >= W) continue;
            for (int c = 0; c < C; ++c) {
              s += in.at(y, x, c) * k[(((dh + 1) * 3 + (dw + 1)) * C + c) * cout + o];
            }
          }
        }
        out.at(h, w, o) = s;
      }
    }
  }
  return out;
}

// Straight from the definition: scan every candidate, keep the first minimum.
inline std::size_t brute_nearest(const std::vector<double>& times, double t) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < times.size(); ++j) {
    if (std::abs(times[j] - t) < std::abs(times[best] - t)) best = j;
  }
  return best;
}

inline ingest::MergedSeries random_series(NodeId id, Rng& rng, std::size_t n, double start) {
  ingest::MergedSeries s{id, {}};
  double t = start;
  for (std::size_t i = 0; i < n; ++i) {
    t += rng.uniform(0.1, 1.0);
    s.items.push_back({filled(rng.uniform(-50, 50)), {rng.uniform(0, 4), rng.uniform(0, 2)}, t});
  }
  return s;
}

// Reference = shortest series (first in id order on ties); every node
// contributes its nearest item; trim to the common time range; average labels
// and times; keep strictly increasing frame times.
inline ingest::FrameDataset exhaustive_frames(const GridSpec& g,
                                              const std::map<NodeId, ingest::MergedSeries>& nodes) {
  const auto ids = all_nodes(g);
  NodeId ref = ids[0];
  for (auto id : ids) {
    if (nodes.at(id).items.size() < nodes.at(ref).items.size()) ref = id;
  }
  double lo = -1e300, hi = 1e300;
  for (auto id : ids) {
    lo = std::max(lo, nodes.at(id).items.front().t);
    hi = std::min(hi, nodes.at(id).items.back().t);
  }
  ingest::FrameDataset ds{g, {}};
  for (const auto& r : nodes.at(ref).items) {
    if (r.t < lo || r.t > hi) continue;
    ingest::Frame f;
    double sx = 0, sy = 0, st = 0;
    for (auto id : ids) {
      const auto& items = nodes.at(id).items;
      std::size_t best = 0;
      for (std::size_t j = 1; j < items.size(); ++j) {
        if (std::abs(items[j].t - r.t) < std::abs(items[best].t - r.t)) best = j;
      }
      f.nodes.push_back(items[best].m);
      sx += items[best].label.x;
      sy += items[best].label.y;
      st += items[best].t;
    }
    const double n = static_cast<double>(ids.size());
    f.label = {sx / n, sy / n};
    f.t = st / n;
    if (!ds.frames.empty() && f.t <= ds.frames.back().t) continue;
    ds.frames.push_back(f);
  }
  return ds;
}

}  // namespace gridfloor::oracle
