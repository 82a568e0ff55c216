#include "gridfloor/floorsim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>

#include "gridfloor/error.hpp"
#include "gridfloor/io.hpp"

namespace gridfloor::sim {

void SimConfig::validate() const {
  grid.validate();
  if (!(node_sample_period > 0) || !(poll_rtt > 0) || !(gt_rate > 0) || !(robot_speed > 0)) {
    throw InputError("simulation periods, rates and speed must be positive");
  }
  if (!(poll_jitter_sd >= 0)) throw InputError("poll jitter must be non-negative");
  if (buffer_capacity < 1) throw InputError("buffer capacity must be at least 1");
  if (!(duration >= 0)) throw InputError("duration must be non-negative");
}

void SignalModel::validate() const {
  if (!(path_loss_exp > 0)) throw InputError("path loss exponent must be positive");
  if (!(rssi_noise_sd >= 0) || !(mag_noise_sd >= 0) || !(accel_noise_sd >= 0) ||
      !(gyro_noise_sd >= 0)) {
    throw InputError("noise standard deviations must be non-negative");
  }
}

SignalModel SignalModel::noiseless() {
  SignalModel m;
  m.rssi_noise_sd = 0;
  m.mag_noise_sd = 0;
  m.accel_noise_sd = 0;
  m.gyro_noise_sd = 0;
  return m;
}

double TrajectoryPlan::length() const {
  double total = 0;
  for (std::size_t i = 1; i < waypoints.size(); ++i) {
    total += std::hypot(waypoints[i].x - waypoints[i - 1].x, waypoints[i].y - waypoints[i - 1].y);
  }
  return total;
}

namespace {

// Serpentine of `lines` parallel passes. `horizontal` sweeps along x.
std::vector<Point2> serpentine(double lo, double hi, int lines, double a0, double a1,
                               bool horizontal) {
  std::vector<Point2> pts;
  const double step = (hi - lo) / lines;
  for (int i = 0; i < lines; ++i) {
    const double c = lo + (i + 0.5) * step;
    double from = (i % 2 == 0) ? a0 : a1;
    double to = (i % 2 == 0) ? a1 : a0;
    if (horizontal) {
      pts.push_back({from, c});
      pts.push_back({to, c});
    } else {
      pts.push_back({c, from});
      pts.push_back({c, to});
    }
  }
  return pts;
}

}  // namespace

std::vector<TrajectoryPlan> plan_training_runs(const GridSpec& grid, double speed) {
  grid.validate();
  if (grid.hall_length < 3.0 || grid.hall_width < 3.0) {
    throw CoverageError("hall must be at least 3x3 m for the scripted runs");
  }
  const double m = kPlanMargin;
  const double x0 = m, x1 = grid.hall_length - m;
  const double y0 = m, y1 = grid.hall_width - m;
  // Pass spacing stays below 3 m so every node is within 1.5 m of a pass.
  constexpr double kMaxPassSpacing = 3.0;

  std::vector<TrajectoryPlan> plans;
  const double hband = (y1 - y0) / 3.0;
  const int hlines = std::max(1, static_cast<int>(std::ceil(hband / kMaxPassSpacing)));
  for (int k = 0; k < 3; ++k) {
    plans.push_back({serpentine(y0 + k * hband, y0 + (k + 1) * hband, hlines, x0, x1, true),
                     speed, "train_h" + std::to_string(k + 1)});
  }
  const double vband = (x1 - x0) / 3.0;
  const int vlines = std::max(1, static_cast<int>(std::ceil(vband / kMaxPassSpacing)));
  for (int k = 0; k < 3; ++k) {
    plans.push_back({serpentine(x0 + k * vband, x0 + (k + 1) * vband, vlines, y0, y1, false),
                     speed, "train_v" + std::to_string(k + 1)});
  }
  const double xm = 0.5 * (x0 + x1);
  plans.push_back({{{x0, y0}, {x1, y1}}, speed, "train_d1"});
  plans.push_back({{{x0, y1}, {x1, y0}}, speed, "train_d2"});
  plans.push_back({{{x0, y0}, {xm, y1}, {x1, y0}}, speed, "train_d3"});

  const double radius = coverage_radius(grid, plans);
  if (radius > kCoverageRadius) {
    throw CoverageError("scripted runs leave a node " + io::format_double(radius) +
                        " m from the robot path");
  }
  return plans;
}

TrajectoryPlan plan_random_run(const GridSpec& grid, std::uint64_t seed, int n_waypoints,
                               double speed) {
  grid.validate();
  if (n_waypoints < 2) throw InputError("a random run needs at least two waypoints");
  Rng rng(seed);
  TrajectoryPlan plan;
  plan.speed = speed;
  plan.label = "random_" + std::to_string(seed);
  const double m = kPlanMargin;
  const double xhi = std::max(m, grid.hall_length - m);
  const double yhi = std::max(m, grid.hall_width - m);
  for (int i = 0; i < n_waypoints; ++i) {
    plan.waypoints.push_back({rng.uniform(m, xhi), rng.uniform(m, yhi)});
  }
  return plan;
}

double coverage_radius(const GridSpec& grid, const std::vector<TrajectoryPlan>& plans) {
  double worst = 0.0;
  for (const auto& id : all_nodes(grid)) {
    const auto p = node_position(grid, id);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& plan : plans) {
      for (std::size_t i = 1; i < plan.waypoints.size(); ++i) {
        const auto a = plan.waypoints[i - 1];
        const auto b = plan.waypoints[i];
        const double dx = b.x - a.x, dy = b.y - a.y;
        const double len2 = dx * dx + dy * dy;
        double u = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
        u = std::clamp(u, 0.0, 1.0);
        best = std::min(best, std::hypot(a.x + u * dx - p.x, a.y + u * dy - p.y));
      }
      if (plan.waypoints.size() == 1) {
        best = std::min(best, std::hypot(plan.waypoints[0].x - p.x, plan.waypoints[0].y - p.y));
      }
    }
    worst = std::max(worst, best);
  }
  return worst;
}

Point2 robot_position(const TrajectoryPlan& plan, double t) {
  if (plan.waypoints.empty()) throw InputError("plan has no waypoints");
  if (t <= 0 || plan.waypoints.size() == 1) return plan.waypoints.front();
  double remaining = t * plan.speed;
  for (std::size_t i = 1; i < plan.waypoints.size(); ++i) {
    const auto a = plan.waypoints[i - 1];
    const auto b = plan.waypoints[i];
    const double seg = std::hypot(b.x - a.x, b.y - a.y);
    if (remaining <= seg) {
      const double u = seg > 0 ? remaining / seg : 0.0;
      return {a.x + u * (b.x - a.x), a.y + u * (b.y - a.y)};
    }
    remaining -= seg;
  }
  return plan.waypoints.back();
}

Measurement sense(const SignalModel& model, Point2 node_pos, Point2 robot_pos, Rng& rng) {
  const double dx = robot_pos.x - node_pos.x;
  const double dy = robot_pos.y - node_pos.y;
  const double raw = std::hypot(dx, dy);
  const double d = std::max(raw, 0.1);
  Measurement m;
  auto& v = m.values;
  for (std::size_t i = 0; i < 3; ++i) v[i] = rng.normal(0.0, model.accel_noise_sd);
  for (std::size_t i = 3; i < 6; ++i) v[i] = rng.normal(0.0, model.gyro_noise_sd);
  const double dipole = model.dipole_strength / (d * d * d);
  const double ux = raw > 0 ? dx / raw : 0.0;
  const double uy = raw > 0 ? dy / raw : 0.0;
  v[6] = model.mag_baseline[0] + dipole * ux + rng.normal(0.0, model.mag_noise_sd);
  v[7] = model.mag_baseline[1] + dipole * uy + rng.normal(0.0, model.mag_noise_sd);
  v[8] = model.mag_baseline[2] + rng.normal(0.0, model.mag_noise_sd);
  v[9] = model.rssi_ref - 10.0 * model.path_loss_exp * std::log10(d) +
         rng.normal(0.0, model.rssi_noise_sd);
  return m;
}

namespace {

// Back-to-back plans flattened into one timeline.
class Route {
 public:
  explicit Route(const std::vector<TrajectoryPlan>& plans) {
    double t = 0;
    for (std::size_t p = 0; p < plans.size(); ++p) {
      const auto& plan = plans[p];
      if (plan.waypoints.size() < 2) throw InputError("plan '" + plan.label + "' needs 2 waypoints");
      if (!(plan.speed > 0)) throw InputError("plan '" + plan.label + "' needs positive speed");
      std::vector<Point2> pts;
      if (!segments_.empty()) pts.push_back(segments_.back().to);
      pts.insert(pts.end(), plan.waypoints.begin(), plan.waypoints.end());
      for (std::size_t i = 1; i < pts.size(); ++i) {
        const double len = std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y);
        const double dur = len / plan.speed;
        segments_.push_back({pts[i - 1], pts[i], t, dur});
        t += dur;
      }
    }
    duration_ = t;
  }

  double duration() const { return duration_; }

  // Position and heading (rad) at time t.
  std::pair<Point2, double> at(double t) {
    if (segments_.empty()) return {{0, 0}, 0};
    while (cursor_ + 1 < segments_.size() && t >= segments_[cursor_].t0 + segments_[cursor_].dur) {
      ++cursor_;
    }
    while (cursor_ > 0 && t < segments_[cursor_].t0) --cursor_;
    const auto& s = segments_[cursor_];
    const double u = s.dur > 0 ? std::clamp((t - s.t0) / s.dur, 0.0, 1.0) : 1.0;
    Point2 p{s.from.x + u * (s.to.x - s.from.x), s.from.y + u * (s.to.y - s.from.y)};
    return {p, std::atan2(s.to.y - s.from.y, s.to.x - s.from.x)};
  }

 private:
  struct Segment {
    Point2 from, to;
    double t0, dur;
  };
  std::vector<Segment> segments_;
  std::size_t cursor_ = 0;
  double duration_ = 0;
};

enum class EventKind : int { ground_truth = 0, sample = 1, poll = 2 };

struct Event {
  double t;
  EventKind kind;
  std::size_t node;
  std::uint64_t seq;

  // Min-heap on (t, kind, seq).
  bool operator>(const Event& o) const {
    if (t != o.t) return t > o.t;
    if (kind != o.kind) return kind > o.kind;
    return seq > o.seq;
  }
};

}  // namespace

EventLog simulate(const SimConfig& config, const std::vector<TrajectoryPlan>& plans,
                  const SignalModel& model) {
  config.validate();
  model.validate();
  if (plans.empty()) throw InputError("simulate needs at least one plan");
  Route route(plans);
  const double duration = config.duration > 0 ? config.duration : route.duration();
  const auto& grid = config.grid;
  const std::size_t n_nodes = grid.node_count();

  Rng rng(config.rng_seed);
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue;
  std::uint64_t seq = 0;

  std::vector<Point2> positions(n_nodes);
  std::vector<std::deque<Measurement>> buffers(n_nodes);
  std::vector<double> last_poll(n_nodes, -std::numeric_limits<double>::infinity());
  std::vector<long> poll_cycle(n_nodes, 0);
  std::vector<double> strip_phase(grid.n_strips);
  for (std::size_t i = 0; i < n_nodes; ++i) positions[i] = node_position(grid, node_at(grid, i));

  for (int s = 0; s < grid.n_strips; ++s) strip_phase[s] = rng.uniform(0.0, config.poll_rtt);

  const double slot = config.poll_rtt / grid.nodes_per_strip;
  // Cycle 0 polls one RTT after the strip starts, so every buffer, the first
  // included, spans about one RTT of samples.
  auto nominal_poll = [&](std::size_t i, long cycle) {
    const auto id = node_at(grid, i);
    return strip_phase[id.strip - 1] + (cycle + 1) * config.poll_rtt + (id.node - 1) * slot;
  };
  auto poll_time = [&](std::size_t i, long cycle) {
    const double t = nominal_poll(i, cycle) + rng.normal(0.0, config.poll_jitter_sd);
    return std::max(t, last_poll[i] + 1e-3);
  };
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const double start = nominal_poll(i, 0) - config.poll_rtt;
    queue.push({start + rng.uniform(0.0, config.node_sample_period), EventKind::sample, i, seq++});
  }
  for (std::size_t i = 0; i < n_nodes; ++i) {
    queue.push({poll_time(i, 0), EventKind::poll, i, seq++});
  }
  queue.push({0.0, EventKind::ground_truth, 0, seq++});

  EventLog log;
  const double gt_dt = 1.0 / config.gt_rate;
  std::uint64_t gt_index = 0;

  while (!queue.empty()) {
    const Event ev = queue.top();
    queue.pop();
    if (ev.t > duration) continue;
    switch (ev.kind) {
      case EventKind::ground_truth: {
        auto [pos, heading] = route.at(ev.t);
        GroundTruthSample g;
        g.t = ev.t;
        g.pos_mm = {pos.x * 1000.0, pos.y * 1000.0, 0.0};
        g.rot_rad = {0.0, 0.0, heading};
        log.ground_truth.push_back(g);
        ++gt_index;
        queue.push({gt_index * gt_dt, EventKind::ground_truth, 0, seq++});
        break;
      }
      case EventKind::sample: {
        auto [pos, heading] = route.at(ev.t);
        auto& buf = buffers[ev.node];
        buf.push_back(sense(model, positions[ev.node], pos, rng));
        if (buf.size() > static_cast<std::size_t>(config.buffer_capacity)) {
          buf.pop_front();
          ++log.overflow_count;
        }
        queue.push({ev.t + config.node_sample_period, EventKind::sample, ev.node, seq++});
        break;
      }
      case EventKind::poll: {
        auto& buf = buffers[ev.node];
        log.payloads.push_back({node_at(grid, ev.node), ev.t, {buf.begin(), buf.end()}});
        buf.clear();
        last_poll[ev.node] = ev.t;
        const long next = ++poll_cycle[ev.node];
        queue.push({poll_time(ev.node, next), EventKind::poll, ev.node, seq++});
        break;
      }
    }
  }
  return log;
}

std::string topic_for(NodeId id) {
  return "/imu_reader/" + std::to_string(id.strip) + "/" + std::to_string(id.node);
}

std::string payload_log_text(const EventLog& log) {
  std::string out;
  for (const auto& rec : log.payloads) {
    out += "{\"topic\":\"" + topic_for(rec.node) + "\",\"t\":" + io::format_double(rec.t) +
           ",\"samples\":[";
    for (std::size_t s = 0; s < rec.samples.size(); ++s) {
      if (s) out += ',';
      out += '[';
      const auto& vals = rec.samples[s].values;
      for (std::size_t k = 0; k < vals.size(); ++k) {
        if (k) out += ',';
        out += io::format_double(vals[k]);
      }
      out += ']';
    }
    out += "]}\n";
  }
  return out;
}

std::string ground_truth_log_text(const EventLog& log) {
  std::string out;
  auto vec3 = [](const std::array<double, 3>& v) {
    return "[" + io::format_double(v[0]) + "," + io::format_double(v[1]) + "," +
           io::format_double(v[2]) + "]";
  };
  for (const auto& g : log.ground_truth) {
    out += "{\"t\":" + io::format_double(g.t) + ",\"pos_mm\":" + vec3(g.pos_mm) +
           ",\"rot_rad\":" + vec3(g.rot_rad) + "}\n";
  }
  return out;
}

}  // namespace gridfloor::sim
