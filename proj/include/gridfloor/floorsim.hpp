#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gridfloor/grid.hpp"
#include "gridfloor/rng.hpp"

namespace gridfloor::sim {

struct SimConfig {
  GridSpec grid;
  double node_sample_period = 0.4;  // s
  double poll_rtt = 4.0;            // s, one full round-robin cycle per strip
  double poll_jitter_sd = 0.05;     // s
  int buffer_capacity = 32;
  double gt_rate = 200.0;  // Hz
  double robot_speed = 1.0;  // m/s
  std::uint64_t rng_seed = 0;
  double duration = 0.0;  // s; 0 means "until the last plan finishes"

  void validate() const;
};

struct TrajectoryPlan {
  std::vector<Point2> waypoints;
  double speed = 1.0;
  std::string label;

  double length() const;
  double duration() const { return length() / speed; }
};

/// Synthetic emitter/magnet response of a floor node.
struct SignalModel {
  double rssi_ref = -40.0;  // dBm at 1 m
  double path_loss_exp = 2.2;
  double rssi_noise_sd = 2.0;
  std::array<double, 3> mag_baseline{20.0, 0.0, 44.0};  // uT
  double dipole_strength = 5.0;                         // uT*m^3
  double mag_noise_sd = 0.3;
  double accel_noise_sd = 0.05;  // m/s^2
  double gyro_noise_sd = 0.5;    // deg/s

  void validate() const;
  static SignalModel noiseless();
};

struct PayloadRecord {
  NodeId node;
  double t = 0.0;
  std::vector<Measurement> samples;
};

struct EventLog {
  std::vector<PayloadRecord> payloads;  // in poll-time order
  std::vector<GroundTruthSample> ground_truth;
  std::size_t overflow_count = 0;
};

inline constexpr double kPlanMargin = 0.5;    // m from the hall walls
inline constexpr double kCoverageRadius = 2.0;  // m

/// Nine scripted runs: three horizontal sweeps, three vertical sweeps and three
/// diagonals. Throws CoverageError when the hall is too small or some node is
/// never approached within kCoverageRadius.
std::vector<TrajectoryPlan> plan_training_runs(const GridSpec& grid, double speed = 1.0);

TrajectoryPlan plan_random_run(const GridSpec& grid, std::uint64_t seed, int n_waypoints,
                               double speed = 1.0);

/// Largest distance from any node to the closest point the plans visit.
double coverage_radius(const GridSpec& grid, const std::vector<TrajectoryPlan>& plans);

/// Constant-speed piecewise-linear position; clamps outside [0, duration].
Point2 robot_position(const TrajectoryPlan& plan, double t);

Measurement sense(const SignalModel& model, Point2 node_pos, Point2 robot_pos, Rng& rng);

/// Discrete-event run of all plans back to back (the robot walks straight from
/// one plan's end to the next plan's start at that plan's speed).
EventLog simulate(const SimConfig& config, const std::vector<TrajectoryPlan>& plans,
                  const SignalModel& model);

std::string topic_for(NodeId id);
std::string payload_log_text(const EventLog& log);
std::string ground_truth_log_text(const EventLog& log);

}  // namespace gridfloor::sim
