#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gridfloor::trajfit {

/// Per-frame asymmetric-Gaussian position estimate.
struct FrameEstimate {
  double t = 0;
  double mu_x = 0, mu_y = 0;
  double sigma_x = 1, sigma_y = 1;
  double r_x = 1, r_y = 1;
};

/// How |a| is measured between frames.
///  ratio:      |a| = |v| / dt per consecutive pair (the published formula).
///  difference: |a| = |v_i - v_{i-1}| / dt_mid per consecutive triple, with
///              dt_mid the half-span (t_{i+1} - t_{i-1}) / 2.
enum class AccelMode { ratio, difference };

AccelMode accel_mode_from(std::string_view s);
std::string to_string(AccelMode mode);

/// Velocity (m/s) and acceleration (m/s^2) bounds.
struct RegParams {
  double c_v = 1.0;
  double c_a = 1.0;
  AccelMode accel = AccelMode::ratio;

  void validate() const;
};

struct FittedTrajectory {
  std::vector<double> t, x, y;
  double objective = 0;
  double initial_objective = 0;
  int iterations = 0;
};

struct Kinematics {
  std::vector<double> speed;  // |v| per consecutive pair
  std::vector<double> accel;  // n - 1 values (ratio) or n - 2 values (difference)
};

/// |v| = hypot(dx, dy) / dt for each consecutive pair, |a| per `mode`.
Kinematics kinematics(std::span<const double> x, std::span<const double> y,
                      std::span<const double> t, AccelMode mode = AccelMode::ratio);

inline constexpr double kLimitPercentile = 99.5;

/// c_v and c_a as the 99.5th percentiles (linear interpolation) of the
/// training-label kinematics.
RegParams calibrate_limits(std::span<const double> x, std::span<const double> y,
                           std::span<const double> t, AccelMode mode = AccelMode::ratio);

/// Linear-interpolated percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

double lambda_v(double v_abs, double c_v);
double lambda_a(double a_abs, double c_a);
double lambda_v_slope(double v_abs, double c_v);
double lambda_a_slope(double a_abs, double c_a);

/// Sum of per-frame log-likelihoods minus the summed lambda_v and lambda_a
/// penalties (lambda_v per pair, lambda_a per pair or triple by params.accel).
double objective(std::span<const double> x, std::span<const double> y,
                 std::span<const FrameEstimate> estimates, const RegParams& params);

/// Objective value with its gradient over (x, y).
double objective_grad(std::span<const double> x, std::span<const double> y,
                      std::span<const FrameEstimate> estimates, const RegParams& params,
                      std::span<double> grad_x, std::span<double> grad_y);

struct FitOptions {
  int max_iterations = 5000;
  double tolerance = 1e-8;  // |delta J| between accepted steps
  double max_move = 1.0;    // m per coordinate per step
  int window = 0;           // frames per window; 0 fits the whole run at once
};

/// Monotone gradient ascent from the per-frame means.
FittedTrajectory fit(std::span<const FrameEstimate> estimates, const RegParams& params,
                     const FitOptions& options = {});

}  // namespace gridfloor::trajfit
