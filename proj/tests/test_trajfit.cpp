#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "gridfloor/error.hpp"
#include "gridfloor/floorsim.hpp"
#include "gridfloor/ingest.hpp"
#include "gridfloor/io.hpp"
#include "gridfloor/nn/asym_gauss.hpp"
#include "gridfloor/rng.hpp"
#include "gridfloor/trajfit.hpp"

using namespace gridfloor;
using namespace gridfloor::trajfit;

namespace {

constexpr AccelMode kModes[] = {AccelMode::ratio, AccelMode::difference};

// Straight track along x at `speed`, frames every dt, tight estimates.
std::vector<FrameEstimate> straight_track(int n, double speed, double dt, double sigma = 0.05) {
  std::vector<FrameEstimate> e;
  for (int i = 0; i < n; ++i) e.push_back({i * dt, 2 + speed * i * dt, 3, sigma, sigma, 1, 1});
  return e;
}

std::vector<FrameEstimate> noisy_walk(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<FrameEstimate> e;
  double x = 5, y = 5, t = 0, heading = 0;
  for (int i = 0; i < n; ++i) {
    t += rng.uniform(0.2, 0.5);
    heading += rng.normal(0, 0.3);
    x += 0.3 * std::cos(heading);
    y += 0.3 * std::sin(heading);
    e.push_back({t, x + rng.normal(0, 0.4), y + rng.normal(0, 0.4), rng.uniform(0.2, 1.0),
                 rng.uniform(0.2, 1.0), rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)});
  }
  return e;
}

std::vector<double> column(std::span<const FrameEstimate> e, double FrameEstimate::*field) {
  std::vector<double> out;
  for (const auto& f : e) out.push_back(f.*field);
  return out;
}

double log_likelihood(std::span<const double> x, std::span<const double> y,
                      std::span<const FrameEstimate> e) {
  double s = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    s -= nn::asym_gauss_nll(x[i], e[i].mu_x, e[i].sigma_x, e[i].r_x);
    s -= nn::asym_gauss_nll(y[i], e[i].mu_y, e[i].sigma_y, e[i].r_y);
  }
  return s;
}

int velocity_violations(const FittedTrajectory& f, double c_v) {
  int n = 0;
  for (double v : kinematics(f.x, f.y, f.t).speed) n += v > c_v;
  return n;
}

}  // namespace

TEST_SUITE("trajfit") {

TEST_CASE("kinematics of a single pair") {
  const std::vector<double> x{0, 0.3}, y{0, 0.4}, t{0, 0.23};
  const auto k = kinematics(x, y, t);
  REQUIRE(k.speed.size() == 1);
  REQUIRE(k.accel.size() == 1);
  CHECK(k.speed[0] == doctest::Approx(2.17391).epsilon(1e-5));
  CHECK(k.accel[0] == doctest::Approx(9.4518).epsilon(1e-4));

  const std::vector<double> sx{1, 1}, sy{2, 2};
  const auto s = kinematics(sx, sy, t);
  CHECK(s.speed[0] == 0.0);
  CHECK(s.accel[0] == 0.0);
}

TEST_CASE("kinematics sequence lengths and errors") {
  const std::vector<double> x{0, 1, 1, 3}, y{0, 0, 1, 1}, t{0, 1, 2, 3};
  CHECK(kinematics(x, y, t).speed.size() == 3);
  CHECK(kinematics(x, y, t).accel.size() == 3);
  CHECK(kinematics(x, y, t, AccelMode::difference).accel.size() == 2);

  const std::vector<double> bad_t{0, 1, 1, 3};
  CHECK_THROWS_AS(kinematics(x, y, bad_t), OrderingError);
  const std::vector<double> short_y{0, 0, 1};
  CHECK_THROWS_AS(kinematics(x, short_y, t), AlignmentError);
  const std::vector<double> one{0};
  CHECK_THROWS_AS(kinematics(one, one, one), InputError);
}

TEST_CASE("difference acceleration is the velocity change over the half span") {
  // (0,0) -> (1,0) -> (1,1) at t = 0, 1, 2: velocity turns from (1,0) to (0,1).
  const std::vector<double> x{0, 1, 1}, y{0, 0, 1}, t{0, 1, 2};
  const auto k = kinematics(x, y, t, AccelMode::difference);
  CHECK(k.accel[0] == doctest::Approx(std::numbers::sqrt2));

  // Uneven spacing: (0,0) -> (2,0) in 1 s, then -> (3,0) in 0.5 s: same velocity.
  const std::vector<double> ux{0, 2, 3}, uy{0, 0, 0}, ut{0, 1, 1.5};
  CHECK(kinematics(ux, uy, ut, AccelMode::difference).accel[0] < 1e-12);

  // Constant velocity along a line gives zero everywhere.
  const std::vector<double> lx{0, 0.5, 1, 1.5}, ly{1, 1.25, 1.5, 1.75}, lt{0, 0.5, 1, 1.5};
  for (double a : kinematics(lx, ly, lt, AccelMode::difference).accel) CHECK(std::abs(a) < 1e-12);
}

TEST_CASE("acceleration mode names") {
  for (auto m : kModes) CHECK(accel_mode_from(to_string(m)) == m);
  CHECK_THROWS_AS(accel_mode_from("jerk"), InputError);
}

TEST_CASE("percentile interpolates linearly") {
  CHECK(percentile({3, 1, 2}, 50) == 2.0);
  CHECK(percentile({0, 10}, 25) == 2.5);
  CHECK(percentile({4}, 99.5) == 4.0);
  CHECK_THROWS_AS(percentile({}, 50), InputError);
}

TEST_CASE("calibration on a simulated straight run at 1 m/s") {
  sim::SimConfig cfg;
  cfg.rng_seed = 4;
  const auto& g = cfg.grid;
  sim::TrajectoryPlan plan{{{0.1 * g.hall_length, 0.5 * g.hall_width}, {0.9 * g.hall_length, 0.5 * g.hall_width}},
                           1.0, "straight"};
  const auto log = sim::simulate(cfg, {plan}, sim::SignalModel{});
  auto lines = [](const std::string& text) {
    std::vector<std::string> out;
    for (auto l : io::split(text, '\n')) {
      if (!l.empty()) out.emplace_back(l);
    }
    return out;
  };
  const auto ds = ingest::build_dataset(g, lines(sim::payload_log_text(log)),
                                        lines(sim::ground_truth_log_text(log)), cfg.poll_rtt);
  REQUIRE(ds.frames.size() > 20);
  std::vector<double> x, y, t;
  for (const auto& f : ds.frames) {
    x.push_back(f.label.x);
    y.push_back(f.label.y);
    t.push_back(f.t);
  }
  const auto p = calibrate_limits(x, y, t);
  CHECK(p.c_v == doctest::Approx(1.0).epsilon(0.05));
  CHECK(p.c_a > 0);
  CHECK(p.accel == AccelMode::ratio);
  const auto k = kinematics(x, y, t);
  CHECK(p.c_v <= *std::max_element(k.speed.begin(), k.speed.end()));

  const auto d = calibrate_limits(x, y, t, AccelMode::difference);
  CHECK(d.c_v == p.c_v);
  CHECK(d.accel == AccelMode::difference);
}

TEST_CASE("calibration rejects degenerate labels") {
  const std::vector<double> x(5, 1.0), y(5, 2.0), t{0, 1, 2, 3, 4};
  for (auto m : kModes) CHECK_THROWS_AS(calibrate_limits(x, y, t, m), CalibrationError);
  const std::vector<double> two{0, 1};
  CHECK_THROWS_AS(calibrate_limits(two, two, two), CalibrationError);
}

TEST_CASE("calibrated limits never exceed the observed maxima") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x, y, t;
    double tt = 0;
    for (int i = 0; i < 40; ++i) {
      tt += rng.uniform(0.1, 0.6);
      x.push_back(rng.uniform(0, 10));
      y.push_back(rng.uniform(0, 5));
      t.push_back(tt);
    }
    for (auto m : kModes) {
      const auto p = calibrate_limits(x, y, t, m);
      const auto k = kinematics(x, y, t, m);
      CHECK(p.c_v <= *std::max_element(k.speed.begin(), k.speed.end()));
      CHECK(p.c_a <= *std::max_element(k.accel.begin(), k.accel.end()));
    }
  }
}

TEST_CASE("velocity penalty values") {
  CHECK(lambda_v(0.99, 1.0) == 0.0);
  CHECK(lambda_v(1.1, 1.0) == doctest::Approx(std::exp(1.0)).epsilon(1e-9));
  CHECK(lambda_v(1.2, 1.0) == doctest::Approx(std::exp(2.0)).epsilon(1e-9));
  CHECK(lambda_v(1.2, 1.0) == doctest::Approx(7.38906).epsilon(1e-5));
}

TEST_CASE("acceleration penalty values") {
  CHECK(lambda_a(0.0, 0.5) == doctest::Approx(1.71828).epsilon(1e-5));
  CHECK(lambda_a(1.0, 0.5) == doctest::Approx(19.0855).epsilon(1e-5));
  for (double c : {0.1, 0.5, 1.0, 2.6, 10.0}) {
    const double at = lambda_a(c, c);
    const double above = lambda_a(std::nextafter(c, 1e9), c);
    CHECK(std::abs(at - (std::exp(3 * c) - 2 * c)) <= 1e-9 * std::exp(3 * c));
    CHECK(std::abs(above - at) <= 1e-9 * std::max(1.0, at));
  }
}

TEST_CASE("penalties are zero below the velocity bound and nondecreasing") {
  for (double c_v : {0.3, 1.0, 2.5}) {
    for (int i = 0; i <= 10000; ++i) CHECK(lambda_v(c_v * i / 10000.0, c_v) == 0.0);
  }
  for (double c : {0.5, 1.0, 2.6}) {
    double pv = -1, pa = -1e300;
    for (int i = 0; i <= 10000; ++i) {
      const double s = 4.0 * c * i / 10000.0;
      const double v = lambda_v(s, c), a = lambda_a(s, c);
      CHECK(v >= pv);
      CHECK(a >= pa);
      pv = v;
      pa = a;
    }
  }
}

TEST_CASE("penalties stay finite and increasing for enormous jumps") {
  double prev = 0;
  for (double a = 100; a < 1e5; a *= 1.5) {
    const double v = lambda_a(a, 1.0);
    CHECK(std::isfinite(v));
    CHECK(v > prev);
    CHECK(lambda_a_slope(a, 1.0) > 0);
    CHECK(std::isfinite(lambda_v(a, 1.0)));
    prev = v;
  }
}

TEST_CASE("objective is likelihood minus penalties") {
  const auto e = noisy_walk(12, 3);
  Rng rng(5);
  std::vector<double> x, y, t = column(e, &FrameEstimate::t);
  for (const auto& f : e) {
    x.push_back(f.mu_x + rng.normal(0, 0.3));
    y.push_back(f.mu_y + rng.normal(0, 0.3));
  }
  for (auto m : kModes) {
    const RegParams p{0.8, 1.5, m};
    const auto k = kinematics(x, y, t, m);
    double pen = 0;
    for (double v : k.speed) pen += lambda_v(v, p.c_v);
    for (double a : k.accel) pen += lambda_a(a, p.c_a);
    CHECK(objective(x, y, e, p) == doctest::Approx(log_likelihood(x, y, e) - pen).epsilon(1e-12));
  }
}

TEST_CASE("a 10 m jump lowers the objective") {
  const auto e = straight_track(10, 0.5, 0.23, 1.0);
  auto x = column(e, &FrameEstimate::mu_x), y = column(e, &FrameEstimate::mu_y);
  for (auto m : kModes) {
    const RegParams p{1.0, 1.0, m};
    const double base = objective(x, y, e, p);
    auto jumped = y;
    for (std::size_t i = 5; i < jumped.size(); ++i) jumped[i] += 10;
    CHECK(objective(x, jumped, e, p) < base);
  }
}

TEST_CASE("analytic gradient matches central differences") {
  for (auto m : kModes) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto e = noisy_walk(8, seed);
      Rng rng(seed + 100);
      std::vector<double> x, y;
      for (const auto& f : e) {
        x.push_back(f.mu_x + rng.normal(0, 0.5));
        y.push_back(f.mu_y + rng.normal(0, 0.5));
      }
      // High c_v keeps every pair off the velocity-penalty jump.
      const RegParams p{50.0, rng.uniform(0.5, 3.0), m};
      std::vector<double> gx(x.size()), gy(y.size());
      objective_grad(x, y, e, p, gx, gy);
      double scale = 0, worst = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        for (int axis = 0; axis < 2; ++axis) {
          auto& v = axis == 0 ? x : y;
          const double g = axis == 0 ? gx[i] : gy[i];
          const double h = 1e-6 * std::max(1.0, std::abs(v[i]));
          const double keep = v[i];
          v[i] = keep + h;
          const double up = objective(x, y, e, p);
          v[i] = keep - h;
          const double down = objective(x, y, e, p);
          v[i] = keep;
          const double fd = (up - down) / (2 * h);
          scale = std::max(scale, std::abs(fd));
          worst = std::max(worst, std::abs(g - fd));
        }
      }
      CHECK(worst / scale < 1e-5);
    }
  }
}

TEST_CASE("gradient of the velocity penalty matches above the bound") {
  const auto e = straight_track(6, 3.0, 0.25);
  auto x = column(e, &FrameEstimate::mu_x), y = column(e, &FrameEstimate::mu_y);
  y[3] += 0.2;
  const RegParams p{1.0, 5.0, AccelMode::difference};
  std::vector<double> gx(6), gy(6);
  objective_grad(x, y, e, p, gx, gy);
  const double h = 1e-7;
  for (std::size_t i = 0; i < 6; ++i) {
    auto up = x, down = x;
    up[i] += h;
    down[i] -= h;
    const double fd = (objective(up, y, e, p) - objective(down, y, e, p)) / (2 * h);
    CHECK(gx[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("fit never lowers the objective") {
  for (auto m : kModes) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      const auto e = noisy_walk(60, seed);
      const RegParams p{1.2, 2.0, m};
      const auto f = fit(e, p);
      CHECK(f.objective >= f.initial_objective);
      auto mx = column(e, &FrameEstimate::mu_x), my = column(e, &FrameEstimate::mu_y);
      CHECK(f.initial_objective == doctest::Approx(objective(mx, my, e, p)).epsilon(1e-12));
      CHECK(f.objective == doctest::Approx(objective(f.x, f.y, e, p)).epsilon(1e-12));
      CHECK(f.t == column(e, &FrameEstimate::t));
      CHECK(f.x.size() == e.size());
      CHECK(f.iterations <= FitOptions{}.max_iterations);
    }
  }
}

TEST_CASE("a physically plausible track is left in place") {
  // Straight line at half the velocity bound: no curvature, likelihood at its maximum.
  const auto e = straight_track(50, 0.5, 0.23);
  const RegParams p{1.0, 1.0, AccelMode::difference};
  const auto f = fit(e, p);
  for (std::size_t i = 0; i < e.size(); ++i) {
    CHECK(std::hypot(f.x[i] - e[i].mu_x, f.y[i] - e[i].mu_y) < 1e-3);
  }
}

TEST_CASE("the ratio acceleration drags a plausible track towards standstill") {
  // |v| / dt is never small for a moving robot, so this mode pulls every step shorter.
  const auto e = straight_track(50, 0.5, 0.23);
  const auto f = fit(e, {1.0, 1.0, AccelMode::ratio});
  const double fitted_len = std::hypot(f.x.back() - f.x.front(), f.y.back() - f.y.front());
  CHECK(fitted_len < 0.9 * (e.back().mu_x - e.front().mu_x));
}

TEST_CASE("a 10 m outlier is pulled back onto the track") {
  for (auto m : kModes) {
    for (double c_a : {0.5, 1.0, 2.6}) {
      auto e = straight_track(50, 0.5, 0.23);
      const double track_y = e[25].mu_y;
      e[25].mu_y += 10;
      e[25].sigma_x = e[25].sigma_y = 5;
      const RegParams p{1.0, c_a, m};
      const auto f = fit(e, p);
      CAPTURE(to_string(m));
      CAPTURE(c_a);
      const double before = 10.0;
      const double after = std::abs(f.y[25] - track_y);
      CHECK(after <= 0.1 * before);
      CHECK(velocity_violations(f, p.c_v) == 0);
      CHECK(f.objective >= f.initial_objective);
    }
  }
}

TEST_CASE("fit commutes with translation") {
  // Positions on a 1/1024 m lattice so the shifted inputs are exact in floating point;
  // the objective sees only differences, so the fit must move by the same offset.
  auto e = noisy_walk(40, 21);
  for (auto& f : e) {
    f.mu_x = std::round(f.mu_x * 1024) / 1024;
    f.mu_y = std::round(f.mu_y * 1024) / 1024;
  }
  auto shifted = e;
  for (auto& f : shifted) {
    f.mu_x += 3.0;
    f.mu_y -= 2.0;
  }
  for (auto m : kModes) {
    const RegParams p{1.0, 2.0, m};
    const auto a = fit(e, p), b = fit(shifted, p);
    CHECK(a.iterations == b.iterations);
    for (std::size_t i = 0; i < e.size(); ++i) {
      CHECK(std::abs(b.x[i] - a.x[i] - 3.0) < 1e-9);
      CHECK(std::abs(b.y[i] - a.y[i] + 2.0) < 1e-9);
    }
  }
}

TEST_CASE("windowed fit covers the run and improves the objective") {
  const auto e = noisy_walk(120, 8);
  FitOptions opt;
  opt.window = 30;
  for (auto m : kModes) {
    const RegParams p{1.2, 2.0, m};
    const auto f = fit(e, p, opt);
    CHECK(f.x.size() == e.size());
    CHECK(f.t == column(e, &FrameEstimate::t));
    CHECK(f.objective >= f.initial_objective);
    CHECK(fit(e, p, opt).x == f.x);
  }
}

TEST_CASE("a 500-frame run fits well within the time budget") {
  const auto e = noisy_walk(500, 77);
  for (auto m : kModes) {
    const auto start = std::chrono::steady_clock::now();
    const auto f = fit(e, {1.2, 2.0, m});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 30.0);
    CHECK(f.objective >= f.initial_objective);
  }
}

TEST_CASE("fit input errors") {
  const auto e = straight_track(5, 0.5, 0.23);
  const RegParams p{1.0, 1.0};
  CHECK_THROWS_AS(fit(std::span(e).first(1), p), InputError);
  auto unordered = e;
  unordered[2].t = unordered[1].t;
  CHECK_THROWS_AS(fit(unordered, p), OrderingError);
  auto nan = e;
  nan[3].mu_x = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(fit(nan, p), InputError);
  CHECK_THROWS_AS(fit(e, {0.0, 1.0}), InputError);
  CHECK_THROWS_AS(fit(e, {1.0, -1.0}), InputError);
}

}
