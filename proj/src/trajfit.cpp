#include "gridfloor/trajfit.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "gridfloor/error.hpp"
#include "gridfloor/nn/asym_gauss.hpp"

namespace gridfloor::trajfit {

void RegParams::validate() const {
  if (!(c_v > 0) || !(c_a > 0)) throw InputError("c_v and c_a must be positive");
}

AccelMode accel_mode_from(std::string_view s) {
  if (s == "ratio") return AccelMode::ratio;
  if (s == "difference") return AccelMode::difference;
  throw InputError("unknown acceleration mode '" + std::string(s) + "' (ratio or difference)");
}

std::string to_string(AccelMode mode) { return mode == AccelMode::ratio ? "ratio" : "difference"; }

Kinematics kinematics(std::span<const double> x, std::span<const double> y,
                      std::span<const double> t, AccelMode mode) {
  if (x.size() != y.size() || x.size() != t.size()) throw AlignmentError("kinematics inputs differ in length");
  if (x.size() < 2) throw InputError("kinematics needs at least two samples");
  Kinematics k;
  for (std::size_t i = 1; i < x.size(); ++i) {
    const double dt = t[i] - t[i - 1];
    if (!(dt > 0)) throw OrderingError("timestamps must strictly increase");
    const double v = std::hypot(x[i] - x[i - 1], y[i] - y[i - 1]) / dt;
    k.speed.push_back(v);
    if (mode == AccelMode::ratio) k.accel.push_back(v / dt);
  }
  if (mode == AccelMode::difference) {
    for (std::size_t i = 1; i + 1 < x.size(); ++i) {
      const double d1 = t[i] - t[i - 1], d2 = t[i + 1] - t[i];
      const double ax = (x[i + 1] - x[i]) / d2 - (x[i] - x[i - 1]) / d1;
      const double ay = (y[i + 1] - y[i]) / d2 - (y[i] - y[i - 1]) / d1;
      k.accel.push_back(std::hypot(ax, ay) / (0.5 * (d1 + d2)));
    }
  }
  return k;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("percentile of an empty list");
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

RegParams calibrate_limits(std::span<const double> x, std::span<const double> y,
                           std::span<const double> t, AccelMode mode) {
  if (x.size() < 3) throw CalibrationError("calibration needs at least three labelled frames");
  const auto k = kinematics(x, y, t, mode);
  RegParams p{percentile(k.speed, kLimitPercentile), percentile(k.accel, kLimitPercentile), mode};
  if (!(p.c_v > 0) || !(p.c_a > 0)) {
    throw CalibrationError("training labels never move; cannot derive velocity limits");
  }
  return p;
}

namespace {

// exp with a first-order continuation past e^600 so huge jumps stay finite and
// keep a usable slope; identical to exp below the cut.
constexpr double kExpCut = 600.0;

double safe_exp(double z) {
  return z <= kExpCut ? std::exp(z) : std::exp(kExpCut) * (1.0 + (z - kExpCut));
}

double safe_exp_slope(double z) { return std::exp(std::min(z, kExpCut)); }

}  // namespace

double lambda_v(double v_abs, double c_v) { return v_abs > c_v ? safe_exp(10.0 * (v_abs - c_v)) : 0.0; }

double lambda_v_slope(double v_abs, double c_v) {
  return v_abs > c_v ? 10.0 * safe_exp_slope(10.0 * (v_abs - c_v)) : 0.0;
}

double lambda_a(double a_abs, double c_a) {
  return -2.0 * c_a + (a_abs > c_a ? safe_exp(3.0 * a_abs) : safe_exp(2.0 * c_a + a_abs));
}

double lambda_a_slope(double a_abs, double c_a) {
  return a_abs > c_a ? 3.0 * safe_exp_slope(3.0 * a_abs) : safe_exp_slope(2.0 * c_a + a_abs);
}

namespace {

void check_aligned(std::span<const double> x, std::span<const double> y,
                   std::span<const FrameEstimate> est) {
  if (x.size() != est.size() || y.size() != est.size()) {
    throw AlignmentError("trajectory and estimates differ in length");
  }
}

}  // namespace

double objective(std::span<const double> x, std::span<const double> y,
                 std::span<const FrameEstimate> est, const RegParams& params) {
  check_aligned(x, y, est);
  double j = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto& e = est[i];
    j -= nn::asym_gauss_nll(x[i], e.mu_x, e.sigma_x, e.r_x);
    j -= nn::asym_gauss_nll(y[i], e.mu_y, e.sigma_y, e.r_y);
  }
  const bool ratio = params.accel == AccelMode::ratio;
  for (std::size_t i = 1; i < est.size(); ++i) {
    const double dt = est[i].t - est[i - 1].t;
    const double v = std::hypot(x[i] - x[i - 1], y[i] - y[i - 1]) / dt;
    j -= lambda_v(v, params.c_v);
    if (ratio) j -= lambda_a(v / dt, params.c_a);
  }
  if (!ratio) {
    for (std::size_t i = 1; i + 1 < est.size(); ++i) {
      const double d1 = est[i].t - est[i - 1].t, d2 = est[i + 1].t - est[i].t;
      const double ax = (x[i + 1] - x[i]) / d2 - (x[i] - x[i - 1]) / d1;
      const double ay = (y[i + 1] - y[i]) / d2 - (y[i] - y[i - 1]) / d1;
      j -= lambda_a(std::hypot(ax, ay) / (0.5 * (d1 + d2)), params.c_a);
    }
  }
  return j;
}

double objective_grad(std::span<const double> x, std::span<const double> y,
                      std::span<const FrameEstimate> est, const RegParams& params,
                      std::span<double> gx, std::span<double> gy) {
  check_aligned(x, y, est);
  double j = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const auto& e = est[i];
    const auto nx = nn::asym_gauss_nll_grad(x[i], e.mu_x, e.sigma_x, e.r_x);
    const auto ny = nn::asym_gauss_nll_grad(y[i], e.mu_y, e.sigma_y, e.r_y);
    j -= nx.value + ny.value;
    // d NLL / d x = -d NLL / d mu
    gx[i] = nx.d_mu;
    gy[i] = ny.d_mu;
  }
  const bool ratio = params.accel == AccelMode::ratio;
  for (std::size_t i = 1; i < est.size(); ++i) {
    const double dt = est[i].t - est[i - 1].t;
    const double dx = x[i] - x[i - 1], dy = y[i] - y[i - 1];
    const double dist = std::hypot(dx, dy);
    const double v = dist / dt;
    double slope = lambda_v_slope(v, params.c_v) / dt;
    j -= lambda_v(v, params.c_v);
    if (ratio) {
      const double a = v / dt;
      j -= lambda_a(a, params.c_a);
      slope += lambda_a_slope(a, params.c_a) / (dt * dt);
    }
    if (dist > 0) {
      const double ux = slope * dx / dist, uy = slope * dy / dist;
      gx[i] -= ux;
      gy[i] -= uy;
      gx[i - 1] += ux;
      gy[i - 1] += uy;
    }
  }
  if (!ratio) {
    for (std::size_t i = 1; i + 1 < est.size(); ++i) {
      const double d1 = est[i].t - est[i - 1].t, d2 = est[i + 1].t - est[i].t;
      const double half = 0.5 * (d1 + d2);
      const double ax = (x[i + 1] - x[i]) / d2 - (x[i] - x[i - 1]) / d1;
      const double ay = (y[i + 1] - y[i]) / d2 - (y[i] - y[i - 1]) / d1;
      const double norm = std::hypot(ax, ay);
      const double a = norm / half;
      j -= lambda_a(a, params.c_a);
      if (norm > 0) {
        // d a / d (ax, ay) = (ax, ay) / (norm * half); the zero vector gets the zero subgradient.
        const double s = lambda_a_slope(a, params.c_a) / (norm * half);
        const double ux = s * ax, uy = s * ay;
        gx[i + 1] -= ux / d2;
        gy[i + 1] -= uy / d2;
        gx[i] += ux * (1 / d2 + 1 / d1);
        gy[i] += uy * (1 / d2 + 1 / d1);
        gx[i - 1] -= ux / d1;
        gy[i - 1] -= uy / d1;
      }
    }
  }
  return j;
}

namespace {

// Monotone ascent on J along limited-memory BFGS directions (gradients only),
// with halving backtracking; falls back to the plain gradient direction with a
// fresh memory when the quasi-Newton direction finds no increase.
FittedTrajectory ascend(std::span<const FrameEstimate> est, const RegParams& params,
                        const FitOptions& opt, std::vector<double> x, std::vector<double> y) {
  constexpr std::size_t kMemory = 8;
  constexpr int kMaxHalvings = 80;
  const std::size_t n = est.size();
  std::vector<double> gx(n), gy(n), nx(n), ny(n), ngx(n), ngy(n);
  FittedTrajectory out;
  double j = objective_grad(x, y, est, params, gx, gy);
  if (!std::isfinite(j)) throw InputError("objective is not finite at the initial trajectory");
  out.initial_objective = j;

  // Curvature pairs over the stacked (x, y) vector, in ascent convention:
  // s = step, q = -(change in gradient of J).
  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;
  std::vector<double> dir(2 * n);
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  auto quasi_newton = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      dir[i] = gx[i];
      dir[n + i] = gy[i];
    }
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      const auto& [sk, qk] = memory[k];
      alpha[k] = dot(sk, dir) / dot(sk, qk);
      for (std::size_t i = 0; i < dir.size(); ++i) dir[i] -= alpha[k] * qk[i];
    }
    if (!memory.empty()) {
      const auto& [sk, qk] = memory.back();
      const double gamma = dot(sk, qk) / dot(qk, qk);
      for (auto& d : dir) d *= gamma;
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [sk, qk] = memory[k];
      const double beta = dot(qk, dir) / dot(sk, qk);
      for (std::size_t i = 0; i < dir.size(); ++i) dir[i] += (alpha[k] - beta) * sk[i];
    }
  };
  auto inf_norm = [](const std::vector<double>& v) {
    double m = 0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
  };
  auto line_search = [&](double& jn) {
    const double dn = inf_norm(dir);
    if (!(dn > 0) || !std::isfinite(dn)) return false;
    double step = std::min(1.0, opt.max_move / dn);
    for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) {
        nx[i] = x[i] + step * dir[i];
        ny[i] = y[i] + step * dir[n + i];
      }
      jn = objective_grad(nx, ny, est, params, ngx, ngy);
      if (std::isfinite(jn) && jn > j) return true;
    }
    return false;
  };

  int iter = 0;
  while (iter < opt.max_iterations) {
    double jn = 0;
    quasi_newton();
    bool accepted = !memory.empty() && line_search(jn);
    if (!accepted) {
      memory.clear();
      quasi_newton();
      const double gn = inf_norm(dir);
      if (!(gn > 0) || !std::isfinite(gn)) break;
      // Start the bare gradient step at the move cap.
      for (auto& d : dir) d *= opt.max_move / gn;
      accepted = line_search(jn);
    }
    if (!accepted) break;
    ++iter;
    std::vector<double> sk(2 * n), qk(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      sk[i] = nx[i] - x[i];
      sk[n + i] = ny[i] - y[i];
      qk[i] = gx[i] - ngx[i];
      qk[n + i] = gy[i] - ngy[i];
    }
    const double sq = dot(sk, qk);
    if (sq > 1e-12 * std::sqrt(dot(sk, sk) * dot(qk, qk)) && std::isfinite(sq)) {
      if (memory.size() == kMemory) memory.pop_front();
      memory.emplace_back(std::move(sk), std::move(qk));
    }
    const double dj = jn - j;
    x.swap(nx);
    y.swap(ny);
    gx.swap(ngx);
    gy.swap(ngy);
    j = jn;
    if (dj < opt.tolerance) break;
  }
  out.x = std::move(x);
  out.y = std::move(y);
  out.objective = j;
  out.iterations = iter;
  return out;
}

}  // namespace

FittedTrajectory fit(std::span<const FrameEstimate> est, const RegParams& params,
                     const FitOptions& opt) {
  params.validate();
  if (est.size() < 2) throw InputError("trajectory fit needs at least two estimates");
  for (std::size_t i = 1; i < est.size(); ++i) {
    if (!(est[i].t > est[i - 1].t)) throw OrderingError("estimate timestamps must strictly increase");
  }
  const std::size_t n = est.size();
  // Work relative to the first estimate so a shifted input takes the same
  // optimisation path; the objective only sees differences.
  const double ox = est[0].mu_x, oy = est[0].mu_y;
  std::vector<FrameEstimate> local(est.begin(), est.end());
  std::vector<double> mx(n), my(n), ts(n);
  for (std::size_t i = 0; i < n; ++i) {
    local[i].mu_x -= ox;
    local[i].mu_y -= oy;
    mx[i] = local[i].mu_x;
    my[i] = local[i].mu_y;
    ts[i] = est[i].t;
  }
  const double j_init = objective(mx, my, local, params);
  if (!std::isfinite(j_init)) throw InputError("objective is not finite at the initial trajectory");

  FittedTrajectory result;
  const auto window = static_cast<std::size_t>(std::max(0, opt.window));
  if (window >= 2 && n > window) {
    // Overlapping windows (25%), overlap averaged, then a global polish from
    // whichever of the blend and the initialisation scores higher.
    const std::size_t stride = std::max<std::size_t>(1, window - window / 4);
    std::vector<double> sx(n, 0.0), sy(n, 0.0), cnt(n, 0.0);
    for (std::size_t start = 0;; start += stride) {
      const std::size_t end = std::min(n, start + window);
      const std::size_t begin = end - std::min(window, end);
      auto sub = std::span<const FrameEstimate>(local).subspan(begin, end - begin);
      auto part = ascend(sub, params, opt, {mx.begin() + begin, mx.begin() + end},
                         {my.begin() + begin, my.begin() + end});
      for (std::size_t i = begin; i < end; ++i) {
        sx[i] += part.x[i - begin];
        sy[i] += part.y[i - begin];
        cnt[i] += 1.0;
      }
      if (end == n) break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      sx[i] /= cnt[i];
      sy[i] /= cnt[i];
    }
    const double j_blend = objective(sx, sy, local, params);
    result = std::isfinite(j_blend) && j_blend >= j_init ? ascend(local, params, opt, sx, sy)
                                                          : ascend(local, params, opt, mx, my);
  } else {
    result = ascend(local, params, opt, mx, my);
  }
  for (std::size_t i = 0; i < n; ++i) {
    result.x[i] += ox;
    result.y[i] += oy;
  }
  result.t = ts;
  result.initial_objective = j_init;
  return result;
}

}  // namespace gridfloor::trajfit
