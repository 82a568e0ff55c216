#include "gridfloor/nn/asym_gauss.hpp"

#include <cmath>
#include <numbers>

#include "gridfloor/error.hpp"

namespace gridfloor::nn {

namespace {

// 0.5 * log(pi / 2)
const double kHalfLogPiOver2 = 0.5 * std::log(std::numbers::pi / 2.0);

void check_domain(double sigma, double r) {
  if (!(sigma > 0) || !(r > 0)) throw DomainError("asymmetric Gaussian needs sigma > 0 and r > 0");
}

}  // namespace

double asym_gauss_pdf(double x, double mu, double sigma, double r) {
  return std::exp(-asym_gauss_nll(x, mu, sigma, r));
}

double asym_gauss_nll(double x, double mu, double sigma, double r) {
  return asym_gauss_nll_grad(x, mu, sigma, r).value;
}

NllGrad asym_gauss_nll_grad(double x, double mu, double sigma, double r) {
  check_domain(sigma, r);
  const double d = x - mu;
  const double w = d <= 0 ? sigma : sigma * r;
  const double q = d * d / (w * w);
  NllGrad g;
  g.value = std::log(sigma) + std::log1p(r) + kHalfLogPiOver2 + 0.5 * q;
  g.d_mu = -d / (w * w);
  g.d_sigma = 1.0 / sigma - q / sigma;
  g.d_r = 1.0 / (1.0 + r) - (d <= 0 ? 0.0 : q / r);
  return g;
}

}  // namespace gridfloor::nn
