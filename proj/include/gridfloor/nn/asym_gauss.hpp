#pragma once

namespace gridfloor::nn {

/// Asymmetric Gaussian: width sigma left of the mode, sigma * r right of it,
/// normalised by sqrt(2/pi) / (sigma (1 + r)) so the density integrates to 1.
double asym_gauss_pdf(double x, double mu, double sigma, double r);

/// -log pdf. Throws DomainError unless sigma > 0 and r > 0.
double asym_gauss_nll(double x, double mu, double sigma, double r);

struct NllGrad {
  double value;
  double d_mu;
  double d_sigma;
  double d_r;
};

NllGrad asym_gauss_nll_grad(double x, double mu, double sigma, double r);

}  // namespace gridfloor::nn
