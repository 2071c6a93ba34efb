#ifndef CVECCHIA_MATERN_HPP_
#define CVECCHIA_MATERN_HPP_

namespace cvecchia {

/// Modified Bessel function of the second kind K_nu(x), nu >= 0, x > 0.
double bessel_k(double nu, double x);

/// exp(x) * K_nu(x); finite for large x where K_nu underflows.
double bessel_k_scaled(double nu, double x);

/// Normalized Matern correlation 2^{1-nu}/Gamma(nu) x^nu K_nu(x), equal to 1
/// at x = 0 and continuous there. Half-integer orders up to 2.5 use closed
/// forms; underflow returns 0.
double matern_function(double nu, double x);

}  // namespace cvecchia

#endif  // CVECCHIA_MATERN_HPP_
