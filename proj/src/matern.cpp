#include "cvecchia/matern.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "cvecchia/errors.hpp"

namespace cvecchia {

namespace {

constexpr double kEps = 1e-16;
constexpr int kMaxIter = 10000;

// Taylor coefficients of 1/Gamma(z) about 0: 1/Gamma(z) = sum_k c[k] z^k.
constexpr std::array<double, 19> kRecipGamma = {
    0.0,
    1.0,
    0.5772156649015328606,
    -0.6558780715202538811,
    -0.04200263503409523553,
    0.1665386113822914895,
    -0.04219773455554433675,
    -0.009621971527876973562,
    0.007218943246663099542,
    -0.001165167591859065112,
    -0.0002152416741149509728,
    0.0001280502823881161862,
    -0.00002013485478078823866,
    -1.250493482142670657e-6,
    1.133027231981695882e-6,
    -2.056338416977607103e-7,
    6.116095104481415818e-9,
    5.00200764446922293e-9,
    -1.181274570487020145e-9,
};

// gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu), gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2
// for |mu| <= 1/2, from the even/odd parts of the 1/Gamma series. Avoids the
// cancellation of the direct difference near mu = 0.
void temme_gammas(double mu, double& gam1, double& gam2, double& gampl, double& gammi) {
  // 1/Gamma(1+z) = sum_{k>=1} c[k] z^{k-1}.
  double even = 0.0;  // sum over odd k: c[k] mu^{k-1}
  double odd = 0.0;   // sum over even k: c[k] mu^{k-2}
  const double mu2 = mu * mu;
  double pw = 1.0;
  for (std::size_t k = 1; k < kRecipGamma.size(); k += 2) {
    even += kRecipGamma[k] * pw;
    if (k + 1 < kRecipGamma.size()) odd += kRecipGamma[k + 1] * pw;
    pw *= mu2;
  }
  gam1 = -odd;
  gam2 = even;
  gampl = gam2 - mu * gam1;
  gammi = gam2 + mu * gam1;
}

// K_mu(x) and K_{mu+1}(x) for |mu| <= 1/2. When `scaled`, both are multiplied
// by exp(x).
void bessel_k_pair(double mu, double x, bool scaled, double& kmu, double& kmu1) {
  const double mu2 = mu * mu;
  const double xi = 1.0 / x;
  if (x < 2.0) {
    // Temme's series.
    const double x2 = 0.5 * x;
    const double pimu = std::numbers::pi * mu;
    const double fact = std::fabs(pimu) < kEps ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(x2);
    double e = mu * d;
    const double fact2 = std::fabs(e) < kEps ? 1.0 : std::sinh(e) / e;
    double gam1, gam2, gampl, gammi;
    temme_gammas(mu, gam1, gam2, gampl, gammi);
    double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / gampl;
    double q = 0.5 / (e * gammi);
    double c = 1.0;
    d = x2 * x2;
    double sum1 = p;
    int i = 1;
    for (; i <= kMaxIter; ++i) {
      const double di = static_cast<double>(i);
      ff = (di * ff + p + q) / (di * di - mu2);
      c *= d / di;
      p /= di - mu;
      q /= di + mu;
      const double del = c * ff;
      sum += del;
      const double del1 = c * (p - di * ff);
      sum1 += del1;
      if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    kmu = sum;
    kmu1 = sum1 * (2.0 * xi);
    if (scaled) {
      const double ex = std::exp(x);
      kmu *= ex;
      kmu1 *= ex;
    }
    return;
  }
  // Steed's continued fraction CF2 with Temme's normalization.
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  const double a1 = 0.25 - mu2;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 2; i <= kMaxIter; ++i) {
    const double di = static_cast<double>(i);
    a -= 2.0 * (di - 1.0);
    c = -a * c / di;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::fabs(dels / s) < kEps) break;
  }
  h = a1 * h;
  kmu = std::sqrt(std::numbers::pi / (2.0 * x)) / s;
  if (!scaled) kmu *= std::exp(-x);
  kmu1 = kmu * (mu + x + 0.5 - h) * xi;
}

double bessel_k_impl(double nu, double x, bool scaled) {
  if (!(nu >= 0.0) || !std::isfinite(nu)) throw InvalidParameter("bessel_k: order must be >= 0");
  if (!(x > 0.0)) throw InvalidParameter("bessel_k: argument must be > 0");
  const int nl = static_cast<int>(nu + 0.5);
  const double mu = nu - nl;
  double kmu, kmu1;
  bessel_k_pair(mu, x, scaled, kmu, kmu1);
  const double xi2 = 2.0 / x;
  for (int i = 1; i <= nl; ++i) {
    const double next = (mu + i) * xi2 * kmu1 + kmu;
    kmu = kmu1;
    kmu1 = next;
  }
  return kmu;
}

}  // namespace

double bessel_k(double nu, double x) { return bessel_k_impl(nu, x, false); }

double bessel_k_scaled(double nu, double x) { return bessel_k_impl(nu, x, true); }

double matern_function(double nu, double x) {
  if (!(nu > 0.0)) throw InvalidParameter("matern_function: smoothness must be > 0");
  if (x < 0.0) x = -x;
  if (x == 0.0) return 1.0;
  if (nu == 0.5) return std::exp(-x);
  if (nu == 1.5) return (1.0 + x) * std::exp(-x);
  if (nu == 2.5) return (1.0 + x + x * x / 3.0) * std::exp(-x);
  if (x < 1e-30) return 1.0;
  if (x > 745.0) return 0.0;
  // log of 2^{1-nu}/Gamma(nu) x^nu e^{-x} (e^x K_nu(x))
  const double log_m = (1.0 - nu) * std::numbers::ln2 - std::lgamma(nu) + nu * std::log(x) - x +
                       std::log(bessel_k_scaled(nu, x));
  const double m = std::exp(log_m);
  return m > 1.0 ? 1.0 : m;
}

}  // namespace cvecchia
