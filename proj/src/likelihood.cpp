#include "likelihood.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace u5apc {

double expit(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

LikTerms betabinomial_loglik(double y, double n, double eta, double d) {
    if (!(d > 0.0) || !(d < 1.0)) {
        throw std::invalid_argument("beta-binomial overdispersion must lie in (0, 1)");
    }
    if (y < 0.0 || y > n) throw std::invalid_argument("need 0 <= y <= n");
    const double s = (1.0 - d) / d;  // alpha + beta
    double pi = expit(eta);
    pi = std::min(std::max(pi, 1e-12), 1.0 - 1e-12);
    const double a = s * pi;        // alpha
    const double b = s * (1.0 - pi);  // beta

    LikTerms t;
    // Terms in alpha+beta are constant in eta and enter the value only.
    t.value = std::lgamma(n + 1.0) - std::lgamma(y + 1.0) - std::lgamma(n - y + 1.0) +
              std::lgamma(y + a) - std::lgamma(a) + std::lgamma(n - y + b) - std::lgamma(b) +
              std::lgamma(s) - std::lgamma(n + s);

    double g1 = 0.0;  // dG/dpi
    double g2 = 0.0;  // d2G/dpi2
    if (y > 0.0) {
        g1 += s * (boost::math::digamma(y + a) - boost::math::digamma(a));
        g2 += s * s * (boost::math::trigamma(y + a) - boost::math::trigamma(a));
    }
    if (n - y > 0.0) {
        g1 -= s * (boost::math::digamma(n - y + b) - boost::math::digamma(b));
        g2 += s * s * (boost::math::trigamma(n - y + b) - boost::math::trigamma(b));
    }
    const double dpi = pi * (1.0 - pi);
    const double d2pi = dpi * (1.0 - 2.0 * pi);
    t.d1 = g1 * dpi;
    t.d2 = g2 * dpi * dpi + g1 * d2pi;
    return t;
}

double betabinomial_logpmf(long long y, long long n, double pi, double d) {
    return betabinomial_loglik(static_cast<double>(y), static_cast<double>(n), logit(pi), d)
        .value;
}

LikTerms gaussian_loglik(double y, double variance, double eta) {
    if (!(variance > 0.0)) throw std::invalid_argument("gaussian variance must be positive");
    LikTerms t;
    const double r = y - eta;
    t.value = -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * r * r / variance;
    t.d1 = r / variance;
    t.d2 = -1.0 / variance;
    return t;
}

} // namespace u5apc
