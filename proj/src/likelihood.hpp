#pragma once

namespace u5apc {

// Log-likelihood value with first and second derivatives wrt the linear
// predictor eta.
struct LikTerms {
    double value = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

// Beta-binomial cluster-level likelihood: y | pi, d ~ BetaBinomial(n, pi, d)
// with mean parameter pi = expit(eta) and shapes (pi (1-d)/d, (1-pi) (1-d)/d).
// The overdispersion d must lie strictly inside (0, 1); d -> 0 recovers the
// binomial.
LikTerms betabinomial_loglik(double y, double n, double eta, double d);

// Direct pmf evaluation (natural parameters), used by oracles and tests.
double betabinomial_logpmf(long long y, long long n, double pi, double d);

// Gaussian pseudo-observation y ~ N(eta, variance); the conjugate substitute
// used for validating the inference engine and by the Fay-Herriot smoother.
LikTerms gaussian_loglik(double y, double variance, double eta);

double expit(double x);
double logit(double p);

} // namespace u5apc
