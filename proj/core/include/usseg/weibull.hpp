#pragma once

#include <span>

namespace usseg {

// Two-parameter Weibull distribution over nonnegative amplitudes.
// scale (a) carries amplitude units, shape (b) is dimensionless.
struct WeibullParams {
    double scale = 1.0;
    double shape = 1.0;
};

namespace weibull {

// Observed amplitudes below this floor are clamped before density
// evaluation; enveloped data can be exactly zero, where the log-density
// diverges for shape < 1. Value is relative to full (normalized) scale.
inline constexpr double kTargetFloor = 1e-6;

// ln f(x | a, b) = ln(b/a) + (b-1) ln(x/a) - (x/a)^b, with x clamped to the
// floor. Throws std::domain_error for non-positive scale or shape.
double log_pdf(double x, const WeibullParams& p);

// Batch-mean negative log-likelihood. Throws std::invalid_argument on an
// empty batch or length mismatch.
double nll(std::span<const double> xs, std::span<const WeibullParams> ps);

struct Grad {
    double d_scale;
    double d_shape;
};

// Analytic partials of -log_pdf(x, p) with respect to scale and shape.
Grad nll_grad(double x, const WeibullParams& p);

// a * Gamma(1 + 1/b).
double mean(const WeibullParams& p);

// CDF(x) = 1 - exp(-(x/a)^b).
double cdf(double x, const WeibullParams& p);

// Inverse CDF: a * (-ln(1-c))^(1/b). Requires 0 < c < 1.
double quantile(const WeibullParams& p, double c);

} // namespace weibull
} // namespace usseg
