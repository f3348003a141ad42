#include "usseg/weibull.hpp"

#include <cmath>
#include <stdexcept>

namespace usseg {
namespace weibull {

namespace {

void check_params(const WeibullParams& p) {
    if (!(p.scale > 0.0) || !(p.shape > 0.0))
        throw std::domain_error("weibull: scale and shape must be positive");
}

// exp with the exponent capped so extreme shape predictions saturate
// instead of overflowing to inf during training.
double guarded_pow_term(double log_ratio, double shape) {
    double t = shape * log_ratio;
    if (t > 700.0) t = 700.0;
    return std::exp(t);
}

} // namespace

double log_pdf(double x, const WeibullParams& p) {
    check_params(p);
    if (x < 0.0) throw std::domain_error("weibull: x must be nonnegative");
    if (x < kTargetFloor) x = kTargetFloor;
    const double log_ratio = std::log(x / p.scale);
    return std::log(p.shape / p.scale) + (p.shape - 1.0) * log_ratio -
           guarded_pow_term(log_ratio, p.shape);
}

double nll(std::span<const double> xs, std::span<const WeibullParams> ps) {
    if (xs.empty()) throw std::invalid_argument("weibull::nll: empty batch");
    if (xs.size() != ps.size())
        throw std::invalid_argument("weibull::nll: batch length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) acc -= log_pdf(xs[i], ps[i]);
    return acc / static_cast<double>(xs.size());
}

Grad nll_grad(double x, const WeibullParams& p) {
    check_params(p);
    if (x < 0.0) throw std::domain_error("weibull: x must be nonnegative");
    if (x < kTargetFloor) x = kTargetFloor;
    const double a = p.scale;
    const double b = p.shape;
    const double log_ratio = std::log(x / a);
    const double pow_term = guarded_pow_term(log_ratio, b);
    Grad g;
    g.d_scale = b / a - b * pow_term / a;
    g.d_shape = -1.0 / b - log_ratio + pow_term * log_ratio;
    return g;
}

double mean(const WeibullParams& p) {
    check_params(p);
    return p.scale * std::tgamma(1.0 + 1.0 / p.shape);
}

double cdf(double x, const WeibullParams& p) {
    check_params(p);
    if (x <= 0.0) return 0.0;
    return -std::expm1(-std::pow(x / p.scale, p.shape));
}

double quantile(const WeibullParams& p, double c) {
    check_params(p);
    if (!(c > 0.0) || !(c < 1.0))
        throw std::invalid_argument("weibull::quantile: c must be in (0,1)");
    return p.scale * std::pow(-std::log1p(-c), 1.0 / p.shape);
}

} // namespace weibull
} // namespace usseg
