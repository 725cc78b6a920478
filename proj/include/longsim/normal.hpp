#pragma once

namespace longsim {

double std_normal_pdf(double x);
double std_normal_cdf(double x);
// Inverse standard normal CDF (Wichura's AS 241, ~1e-16 relative accuracy).
// Returns -inf / +inf at p == 0 / p == 1; NaN outside [0, 1].
double std_normal_quantile(double p);

}  // namespace longsim
