#pragma once

namespace ebgmrf {

double normal_pdf(double z);
double normal_cdf(double z);

/// Inverse standard normal CDF, accurate to ~1e-15.
double normal_quantile(double p);

}  // namespace ebgmrf
