#pragma once

#include <vector>

namespace taillab {

// Two-component 1-D Gaussian mixture over per-sample losses. The clean
// component is the lower-mean one. EM runs on min-max normalized values;
// the public parameters are reported back in raw units, with the affine
// map kept so posteriors accept raw loss values.
struct GmmFit {
    double mean_clean = 0.0;
    double mean_noisy = 0.0;
    double var_clean = 0.0;
    double var_noisy = 0.0;
    double weight_clean = 0.5;
    double weight_noisy = 0.5;
    double log_likelihood = 0.0;  // per-point, in normalized units
    int iterations_used = 0;
    bool degenerate = false;
    double norm_lo = 0.0;     // normalized = (raw - norm_lo) / norm_scale
    double norm_scale = 1.0;
    std::vector<double> ll_trace;  // per-iteration log-likelihood, non-decreasing
};

struct GmmConfig {
    int max_iter = 100;
    double tol = 1e-6;        // on per-point log-likelihood in normalized units
    double var_floor = 1e-6;  // in normalized units
};

// Deterministic EM: initialization splits the values at the median. Inputs
// with n < 4 or spread < 1e-6 take the single-component fallback (degenerate
// flag set, both means at the raw mean).
GmmFit fit_gmm2(const std::vector<double>& values, const GmmConfig& config = {});

// P(clean component | value), evaluated in log space. Degenerate fits
// declare everything clean.
double posterior_clean(const GmmFit& fit, double value);

}  // namespace taillab
