#include "taillab/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace taillab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kMinSpread = 1e-6;

struct Params {
    double mean[2];
    double var[2];
    double weight[2];
};

double log_density(double v, double mean, double var) {
    const double d = v - mean;
    return -0.5 * (std::log(kTwoPi * var) + d * d / var);
}

// Responsibilities of component 0 plus the per-point log-likelihood.
double e_step(const std::vector<double>& values, const Params& p, std::vector<double>& resp0) {
    double ll = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double a = std::log(p.weight[0]) + log_density(values[k], p.mean[0], p.var[0]);
        const double b = std::log(p.weight[1]) + log_density(values[k], p.mean[1], p.var[1]);
        const double m = std::max(a, b);
        const double ea = std::exp(a - m);
        const double eb = std::exp(b - m);
        resp0[k] = ea / (ea + eb);
        ll += m + std::log(ea + eb);
    }
    return ll / static_cast<double>(values.size());
}

void m_step(const std::vector<double>& values, const std::vector<double>& resp0,
            double var_floor, Params& p) {
    const double n = static_cast<double>(values.size());
    for (int comp = 0; comp < 2; ++comp) {
        double rsum = 0.0, mean = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double r = comp == 0 ? resp0[k] : 1.0 - resp0[k];
            rsum += r;
            mean += r * values[k];
        }
        if (rsum < 1e-300) {
            // component died; keep its parameters, weight goes to ~0
            p.weight[comp] = rsum / n;
            continue;
        }
        mean /= rsum;
        double var = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double r = comp == 0 ? resp0[k] : 1.0 - resp0[k];
            const double d = values[k] - mean;
            var += r * d * d;
        }
        var = std::max(var / rsum, var_floor);
        p.mean[comp] = mean;
        p.var[comp] = var;
        p.weight[comp] = rsum / n;
    }
}

}  // namespace

GmmFit fit_gmm2(const std::vector<double>& values, const GmmConfig& config) {
    if (values.empty()) throw std::invalid_argument("fit_gmm2: empty input");
    if (config.max_iter < 1) throw std::invalid_argument("fit_gmm2: max_iter must be >= 1");
    if (!(config.var_floor > 0.0)) throw std::invalid_argument("fit_gmm2: var_floor must be > 0");

    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double lo = *lo_it;
    const double spread = *hi_it - lo;

    GmmFit fit;
    if (values.size() < 4 || spread < kMinSpread) {
        const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                            static_cast<double>(values.size());
        fit.degenerate = true;
        fit.mean_clean = fit.mean_noisy = mean;
        fit.var_clean = fit.var_noisy = config.var_floor;
        fit.weight_clean = fit.weight_noisy = 0.5;
        return fit;
    }

    std::vector<double> norm(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) norm[k] = (values[k] - lo) / spread;

    // Median split of the sorted values seeds the two components.
    std::vector<double> sorted = norm;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t half = sorted.size() / 2;
    Params p{};
    for (int comp = 0; comp < 2; ++comp) {
        const std::size_t begin = comp == 0 ? 0 : half;
        const std::size_t end = comp == 0 ? half : sorted.size();
        const double n = static_cast<double>(end - begin);
        double mean = 0.0;
        for (std::size_t k = begin; k < end; ++k) mean += sorted[k];
        mean /= n;
        double var = 0.0;
        for (std::size_t k = begin; k < end; ++k) {
            const double d = sorted[k] - mean;
            var += d * d;
        }
        p.mean[comp] = mean;
        p.var[comp] = std::max(var / n, config.var_floor);
        p.weight[comp] = n / static_cast<double>(sorted.size());
    }

    std::vector<double> resp0(norm.size());
    Params prev = p;
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < config.max_iter; ++iter) {
        const double ll = e_step(norm, p, resp0);
        if (iter > 0 && ll < prev_ll) {
            // The variance floor can make a constrained M-step lose
            // likelihood; stop at the last improving parameters.
            p = prev;
            break;
        }
        fit.ll_trace.push_back(ll);
        fit.iterations_used = iter + 1;
        if (iter > 0 && std::abs(ll - prev_ll) < config.tol) {
            prev_ll = ll;
            break;
        }
        prev_ll = ll;
        prev = p;
        m_step(norm, resp0, config.var_floor, p);
    }
    fit.log_likelihood = fit.ll_trace.empty() ? -std::numeric_limits<double>::infinity()
                                              : fit.ll_trace.back();

    const int clean = p.mean[0] <= p.mean[1] ? 0 : 1;
    const int noisy = 1 - clean;
    fit.norm_lo = lo;
    fit.norm_scale = spread;
    fit.mean_clean = lo + spread * p.mean[clean];
    fit.mean_noisy = lo + spread * p.mean[noisy];
    fit.var_clean = spread * spread * p.var[clean];
    fit.var_noisy = spread * spread * p.var[noisy];
    fit.weight_clean = p.weight[clean];
    fit.weight_noisy = p.weight[noisy];
    return fit;
}

double posterior_clean(const GmmFit& fit, double value) {
    if (fit.degenerate) return 1.0;
    if (fit.weight_clean <= 0.0) return 0.0;
    if (fit.weight_noisy <= 0.0) return 1.0;
    const double a = std::log(fit.weight_clean) + log_density(value, fit.mean_clean, fit.var_clean);
    const double b = std::log(fit.weight_noisy) + log_density(value, fit.mean_noisy, fit.var_noisy);
    const double m = std::max(a, b);
    const double ea = std::exp(a - m);
    const double eb = std::exp(b - m);
    return ea / (ea + eb);
}

}  // namespace taillab
