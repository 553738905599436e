#include "dynabench/stats.hpp"

#include "dynabench/error.hpp"
#include "dynabench/random.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dynabench {

double mean(std::span<const double> v) {
    if (v.empty()) throw DegenerateInputError("mean of an empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
    if (v.empty()) throw DegenerateInputError("median of an empty sample");
    const auto mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double hi = v[mid];
    if (v.size() % 2) return hi;
    const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

double sample_variance(std::span<const double> v) {
    if (v.size() < 2) throw DegenerateInputError("variance needs at least two values");
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

double student_t_two_sided(double t, double df) {
    if (!(df > 0.0)) throw NumericError("t distribution needs positive degrees of freedom");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return 0.0;
    const boost::math::students_t dist(df);
    return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

RegressionResult ols(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw DimensionError("ols: x and y lengths differ");
    if (xs.size() < 2) throw DegenerateInputError("ols needs at least two points");
    const auto n = xs.size();
    const double mx = mean(xs);
    const double my = mean(ys);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx <= 0.0) throw DegenerateInputError("ols: x has zero variance");

    RegressionResult r;
    r.n = n;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double scale = 0.0;
    for (double y : ys) scale = std::max(scale, std::abs(y));
    // Variance at rounding level counts as a flat response.
    if (syy <= static_cast<double>(n) * std::pow(1e-13 * scale, 2)) {
        r.degenerate = true;
        r.r2 = 1.0;
        r.slope_p_value = n >= 3 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    r.r2 = std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    if (n < 3) {
        r.slope_p_value = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    const double sse = std::max(0.0, syy - r.slope * sxy);
    const double dof = static_cast<double>(n - 2);
    r.slope_se = std::sqrt(sse / dof / sxx);
    if (r.slope_se == 0.0)
        r.slope_p_value = r.slope == 0.0 ? 1.0 : 0.0;
    else
        r.slope_p_value = student_t_two_sided(r.slope / r.slope_se, dof);
    return r;
}

TestResult welch_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) throw DegenerateInputError("welch_ttest needs two values per sample");
    const double va = sample_variance(a) / static_cast<double>(a.size());
    const double vb = sample_variance(b) / static_cast<double>(b.size());
    if (va <= 0.0 || vb <= 0.0) throw DegenerateInputError("welch_ttest: a sample has zero variance");
    TestResult r;
    r.t_statistic = (mean(a) - mean(b)) / std::sqrt(va + vb);
    r.df = (va + vb) * (va + vb) /
           (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
    r.raw_p = student_t_two_sided(r.t_statistic, r.df);
    r.adjusted_p = r.raw_p;
    return r;
}

std::vector<double> bh_fdr(std::span<const double> p) {
    const auto m = p.size();
    for (double v : p)
        if (!(v >= 0.0 && v <= 1.0)) throw NumericError("bh_fdr: p-values must lie in [0, 1]");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
    std::vector<double> out(m);
    double running = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        const auto i = order[k];
        running = std::min(running, p[i] * static_cast<double>(m) / static_cast<double>(k + 1));
        out[i] = std::min(1.0, std::max(running, p[i]));
    }
    return out;
}

double bootstrap_se(std::span<const double> values, std::size_t resamples, std::uint64_t seed) {
    if (values.size() < 2) throw DegenerateInputError("bootstrap_se needs at least two values");
    if (resamples < 2) throw ConfigError("bootstrap_se needs at least two resamples");
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    std::vector<double> means(resamples);
    for (auto& m : means) {
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) s += values[pick(rng)];
        m = s / static_cast<double>(values.size());
    }
    return std::sqrt(sample_variance(means));
}

}  // namespace dynabench
