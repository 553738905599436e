#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dynabench {

struct RegressionResult {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_p_value = 1.0;  // NaN when n < 3
    double r2 = 0.0;
    std::size_t n = 0;
    double slope_se = 0.0;
    bool degenerate = false;  // y has zero variance; r2 is reported as 1
};

// Simple least squares y = intercept + slope * x, two-sided slope test with
// n - 2 degrees of freedom. Throws DegenerateInputError when x is constant.
RegressionResult ols(std::span<const double> xs, std::span<const double> ys);

struct TestResult {
    double t_statistic = 0.0;
    double raw_p = 1.0;
    double adjusted_p = 1.0;  // filled by the caller after a family correction
    double df = 0.0;
};

TestResult welch_ttest(std::span<const double> a, std::span<const double> b);

// Two-sided tail probability P(|T| >= |t|) for Student's t.
double student_t_two_sided(double t, double df);

// Benjamini-Hochberg step-up adjustment, input order preserved.
std::vector<double> bh_fdr(std::span<const double> p_values);

double bootstrap_se(std::span<const double> values, std::size_t resamples, std::uint64_t seed);

double mean(std::span<const double> v);
double median(std::vector<double> v);
double sample_variance(std::span<const double> v);

}  // namespace dynabench
