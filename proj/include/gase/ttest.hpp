#pragma once

#include <vector>

namespace gase {

// One-sided paired t-test p-value for H1: mean(a) < mean(b), with n-1
// degrees of freedom. Degenerate zero-variance samples: all differences
// negative -> 0, otherwise (zero or positive constant) -> 1.
double paired_ttest_less(const std::vector<double>& a,
                         const std::vector<double>& b);

// Student-t CDF via the regularized incomplete beta function.
double student_t_cdf(double t, double dof);

}  // namespace gase
